// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "adaguide/cli.hpp"
#include "adaguide/errors.hpp"

namespace {

bool is_string_key(const std::string& k) {
    return k == "model" || k == "out" || k == "method" || k == "optimizer";
}
bool is_list_key(const std::string& k) {
    return k == "classes" || k == "deltas" || k == "slice_times";
}
bool is_bool_key(const std::string& k) { return k == "antithetic" || k == "drop_guidance_hessian"; }

// Flag text to the JSON value the config file would hold for the same key.
nlohmann::json flag_value(const std::string& key, const std::string& text) {
    if (is_string_key(key)) return text;
    const std::string src = is_list_key(key) && (text.empty() || text.front() != '[') ? "[" + text + "]" : text;
    try {
        return nlohmann::json::parse(src);
    } catch (const nlohmann::json::exception&) {
        throw adaguide::InvalidInput("cannot parse value '" + text + "' for --" + key);
    }
}

std::string dashed(std::string k) {
    for (auto& ch : k)
        if (ch == '_') ch = '-';
    return k;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive guidance schedules on analytic mixture targets"};
    app.set_version_flag("--version", std::string(adaguide::tool_version()));
    app.require_subcommand(1);
    // "--h" is the grid spacing, so help is long-form only.
    app.set_help_flag("--help", "Print this help message and exit");

    std::string config_file;
    std::map<std::string, std::string> values;
    const std::map<std::string, std::string> help{
        {"verify", "Run the martingale, Doob, Ito, decomposition, KL and support checks"},
        {"hjb", "Solve the HJB equation and export value and w* slices"},
        {"train", "Train a per-node guidance schedule with the adjoint method"},
        {"simulate", "Simulate the guided reverse SDE with constant guidance"},
        {"export-figure1", "HJB slices at the six figure panel times"}};
    for (const auto& [name, text] : help) {
        auto* sub = app.add_subcommand(name, text);
        sub->set_help_flag("--help", "Print this help message and exit");
        sub->add_option("--config", config_file, "JSON config file; flags take precedence");
        for (const auto& key : adaguide::config_keys()) {
            std::string names = "--" + dashed(key);
            if (key == "classes") names += ",--class";
            if (is_bool_key(key))
                sub->add_flag(names + "{true}", values[key], "Config key " + key);
            else
                sub->add_option(names, values[key], "Config key " + key);
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? adaguide::kExitOk : adaguide::kExitConfig;
    }

    try {
        const std::string command = app.get_subcommands().front()->get_name();
        auto* sub = app.get_subcommands().front();
        nlohmann::json overrides = nlohmann::json::object();
        for (const auto& key : adaguide::config_keys())
            if (sub->count("--" + dashed(key)) > 0) overrides[key] = flag_value(key, values[key]);
        const auto cfg = adaguide::resolve_config(command, config_file, overrides);
        return adaguide::run_command(cfg);
    } catch (const adaguide::InvalidInput& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return adaguide::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
