// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>

#include <json.hpp>

#include "adaguide/cli.hpp"
#include "adaguide/errors.hpp"
#include "adaguide/io.hpp"

using namespace adaguide;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("adaguide_cli_" + name);
    fs::remove_all(p);
    return p;
}

const char* kUninformative = R"({"dim": 2, "components": [
    {"weight": 0.5, "mean": [1, 0], "variance": 0.5, "class": 4},
    {"weight": 0.5, "mean": [-1, 0], "variance": 0.5, "class": 4}]})";

RunConfig small(const std::string& command, const fs::path& out, nlohmann::json extra = {}) {
    nlohmann::json o = {{"out", out.string()}, {"steps", 16}, {"paths", 64}, {"ito_paths", 32},
                        {"workers", 1}};
    if (!extra.is_null()) o.update(extra);
    return resolve_config(command, "", o);
}

}  // namespace

TEST(Cli, ConfigPrecedenceAndUnknownKeys) {
    const auto dir = scratch("cfg");
    fs::create_directories(dir);
    write_file(dir / "c.json", R"({"alpha": 2.5, "seed": 9, "method": "euler"})");
    const auto cfg = resolve_config("train", (dir / "c.json").string(),
                                    {{"out", "x"}, {"seed", 11}});
    EXPECT_EQ(cfg.alpha, 2.5);
    EXPECT_EQ(cfg.seed, 11u);
    EXPECT_EQ(cfg.method, "euler");
    const auto j = resolved_config_json(cfg);
    EXPECT_EQ(j["init_w"].get<double>(), 0.4);
    EXPECT_EQ(j["paths"].get<int>(), 256);
    EXPECT_TRUE(j["antithetic"].get<bool>());

    write_file(dir / "bad.json", R"({"alpah": 2.5})");
    EXPECT_THROW((void)resolve_config("train", (dir / "bad.json").string(), {{"out", "x"}}), InvalidInput);
    EXPECT_THROW((void)resolve_config("train", "", {{"out", "x"}, {"seed", -1}}), InvalidInput);
    EXPECT_THROW((void)resolve_config("train", "", {{"out", "x"}, {"method", "rk4"}}), InvalidInput);
    EXPECT_THROW((void)resolve_config("train", "", nlohmann::json::object()), InvalidInput);
    EXPECT_THROW((void)resolve_config("plot", "", {{"out", "x"}}), InvalidInput);
    fs::remove_all(dir);
}

TEST(Cli, VerifyUninformativeModelPasses) {
    const auto dir = scratch("verify_uninf");
    fs::create_directories(dir);
    write_file(dir / "m.json", kUninformative);
    const auto cfg = small("verify", dir / "out", {{"model", (dir / "m.json").string()}});
    EXPECT_EQ(run_command(cfg), kExitOk);
    const auto report = nlohmann::json::parse(read_file(dir / "out" / "report.json"));
    EXPECT_TRUE(report["all_pass"].get<bool>());
    const auto meta = nlohmann::json::parse(read_file(dir / "out" / "metadata.json"));
    EXPECT_EQ(meta["model_hash"].get<std::string>(), content_hash(kUninformative));
    EXPECT_EQ(meta["version"].get<std::string>(), tool_version());
    fs::remove_all(dir);
}

TEST(Cli, CorruptModelLeavesNoOutputs) {
    const auto dir = scratch("corrupt");
    fs::create_directories(dir);
    write_file(dir / "m.json", "{\"dim\": 2, \"components\": [");
    const auto cfg = small("verify", dir / "out", {{"model", (dir / "m.json").string()}});
    EXPECT_EQ(run_command(cfg), kExitConfig);
    EXPECT_FALSE(fs::exists(dir / "out"));
    const auto missing = small("simulate", dir / "out2", {{"model", (dir / "nope.json").string()}});
    EXPECT_EQ(run_command(missing), kExitConfig);
    EXPECT_FALSE(fs::exists(dir / "out2"));
    fs::remove_all(dir);
}

TEST(Cli, HjbUninformativeSlicesAreInverseAlpha) {
    const auto dir = scratch("hjb");
    fs::create_directories(dir);
    write_file(dir / "m.json", kUninformative);
    const auto cfg = small("hjb", dir / "out",
                           {{"model", (dir / "m.json").string()}, {"h", 0.5}, {"half_width", 2.0},
                            {"alpha", 4.0}});
    const auto out = execute(cfg);
    EXPECT_EQ(out.exit_code, kExitOk);
    std::size_t slices = 0;
    for (const auto& [name, bytes] : out.files) {
        if (name.find("_slice") == std::string::npos) continue;
        ++slices;
        std::istringstream in(bytes);
        std::string line;
        std::getline(in, line);
        EXPECT_EQ(line, "x1,x2,V,w_star");
        while (std::getline(in, line)) EXPECT_EQ(line.substr(line.rfind(',') + 1), "0.25");
    }
    EXPECT_EQ(slices, 6u);
    EXPECT_TRUE(out.files.count("class4_grid.json"));
}

TEST(Cli, TrainZeroIterationsKeepsInitialization) {
    const auto dir = scratch("train0");
    const auto out = execute(small("train", dir, {{"iterations", 0}, {"classes", {0}}}));
    EXPECT_EQ(out.exit_code, kExitOk);
    EXPECT_EQ(out.files.at("schedule_final.json"), out.files.at("schedule_init.json"));
    EXPECT_EQ(out.files.at("training_log.csv"), "iteration,mean_reward,stderr,grad_norm,clip_events\n");
}

TEST(Cli, RunsAreByteIdentical) {
    const auto dir = scratch("repro");
    for (const char* cmd : {"train", "simulate", "verify"}) {
        const auto cfg = small(cmd, dir, {{"iterations", 2}, {"classes", {0, 1}}});
        const auto a = execute(cfg);
        auto cfg2 = cfg;
        cfg2.workers = 3;
        const auto b = execute(cfg2);
        ASSERT_EQ(a.files.size(), b.files.size());
        for (const auto& [name, bytes] : a.files) {
            if (name == "metadata.json") continue;  // records the worker count
            EXPECT_TRUE(bytes == b.files.at(name)) << cmd << " " << name;
        }
        EXPECT_TRUE(a.files.at("metadata.json") == execute(cfg).files.at("metadata.json"));
    }
}

TEST(Cli, DivergenceMapsToExitCode) {
    const auto dir = scratch("diverge");
    fs::create_directories(dir);
    write_file(dir / "m.json", R"({"dim": 2, "components": [
        {"weight": 0.5, "mean": [0, 0], "variance": 0.01, "class": 0},
        {"weight": 0.5, "mean": [0, 0], "variance": 4.0, "class": 1}]})");
    const auto cfg = small("simulate", dir / "out",
                           {{"model", (dir / "m.json").string()}, {"w", 1e5}, {"classes", {0}}, {"steps", 128}, {"method", "euler"}});
    EXPECT_EQ(run_command(cfg), kExitDivergence);
    EXPECT_FALSE(fs::exists(dir / "out"));
    fs::remove_all(dir);
}
