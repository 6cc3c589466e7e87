// SPDX-License-Identifier: Apache-2.0
#include "adaguide/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "adaguide/errors.hpp"

namespace adaguide {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string content_hash(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : obj.items())
        if (!ok.count(key)) throw InvalidInput("unknown key '" + key + "' in " + where);
}

}  // namespace

LoadedModel parse_model(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("model file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw InvalidInput("model file must be a JSON object");
    std::vector<std::string> warnings;
    std::size_t dim = 0;
    double horizon = 5.0;
    std::vector<Component> comps;
    try {
        reject_unknown(j, {"dim", "T", "components"}, "model");
        dim = j.at("dim").get<std::size_t>();
        if (j.contains("T")) horizon = j.at("T").get<double>();
        const auto& arr = j.at("components");
        if (!arr.is_array()) throw InvalidInput("'components' must be an array");
        for (const auto& cj : arr) {
            reject_unknown(cj, {"weight", "mean", "variance", "class"}, "component");
            Component c;
            c.weight = cj.at("weight").get<double>();
            c.mean = cj.at("mean").get<std::vector<double>>();
            c.variance = cj.at("variance").get<double>();
            c.label = cj.at("class").get<int>();
            comps.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed model file: ") + e.what());
    }
    double total = 0.0;
    for (const auto& c : comps) {
        if (!(c.weight > 0.0) || !std::isfinite(c.weight))
            throw InvalidInput("component weights must be positive");
        total += c.weight;
    }
    if (comps.empty()) throw InvalidInput("model has no components");
    if (std::abs(total - 1.0) > 1e-9) {
        std::ostringstream os;
        os.precision(17);
        os << "component weights sum to " << total << "; normalized to 1";
        warnings.push_back(os.str());
    }
    for (auto& c : comps) c.weight /= total;
    // Renormalize once more so the sum is 1 to within rounding.
    double again = 0.0;
    for (const auto& c : comps) again += c.weight;
    for (auto& c : comps) c.weight /= again;

    return {MixtureModel(dim, std::move(comps), horizon), content_hash(text), std::move(warnings)};
}

LoadedModel load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

std::string model_to_json(const MixtureModel& model) {
    nlohmann::ordered_json j;
    j["dim"] = model.dim();
    j["T"] = model.horizon();
    j["components"] = nlohmann::ordered_json::array();
    for (const auto& c : model.components()) {
        nlohmann::ordered_json cj;
        cj["weight"] = c.weight;
        cj["mean"] = c.mean;
        cj["variance"] = c.variance;
        cj["class"] = c.label;
        j["components"].push_back(cj);
    }
    return j.dump(2) + "\n";
}

}  // namespace adaguide
