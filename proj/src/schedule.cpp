// SPDX-License-Identifier: Apache-2.0
#include "adaguide/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "adaguide/errors.hpp"
#include "adaguide/io.hpp"

namespace adaguide {

double softplus(double x) noexcept {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inverse(double w) {
    if (!(w > 0.0) || !std::isfinite(w)) throw InvalidInput("softplus inverse needs w > 0");
    return w + std::log(-std::expm1(-w));
}

double logistic(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {

void check_cap(double cap) {
    if (!(cap > 0.0)) throw InvalidInput("guidance cap must be positive");
}

void check_target(double w, double cap) {
    if (!(w > 0.0) || !std::isfinite(w)) throw InvalidInput("guidance target must be positive");
    if (w > cap) throw InvalidInput("guidance target exceeds the cap");
}

const char* kind_name(GuidanceSchedule::Kind k) {
    switch (k) {
        case GuidanceSchedule::Kind::constant: return "constant";
        case GuidanceSchedule::Kind::per_node_table: return "per_node_table";
        case GuidanceSchedule::Kind::per_node_per_class_table: return "per_node_per_class_table";
        case GuidanceSchedule::Kind::raw_constant: return "raw_constant";
    }
    return "";
}

}  // namespace

GuidanceSchedule GuidanceSchedule::make_constant(double w0, double cap) {
    check_cap(cap);
    check_target(w0, cap);
    GuidanceSchedule s;
    s.kind_ = Kind::constant;
    s.cap_ = cap;
    s.theta_ = {softplus_inverse(w0)};
    return s;
}

GuidanceSchedule GuidanceSchedule::make_table(const TimeGrid& grid, double init_w, double cap) {
    check_cap(cap);
    check_target(init_w, cap);
    GuidanceSchedule s;
    s.kind_ = Kind::per_node_table;
    s.cap_ = cap;
    s.nodes_ = grid.nodes;
    s.theta_.assign(grid.size(), softplus_inverse(init_w));
    return s;
}

GuidanceSchedule GuidanceSchedule::make_class_table(const TimeGrid& grid, std::vector<int> classes,
                                                    double init_w, double cap) {
    check_cap(cap);
    check_target(init_w, cap);
    if (classes.empty()) throw InvalidInput("per-class table needs at least one class");
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    GuidanceSchedule s;
    s.kind_ = Kind::per_node_per_class_table;
    s.cap_ = cap;
    s.nodes_ = grid.nodes;
    s.classes_ = std::move(classes);
    s.theta_.assign(grid.size() * s.classes_.size(), softplus_inverse(init_w));
    return s;
}

GuidanceSchedule GuidanceSchedule::make_raw_constant(double w) {
    if (!std::isfinite(w)) throw InvalidInput("raw guidance must be finite");
    GuidanceSchedule s;
    s.kind_ = Kind::raw_constant;
    s.raw_ = w;
    return s;
}

std::size_t GuidanceSchedule::node_of(double t) const {
    if (!(t >= 0.0) || !std::isfinite(t)) throw InvalidInput("schedule time must be >= 0");
    const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t);
    if (it == nodes_.begin()) return 0;
    if (it == nodes_.end()) return nodes_.size() - 1;
    const std::size_t hi = static_cast<std::size_t>(it - nodes_.begin());
    const std::size_t lo = hi - 1;
    return (t - nodes_[lo] <= nodes_[hi] - t) ? lo : hi;
}

std::size_t GuidanceSchedule::class_slot(int c) const {
    const auto it = std::lower_bound(classes_.begin(), classes_.end(), c);
    if (it == classes_.end() || *it != c)
        throw InvalidInput("schedule has no parameters for class " + std::to_string(c));
    return static_cast<std::size_t>(it - classes_.begin());
}

std::size_t GuidanceSchedule::param_index(double t, int c) const {
    switch (kind_) {
        case Kind::constant:
            if (!(t >= 0.0)) throw InvalidInput("schedule time must be >= 0");
            return 0;
        case Kind::per_node_table: return node_of(t);
        case Kind::per_node_per_class_table: return class_slot(c) * nodes_.size() + node_of(t);
        case Kind::raw_constant: break;
    }
    throw InvalidInput("raw constant schedule has no parameters");
}

double GuidanceSchedule::eval_w(double t, int c) const {
    if (kind_ == Kind::raw_constant) return raw_;
    return std::min(softplus(theta_[param_index(t, c)]), cap_);
}

SparseGrad GuidanceSchedule::grad_w_wrt_params(double t, int c) const {
    if (kind_ == Kind::raw_constant) return {0, 0.0};
    const std::size_t i = param_index(t, c);
    const double th = theta_[i];
    return {i, softplus(th) >= cap_ ? 0.0 : logistic(th)};
}

std::string GuidanceSchedule::to_json() const {
    nlohmann::json j;
    j["kind"] = kind_name(kind_);
    j["cap"] = cap_;
    j["raw_value"] = raw_;
    j["nodes"] = nodes_;
    j["classes"] = classes_;
    j["theta"] = theta_;
    return j.dump(2, ' ', false, nlohmann::json::error_handler_t::strict);
}

GuidanceSchedule GuidanceSchedule::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("schedule checkpoint is not valid JSON: ") + e.what());
    }
    GuidanceSchedule s;
    try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "constant") s.kind_ = Kind::constant;
        else if (kind == "per_node_table") s.kind_ = Kind::per_node_table;
        else if (kind == "per_node_per_class_table") s.kind_ = Kind::per_node_per_class_table;
        else if (kind == "raw_constant") s.kind_ = Kind::raw_constant;
        else throw InvalidInput("unknown schedule kind '" + kind + "'");
        s.cap_ = j.at("cap").get<double>();
        s.raw_ = j.value("raw_value", 0.0);
        s.nodes_ = j.at("nodes").get<std::vector<double>>();
        s.classes_ = j.at("classes").get<std::vector<int>>();
        s.theta_ = j.at("theta").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed schedule checkpoint: ") + e.what());
    }
    std::size_t expected = 0;
    switch (s.kind_) {
        case Kind::constant: expected = 1; break;
        case Kind::per_node_table: expected = s.nodes_.size(); break;
        case Kind::per_node_per_class_table: expected = s.nodes_.size() * s.classes_.size(); break;
        case Kind::raw_constant: expected = 0; break;
    }
    if (s.theta_.size() != expected) throw InvalidInput("schedule checkpoint has wrong theta size");
    if (s.kind_ != Kind::raw_constant) check_cap(s.cap_);
    if (!std::is_sorted(s.nodes_.begin(), s.nodes_.end()) ||
        !std::is_sorted(s.classes_.begin(), s.classes_.end()))
        throw InvalidInput("schedule checkpoint nodes and classes must be sorted");
    return s;
}

void GuidanceSchedule::write_csv(std::ostream& os, std::span<const int> classes) const {
    os << "t_k,class,w_k\n";
    const std::vector<double> single{0.0};
    const auto& times = nodes_.empty() ? single : nodes_;
    for (int c : classes)
        for (double t : times)
            os << format_double(t) << ',' << c << ',' << format_double(eval_w(t, c)) << '\n';
}

}  // namespace adaguide
