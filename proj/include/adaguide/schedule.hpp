// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "adaguide/time_grid.hpp"

namespace adaguide {

[[nodiscard]] double softplus(double x) noexcept;
/// log(e^w - 1) for w > 0.
[[nodiscard]] double softplus_inverse(double w);
/// Derivative of softplus.
[[nodiscard]] double logistic(double x) noexcept;

/// One nonzero entry of dw/dtheta.
struct SparseGrad {
    std::size_t index = 0;
    double value = 0.0;
};

/// Guidance strength w_theta(t, c) = min(softplus(theta), cap), with theta
/// either a single scalar or one scalar per time node (optionally per class).
/// Off-grid times use the nearest node; midpoints go to the earlier node.
///
/// The raw_constant kind returns its value unchanged (any sign, no cap) and
/// has no parameters; it exists for w = 0 baselines and negative-guidance
/// experiments and sits outside the positivity contract.
class GuidanceSchedule {
public:
    enum class Kind { constant, per_node_table, per_node_per_class_table, raw_constant };

    static constexpr double kDefaultCap = 50.0;

    static GuidanceSchedule make_constant(double w0, double cap = kDefaultCap);
    static GuidanceSchedule make_table(const TimeGrid& grid, double init_w,
                                       double cap = kDefaultCap);
    static GuidanceSchedule make_class_table(const TimeGrid& grid, std::vector<int> classes,
                                             double init_w, double cap = kDefaultCap);
    static GuidanceSchedule make_raw_constant(double w);

    [[nodiscard]] double eval_w(double t, int c) const;
    [[nodiscard]] SparseGrad grad_w_wrt_params(double t, int c) const;
    [[nodiscard]] std::size_t param_index(double t, int c) const;

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] double cap() const noexcept { return cap_; }
    [[nodiscard]] const std::vector<double>& nodes() const noexcept { return nodes_; }
    [[nodiscard]] const std::vector<int>& classes() const noexcept { return classes_; }
    [[nodiscard]] std::span<const double> params() const noexcept { return theta_; }
    [[nodiscard]] std::span<double> params() noexcept { return theta_; }
    [[nodiscard]] double raw_value() const noexcept { return raw_; }

    /// JSON checkpoint of the raw parameters.
    [[nodiscard]] std::string to_json() const;
    static GuidanceSchedule from_json(const std::string& text);
    /// CSV rows (t_k, class, w_k) at every node for each class in `classes`.
    void write_csv(std::ostream& os, std::span<const int> classes) const;

private:
    GuidanceSchedule() = default;
    [[nodiscard]] std::size_t node_of(double t) const;
    [[nodiscard]] std::size_t class_slot(int c) const;

    Kind kind_ = Kind::constant;
    double cap_ = kDefaultCap;
    double raw_ = 0.0;
    std::vector<double> nodes_;
    std::vector<int> classes_;
    std::vector<double> theta_;
};

}  // namespace adaguide
