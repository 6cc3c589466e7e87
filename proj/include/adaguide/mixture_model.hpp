// SPDX-License-Identifier: Apache-2.0
//
// Gaussian / point-mass mixtures pushed through the forward Ornstein-Uhlenbeck
// process dX = -X dt + sqrt(2) dB. All densities and their derivatives are
// closed form.
//
// Two clocks are used and never mixed:
//   forward time  s in [0, T]  (noising direction, X_s)
//   backward time t in [0, T]  (sampling direction, Y_t = X_{T-t})
// Functions taking `forward_time` evaluate p_s; the guiding-field family takes
// `backward_time` and evaluates at s = T - t.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace adaguide {

struct Component {
    double weight = 0.0;
    std::vector<double> mean;
    double variance = 0.0;  // isotropic; 0 encodes a point mass
    int label = 0;          // class
};

/// Componentwise law of X_s given X_0 drawn from one component.
struct ForwardLaw {
    double forward_time = 0.0;
    std::vector<std::vector<double>> means;  // e^{-s} m_i
    std::vector<double> variances;           // sigma_i^2 e^{-2s} + 1 - e^{-2s}
};

/// Log densities and score terms at one (s, x, c). Buffers are reused across calls.
struct LocalFields {
    std::size_t dim = 0;
    double log_p = 0.0;       // log p_s(x)
    double log_p_cond = 0.0;  // log p_s(x | c)
    double log_post = 0.0;    // log p_s(c | x)
    std::vector<double> score;       // grad log p_s(x)
    std::vector<double> cond_score;  // grad log p_s(x | c)
    std::vector<double> grad_g;      // cond_score - score, accumulated per component
    std::vector<double> resp;        // r_i over all components
    std::vector<double> resp_cond;   // r_i over the class sub-mixture (0 outside)
    std::vector<double> comp_score;  // K x dim, (e^{-s} m_i - x) / v_i
    std::vector<double> inv_var;     // 1 / v_i

    [[nodiscard]] double grad_g_norm2() const;
};

class MixtureModel {
public:
    /// Weights must already sum to 1 within 1e-12; see io::load_model for normalization.
    MixtureModel(std::size_t dim, std::vector<Component> components, double horizon = 5.0);

    /// Four isotropic Gaussians: one at the origin (class 0) and three on an
    /// equilateral triangle of the given circumradius (classes 1 to 3).
    /// The first vertex sits at 90 degrees, so the model is symmetric under x1 -> -x1.
    static MixtureModel four_gaussian_triangle(double circumradius = 2.0, double variance = 0.5,
                                               double horizon = 5.0);

    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] double horizon() const noexcept { return horizon_; }
    [[nodiscard]] const std::vector<Component>& components() const noexcept { return components_; }
    [[nodiscard]] std::vector<int> classes() const;
    [[nodiscard]] bool has_class(int c) const;
    [[nodiscard]] double class_prior(int c) const;
    [[nodiscard]] bool has_point_masses() const;
    [[nodiscard]] bool all_point_masses() const;

    /// max_i(|m_i| + 3 sigma_i); reduces to max_i |m_i| for point-mass models.
    [[nodiscard]] double support_radius() const;

    [[nodiscard]] ForwardLaw forward_law(double forward_time) const;

    [[nodiscard]] double log_marginal(double forward_time, std::span<const double> x) const;
    [[nodiscard]] double log_conditional(double forward_time, std::span<const double> x, int c) const;
    [[nodiscard]] double log_posterior(double forward_time, std::span<const double> x, int c) const;
    [[nodiscard]] std::vector<double> score(double forward_time, std::span<const double> x) const;
    [[nodiscard]] std::vector<double> cond_score(double forward_time, std::span<const double> x,
                                                 int c) const;

    /// Fills `out` for class c at forward time s. Throws InvalidInput on
    /// unknown class, bad time or degenerate evaluation.
    void evaluate(double forward_time, std::span<const double> x, int c, LocalFields& out) const;

    // Backward clock -------------------------------------------------------

    [[nodiscard]] double forward_time_of(double backward_time) const noexcept {
        return horizon_ - backward_time;
    }
    /// G_t(x) = log p_{T-t}(x|c) - log p_{T-t}(x).
    [[nodiscard]] double guiding_field(double backward_time, std::span<const double> x, int c) const;
    [[nodiscard]] std::vector<double> grad_g(double backward_time, std::span<const double> x,
                                             int c) const;
    [[nodiscard]] std::vector<double> hess_g_vp(double backward_time, std::span<const double> x,
                                                int c, std::span<const double> v) const;
    [[nodiscard]] std::vector<double> hess_log_cond_vp(double backward_time,
                                                       std::span<const double> x, int c,
                                                       std::span<const double> v) const;

    /// 4 e^{2(t-T)} R^2 / (1 - e^{2(t-T)})^2 at backward time t. Returns +inf at t >= T.
    [[nodiscard]] double grad_g_bound(double backward_time) const;

private:
    void check_time(double forward_time) const;
    void check_point(std::span<const double> x) const;

    std::size_t dim_;
    std::vector<Component> components_;
    double horizon_;
};

// Hessian-vector products from a filled LocalFields. For a mixture
//   grad^2 log p = sum_i r_i (s_i s_i^T - I / v_i) - g g^T,  g = sum_i r_i s_i.
void hess_log_marginal_vp(const LocalFields& f, std::span<const double> v, std::span<double> out);
void hess_log_conditional_vp(const LocalFields& f, std::span<const double> v, std::span<double> out);
/// (grad^2 G) v = conditional minus marginal product.
void hess_g_vp(const LocalFields& f, std::span<const double> v, std::span<double> out);

}  // namespace adaguide
