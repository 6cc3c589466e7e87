// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <string_view>

#include "adaguide/errors.hpp"
#include "adaguide/kernels.hpp"
#include "adaguide/mixture_model.hpp"

namespace adaguide::kernels {

namespace {

Isa initial_isa() noexcept {
    if (const char* env = std::getenv("ADAGUIDE_ISA"); env && std::string_view(env) == "scalar")
        return Isa::scalar;
    return detected_isa();
}

std::atomic<Isa>& active() noexcept {
    static std::atomic<Isa> isa{initial_isa()};
    return isa;
}

}  // namespace

const char* isa_name(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "unknown";
}

bool isa_supported(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#if defined(ADAGUIDE_HAVE_AVX2)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
    }
    return false;
}

Isa detected_isa() noexcept { return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar; }

Isa active_isa() noexcept { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
    if (!isa_supported(isa))
        throw InvalidInput(std::string("ISA not available: ") + isa_name(isa));
    active().store(isa, std::memory_order_relaxed);
}

ComponentTable2d ComponentTable2d::build(const MixtureModel& model, double forward_time, int c) {
    if (model.dim() != 2) throw InvalidInput("2-D component table needs a 2-D model");
    if (!model.has_class(c)) throw InvalidInput("unknown class label " + std::to_string(c));
    const ForwardLaw law = model.forward_law(forward_time);
    ComponentTable2d t;
    const auto& comps = model.components();
    for (std::size_t i = 0; i < comps.size(); ++i) {
        const double v = law.variances[i];
        t.mean_x.push_back(law.means[i][0]);
        t.mean_y.push_back(law.means[i][1]);
        t.log_norm.push_back(std::log(comps[i].weight) - std::log(2.0 * std::numbers::pi * v));
        t.half_inv_var.push_back(0.5 / v);
        t.inv_var.push_back(1.0 / v);
        t.in_class.push_back(comps[i].label == c ? 1 : 0);
    }
    return t;
}

void mixture_fields_2d(const ComponentTable2d& table, std::span<const double> x,
                       std::span<const double> y, const Fields2d& out) {
#if defined(ADAGUIDE_HAVE_AVX2)
    if (active_isa() == Isa::avx2) return avx2::mixture_fields_2d(table, x, y, out);
#endif
    scalar::mixture_fields_2d(table, x, y, out);
}

void hjb_row_update(const HjbStencil& p, const HjbRow& row) {
#if defined(ADAGUIDE_HAVE_AVX2)
    if (active_isa() == Isa::avx2) return avx2::hjb_row_update(p, row);
#endif
    scalar::hjb_row_update(p, row);
}

}  // namespace adaguide::kernels
