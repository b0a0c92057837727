#pragma once

#include <cmath>
#include <random>
#include <string>

#include "btf/tensor.hpp"

namespace btf {

struct GradCheckReport {
    double max_rel_err = 0.0;
    int coords_checked = 0;
    std::string worst_path;
    size_t worst_offset = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Compares the float engine's analytic gradients against central differences
// (f(theta+eps) - f(theta-eps)) / (2 eps) on a random subsample of parameter
// coordinates. The differences are evaluated on the double instantiation of
// the same forward graph, so the oracle is not limited by float storage
// noise. f must be callable as f(ParamStoreT<S>&) -> TensorT<S> for both
// scalar types.
template <typename F>
GradCheckReport grad_check(ParamStore& params, F&& f, double eps, int n_coords,
                           std::mt19937& rng, double scale_floor = 1e-6) {
    if (eps < 1e-6 || eps > 1e-2)
        throw ConfigError("grad_check: eps must lie in [1e-6, 1e-2]");
    if (params.size() == 0) throw ConfigError("grad_check: empty parameter store");

    params.zero_grads();
    Tensor loss = f(params);
    if (!all_finite(loss)) throw NumericError("grad_check: non-finite loss");
    loss.backward();

    ParamStoreT<double> dparams = params.template cast<double>();

    // flat coordinate space over all parameters, in deterministic path order
    std::vector<std::pair<std::string, size_t>> spans;
    size_t total = 0;
    for (const auto& [path, t] : params) {
        spans.emplace_back(path, t.numel());
        total += t.numel();
    }
    std::uniform_int_distribution<size_t> pick(0, total - 1);

    GradCheckReport report;
    for (int s = 0; s < n_coords; ++s) {
        size_t flat = pick(rng);
        size_t offset = flat;
        const std::string* path = nullptr;
        for (const auto& [p, n] : spans) {
            if (offset < n) {
                path = &p;
                break;
            }
            offset -= n;
        }

        auto& dt = dparams.at(*path);
        const double saved = dt.data()[offset];
        dt.data()[offset] = saved + eps;
        const double up = static_cast<double>(f(dparams).item());
        dt.data()[offset] = saved - eps;
        const double down = static_cast<double>(f(dparams).item());
        dt.data()[offset] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("grad_check: non-finite perturbed loss at " + *path);

        const double numeric = (up - down) / (2.0 * eps);
        const double analytic = static_cast<double>(params.at(*path).grad()[offset]);
        const double denom =
            std::max(scale_floor, std::max(std::abs(analytic), std::abs(numeric)));
        const double rel = std::abs(analytic - numeric) / denom;
        ++report.coords_checked;
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_path = *path;
            report.worst_offset = offset;
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
    }
    return report;
}

}  // namespace btf
