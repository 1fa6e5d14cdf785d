#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "gfcl/params.hpp"
#include "gfcl/rng.hpp"
#include "gfcl/tape.hpp"

namespace gfcl {

/// Tape leaf ids for the parameters of a ParamSet, aligned by index.
/// Trainable parameters are registered as differentiable leaves.
inline std::vector<diff::NodeId> bind_params(diff::Tape& tape, const ParamSet& params) {
    std::vector<diff::NodeId> ids;
    ids.reserve(params.size());
    for (const Param& p : params) ids.push_back(tape.leaf(p.value, p.trainable));
    return ids;
}

struct ForwardBackwardResult {
    double loss = 0.0;
    GradMap grads;
};

/// Runs the loss builder once and returns the loss with exact analytic
/// gradients for every trainable parameter. The builder must be a
/// deterministic function of the parameter values:
///   NodeId builder(diff::Tape&, const std::vector<diff::NodeId>& param_nodes)
template <typename LossBuilder>
ForwardBackwardResult forward_backward(const ParamSet& params, LossBuilder&& builder) {
    diff::Tape tape;
    const std::vector<diff::NodeId> nodes = bind_params(tape, params);
    const diff::NodeId loss = builder(tape, nodes);
    if (tape.value(loss).size() != 1) {
        throw std::invalid_argument("forward_backward: builder must produce a scalar loss");
    }
    ForwardBackwardResult result;
    result.loss = tape.value(loss)[0];
    tape.backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].trainable) result.grads.emplace(params[i].name, tape.grad(nodes[i]));
    }
    return result;
}

template <typename LossBuilder>
double forward_loss(const ParamSet& params, LossBuilder&& builder) {
    diff::Tape tape;
    const std::vector<diff::NodeId> nodes = bind_params(tape, params);
    return tape.value(builder(tape, nodes))[0];
}

struct GradCheckEntry {
    std::string param;
    std::size_t coords_checked = 0;
    double max_rel_err = 0.0;
    std::size_t worst_coord = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    double fd_step = 0.0;
    double tol = 0.0;
    std::vector<GradCheckEntry> entries;

    bool all_pass() const {
        return std::all_of(entries.begin(), entries.end(),
                           [](const GradCheckEntry& e) { return e.pass; });
    }

    double max_rel_err() const {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.max_rel_err);
        return m;
    }

    std::string to_string() const {
        std::ostringstream os;
        for (const auto& e : entries) {
            os << (e.pass ? "ok   " : "FAIL ") << e.param << "  max_rel_err=" << e.max_rel_err
               << "  coords=" << e.coords_checked << "  worst[" << e.worst_coord
               << "] analytic=" << e.analytic_at_worst << " numeric=" << e.numeric_at_worst
               << "\n";
        }
        return os.str();
    }
};

/// Compares analytic gradients against central finite differences
/// (f(x+h) - f(x-h)) / 2h per coordinate. Coordinates are subsampled per
/// parameter when `max_coords_per_param` is smaller than the tensor (never
/// below 32 unless the tensor itself is smaller). The relative error uses a
/// 1e-6 floor so that genuinely-zero coordinates compare against the
/// finite-difference noise floor rather than dividing by zero.
template <typename LossBuilder>
GradCheckReport grad_check(const ParamSet& params, LossBuilder&& builder, double fd_step,
                           double tol, std::size_t max_coords_per_param = 0,
                           std::uint64_t subsample_seed = 17) {
    if (fd_step <= 0.0) throw std::invalid_argument("grad_check: fd_step must be positive");
    const ForwardBackwardResult analytic = forward_backward(params, builder);

    GradCheckReport report;
    report.fd_step = fd_step;
    report.tol = tol;
    Rng rng(derive_seed(subsample_seed, "grad-check"));

    ParamSet work = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        const Tensor& g = analytic.grads.at(params[i].name);
        const std::size_t n = g.size();

        std::vector<std::size_t> coords(n);
        for (std::size_t k = 0; k < n; ++k) coords[k] = k;
        std::size_t budget = max_coords_per_param == 0 ? n : std::max<std::size_t>(32, max_coords_per_param);
        if (budget < n) {
            coords = rng.sample(coords, budget);
        }

        GradCheckEntry entry;
        entry.param = params[i].name;
        entry.coords_checked = coords.size();
        for (const std::size_t k : coords) {
            double& slot = work[i].value[k];
            const double original = slot;
            slot = original + fd_step;
            const double up = forward_loss(work, builder);
            slot = original - fd_step;
            const double down = forward_loss(work, builder);
            slot = original;

            const double numeric = (up - down) / (2.0 * fd_step);
            const double rel = std::abs(g[k] - numeric) /
                               std::max({std::abs(g[k]), std::abs(numeric), 1e-6});
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_coord = k;
                entry.analytic_at_worst = g[k];
                entry.numeric_at_worst = numeric;
            }
        }
        entry.pass = entry.max_rel_err < tol;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace gfcl
