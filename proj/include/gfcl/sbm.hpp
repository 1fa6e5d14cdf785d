#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gfcl/graph.hpp"
#include "gfcl/rng.hpp"

namespace gfcl {

/// Stochastic block model with Gaussian class-centered features: the
/// desk-scale stand-in for the large attributed networks this protocol is
/// normally run on.
struct SbmSpec {
    std::size_t classes = 0;
    std::size_t nodes_per_class = 0;
    double p_in = 0.1;
    double p_out = 0.01;
    std::size_t feature_dim = 16;
    double class_center_separation = 1.0;
    double feature_noise = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (classes == 0 || nodes_per_class == 0 || feature_dim == 0) {
            throw std::invalid_argument("SbmSpec: counts must be positive");
        }
        if (!(0.0 <= p_out && p_out < p_in && p_in <= 1.0)) {
            throw std::invalid_argument("SbmSpec: need 0 <= p_out < p_in <= 1");
        }
        if (class_center_separation <= 0.0) {
            throw std::invalid_argument("SbmSpec: class separation must be positive");
        }
        if (feature_noise < 0.0) {
            throw std::invalid_argument("SbmSpec: feature noise must be nonnegative");
        }
    }
};

/// Deterministic per seed. Class centers are unit vectors scaled by the
/// separation: canonical basis vectors when the feature space is wide
/// enough, random unit vectors otherwise. Node features add isotropic
/// Gaussian noise to the node's class center.
inline Graph make_sbm_graph(const SbmSpec& spec) {
    spec.validate();
    const std::size_t n = spec.classes * spec.nodes_per_class;

    std::vector<int> labels(n);
    for (std::size_t v = 0; v < n; ++v) labels[v] = static_cast<int>(v / spec.nodes_per_class);

    Rng edge_rng(derive_seed(spec.seed, "sbm-edges"));
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double p = labels[i] == labels[j] ? spec.p_in : spec.p_out;
            if (edge_rng.uniform() < p) edges.emplace_back(i, j);
        }
    }

    Rng center_rng(derive_seed(spec.seed, "sbm-centers"));
    Tensor centers({spec.classes, spec.feature_dim});
    if (spec.feature_dim >= spec.classes) {
        for (std::size_t c = 0; c < spec.classes; ++c) {
            centers.at(c, c) = spec.class_center_separation;
        }
    } else {
        for (std::size_t c = 0; c < spec.classes; ++c) {
            double norm = 0.0;
            for (std::size_t d = 0; d < spec.feature_dim; ++d) {
                centers.at(c, d) = center_rng.normal();
                norm += centers.at(c, d) * centers.at(c, d);
            }
            norm = std::sqrt(norm);
            for (std::size_t d = 0; d < spec.feature_dim; ++d) {
                centers.at(c, d) *= spec.class_center_separation / norm;
            }
        }
    }

    Rng feature_rng(derive_seed(spec.seed, "sbm-features"));
    Tensor features({n, spec.feature_dim});
    for (std::size_t v = 0; v < n; ++v) {
        const auto c = static_cast<std::size_t>(labels[v]);
        for (std::size_t d = 0; d < spec.feature_dim; ++d) {
            features.at(v, d) = centers.at(c, d) + spec.feature_noise * feature_rng.normal();
        }
    }

    return Graph::build(edges, std::move(features), std::move(labels));
}

}  // namespace gfcl
