#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gfcl/tensor.hpp"

namespace gfcl {

constexpr int kUnlabeled = -1;

/// Immutable undirected sparse graph (CSR, stored symmetrically) with dense
/// node features and optional per-node class labels. Safe to share across
/// threads once built.
class Graph {
public:
    /// Builds from a raw edge list. Duplicate edges, both orientations of the
    /// same edge, and self-loops collapse to a single stored undirected edge
    /// (self-loops are dropped). `labels` may be empty (all nodes unlabeled)
    /// or one entry per node with kUnlabeled for unlabeled nodes.
    static Graph build(const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                       Tensor features, std::vector<int> labels = {}) {
        if (features.rank() != 2 || features.cols() == 0) {
            throw std::invalid_argument("Graph::build: features must be a non-empty matrix");
        }
        const std::size_t n = features.rows();
        if (!labels.empty() && labels.size() != n) {
            throw std::invalid_argument("Graph::build: label count does not match node count");
        }

        std::vector<std::pair<std::size_t, std::size_t>> canon;
        canon.reserve(edges.size());
        for (const auto& [u, v] : edges) {
            if (u >= n || v >= n) {
                throw std::invalid_argument("Graph::build: edge endpoint " +
                                            std::to_string(std::max(u, v)) +
                                            " out of range for " + std::to_string(n) + " nodes");
            }
            if (u == v) continue;
            canon.emplace_back(std::min(u, v), std::max(u, v));
        }
        std::sort(canon.begin(), canon.end());
        canon.erase(std::unique(canon.begin(), canon.end()), canon.end());

        Graph g;
        g.num_nodes_ = n;
        g.features_ = std::move(features);
        g.labels_ = std::move(labels);

        std::vector<std::size_t> degree(n, 0);
        for (const auto& [u, v] : canon) {
            ++degree[u];
            ++degree[v];
        }
        g.row_ptr_.assign(n + 1, 0);
        for (std::size_t v = 0; v < n; ++v) g.row_ptr_[v + 1] = g.row_ptr_[v] + degree[v];
        g.col_.resize(2 * canon.size());

        std::vector<std::size_t> cursor(g.row_ptr_.begin(), g.row_ptr_.end() - 1);
        for (const auto& [u, v] : canon) {
            g.col_[cursor[u]++] = v;
            g.col_[cursor[v]++] = u;
        }
        for (std::size_t v = 0; v < n; ++v) {
            std::sort(g.col_.begin() + static_cast<std::ptrdiff_t>(g.row_ptr_[v]),
                      g.col_.begin() + static_cast<std::ptrdiff_t>(g.row_ptr_[v + 1]));
        }

        g.inv_sqrt_degree_.resize(n);
        for (std::size_t v = 0; v < n; ++v) {
            const std::size_t d = degree[v];
            g.inv_sqrt_degree_[v] = d == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(d));
        }
        return g;
    }

    std::size_t num_nodes() const { return num_nodes_; }
    std::size_t num_edges() const { return col_.size() / 2; }
    std::size_t feature_dim() const { return features_.cols(); }

    std::size_t degree(std::size_t v) const { return row_ptr_[v + 1] - row_ptr_[v]; }

    std::span<const std::size_t> neighbors(std::size_t v) const {
        return {col_.data() + row_ptr_[v], col_.data() + row_ptr_[v + 1]};
    }

    const Tensor& features() const { return features_; }
    const std::vector<int>& labels() const { return labels_; }
    int label(std::size_t v) const { return labels_.empty() ? kUnlabeled : labels_[v]; }

    double inv_sqrt_degree(std::size_t v) const { return inv_sqrt_degree_[v]; }

    /// All distinct class ids present among labeled nodes, ascending.
    std::vector<int> class_ids() const {
        std::vector<int> ids(labels_);
        ids.erase(std::remove(ids.begin(), ids.end(), kUnlabeled), ids.end());
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        return ids;
    }

    /// Node ids of a class, ascending.
    std::vector<std::size_t> nodes_of_class(int class_id) const {
        std::vector<std::size_t> out;
        for (std::size_t v = 0; v < labels_.size(); ++v) {
            if (labels_[v] == class_id) out.push_back(v);
        }
        return out;
    }

private:
    std::size_t num_nodes_ = 0;
    std::vector<std::size_t> row_ptr_;
    std::vector<std::size_t> col_;
    std::vector<double> inv_sqrt_degree_;
    Tensor features_;
    std::vector<int> labels_;
};

/// Symmetric-normalized aggregation shared by the encoder and the node
/// attention network:
///
///   out[v] = H[v] + sum_{u in N(v)} H[u] / sqrt(d_v * d_u)
///
/// Isolated nodes pass through unchanged (the neighbor sum is empty and the
/// degree normalizer is only evaluated on existing edges).
inline Tensor propagate(const Graph& g, const Tensor& h) {
    if (h.rank() != 2 || h.rows() != g.num_nodes()) {
        throw std::invalid_argument("propagate: H row count must equal num_nodes");
    }
    const std::size_t d = h.cols();
    Tensor out = h;
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
        double* orow = out.row_ptr(v);
        const double sv = g.inv_sqrt_degree(v);
        for (const std::size_t u : g.neighbors(v)) {
            const double w = sv * g.inv_sqrt_degree(u);
            const double* hrow = h.row_ptr(u);
            for (std::size_t j = 0; j < d; ++j) orow[j] += w * hrow[j];
        }
    }
    return out;
}

}  // namespace gfcl
