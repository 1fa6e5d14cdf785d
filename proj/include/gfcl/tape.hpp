#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gfcl/graph.hpp"
#include "gfcl/tensor.hpp"

namespace gfcl::diff {

using NodeId = std::size_t;

/// Partition of row slots into groups, e.g. support rows grouped by class.
using RowGroups = std::vector<std::vector<std::size_t>>;

/// Reverse-mode autodiff over the fixed operation set the models need.
///
/// Each op records its output value and a pull closure that routes the
/// output gradient into the parents. backward() walks the tape in reverse
/// creation order, which is a valid reverse topological order because ops
/// only reference earlier nodes. Every op validates that its output is
/// finite and names itself in the error if not.
///
/// Graphs passed to propagate() are captured by reference and must outlive
/// the tape. A Tape is single-use: build a loss, call backward once, read
/// gradients.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    NodeId leaf(Tensor value, bool requires_grad = false) {
        return push(std::move(value), "leaf", requires_grad, {});
    }

    const Tensor& value(NodeId id) const { return nodes_[id].value; }

    bool has_grad(NodeId id) const { return nodes_[id].grad.defined(); }

    /// Gradient of the loss w.r.t. node `id`; zeros if the node never
    /// received a contribution (e.g. a parameter with no path to the loss).
    Tensor grad(NodeId id) const {
        return nodes_[id].grad.defined() ? nodes_[id].grad : Tensor::zeros_like(nodes_[id].value);
    }

    /// Seeds d(loss)/d(loss) = 1 and accumulates gradients down the tape.
    void backward(NodeId loss) {
        if (nodes_[loss].value.size() != 1) {
            throw std::invalid_argument("Tape::backward: loss must be a scalar");
        }
        if (ran_backward_) {
            throw std::logic_error("Tape::backward: tape already differentiated");
        }
        ran_backward_ = true;
        nodes_[loss].grad = Tensor::filled(nodes_[loss].value.shape(), 1.0);
        for (std::size_t i = loss + 1; i-- > 0;) {
            Node& node = nodes_[i];
            if (node.pull && node.grad.defined()) node.pull();
        }
    }

    // ---- operations ------------------------------------------------------

    NodeId matmul(NodeId a, NodeId b) {
        Tensor out = gfcl::matmul(value(a), value(b));
        return unary_or_binary("matmul", std::move(out), a, b, [this](NodeId self, NodeId a, NodeId b) {
            const Tensor& g = nodes_[self].grad;
            if (nodes_[a].needs_grad) accumulate(a, matmul_nt(g, value(b)));
            if (nodes_[b].needs_grad) accumulate(b, matmul_tn(value(a), g));
        });
    }

    NodeId propagate(const Graph& graph, NodeId h) {
        Tensor out = gfcl::propagate(graph, value(h));
        const Graph* gp = &graph;
        return unary("propagate", std::move(out), h, [this, gp](NodeId self, NodeId h) {
            accumulate(h, gfcl::propagate(*gp, nodes_[self].grad));
        });
    }

    NodeId relu(NodeId a) {
        Tensor out = value(a);
        for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
        return unary("relu", std::move(out), a, [this](NodeId self, NodeId a) {
            const Tensor& g = nodes_[self].grad;
            const Tensor& x = value(a);
            Tensor d = Tensor::zeros_like(x);
            for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] > 0.0 ? g[i] : 0.0;
            accumulate(a, std::move(d));
        });
    }

    NodeId sigmoid(NodeId a) {
        Tensor out = value(a);
        for (auto& v : out.values()) {
            v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        }
        return unary("sigmoid", std::move(out), a, [this](NodeId self, NodeId a) {
            const Tensor& g = nodes_[self].grad;
            const Tensor& s = nodes_[self].value;
            Tensor d = Tensor::zeros_like(s);
            for (std::size_t i = 0; i < s.size(); ++i) d[i] = g[i] * s[i] * (1.0 - s[i]);
            accumulate(a, std::move(d));
        });
    }

    /// Row-wise softmax with max subtraction. A rank-1 input is one row.
    NodeId softmax_rows(NodeId a) {
        const Tensor& x = value(a);
        const auto [rows, cols] = row_view(x);
        Tensor out = x;
        for (std::size_t r = 0; r < rows; ++r) {
            double* row = out.data() + r * cols;
            double mx = row[0];
            for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
            double sum = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                row[c] = std::exp(row[c] - mx);
                sum += row[c];
            }
            for (std::size_t c = 0; c < cols; ++c) row[c] /= sum;
        }
        return unary("softmax", std::move(out), a, [this](NodeId self, NodeId a) {
            const Tensor& g = nodes_[self].grad;
            const Tensor& p = nodes_[self].value;
            const auto [rows, cols] = row_view(p);
            Tensor d = Tensor::zeros_like(p);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* prow = p.data() + r * cols;
                const double* grow = g.data() + r * cols;
                double* drow = d.data() + r * cols;
                double dot = 0.0;
                for (std::size_t c = 0; c < cols; ++c) dot += grow[c] * prow[c];
                for (std::size_t c = 0; c < cols; ++c) drow[c] = prow[c] * (grow[c] - dot);
            }
            accumulate(a, std::move(d));
        });
    }

    NodeId log(NodeId a) {
        Tensor out = value(a);
        for (auto& v : out.values()) v = std::log(v);
        return unary("log", std::move(out), a, [this](NodeId self, NodeId a) {
            const Tensor& g = nodes_[self].grad;
            const Tensor& x = value(a);
            Tensor d = Tensor::zeros_like(x);
            for (std::size_t i = 0; i < x.size(); ++i) d[i] = g[i] / x[i];
            accumulate(a, std::move(d));
        });
    }

    NodeId add(NodeId a, NodeId b) {
        require_same_shape("add", a, b);
        Tensor out = value(a);
        axpy(1.0, value(b), out);
        return unary_or_binary("add", std::move(out), a, b, [this](NodeId self, NodeId a, NodeId b) {
            const Tensor& g = nodes_[self].grad;
            if (nodes_[a].needs_grad) accumulate(a, g);
            if (nodes_[b].needs_grad) accumulate(b, g);
        });
    }

    /// Broadcast add of a rank-1 bias over every row of a matrix.
    NodeId add_row(NodeId a, NodeId bias) {
        const Tensor& x = value(a);
        const Tensor& b = value(bias);
        if (x.rank() != 2 || b.rank() != 1 || b.size() != x.cols()) {
            throw std::invalid_argument("Tape::add_row: need (m,n) matrix and length-n vector");
        }
        Tensor out = x;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            double* row = out.row_ptr(r);
            for (std::size_t c = 0; c < x.cols(); ++c) row[c] += b[c];
        }
        return unary_or_binary("add_row", std::move(out), a, bias,
                               [this](NodeId self, NodeId a, NodeId bias) {
            const Tensor& g = nodes_[self].grad;
            if (nodes_[a].needs_grad) accumulate(a, g);
            if (nodes_[bias].needs_grad) {
                Tensor d({g.cols()});
                for (std::size_t r = 0; r < g.rows(); ++r) {
                    const double* row = g.row_ptr(r);
                    for (std::size_t c = 0; c < g.cols(); ++c) d[c] += row[c];
                }
                accumulate(bias, std::move(d));
            }
        });
    }

    NodeId mul(NodeId a, NodeId b) {
        require_same_shape("mul", a, b);
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= value(b)[i];
        return unary_or_binary("mul", std::move(out), a, b, [this](NodeId self, NodeId a, NodeId b) {
            const Tensor& g = nodes_[self].grad;
            if (nodes_[a].needs_grad) {
                Tensor d = g;
                for (std::size_t i = 0; i < d.size(); ++i) d[i] *= value(b)[i];
                accumulate(a, std::move(d));
            }
            if (nodes_[b].needs_grad) {
                Tensor d = g;
                for (std::size_t i = 0; i < d.size(); ++i) d[i] *= value(a)[i];
                accumulate(b, std::move(d));
            }
        });
    }

    NodeId div(NodeId a, NodeId b) {
        require_same_shape("div", a, b);
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] /= value(b)[i];
        return unary_or_binary("div", std::move(out), a, b, [this](NodeId self, NodeId a, NodeId b) {
            const Tensor& g = nodes_[self].grad;
            if (nodes_[a].needs_grad) {
                Tensor d = g;
                for (std::size_t i = 0; i < d.size(); ++i) d[i] /= value(b)[i];
                accumulate(a, std::move(d));
            }
            if (nodes_[b].needs_grad) {
                Tensor d = g;
                for (std::size_t i = 0; i < d.size(); ++i) {
                    const double bv = value(b)[i];
                    d[i] *= -value(a)[i] / (bv * bv);
                }
                accumulate(b, std::move(d));
            }
        });
    }

    NodeId scale(NodeId a, double c) {
        Tensor out = value(a);
        for (auto& v : out.values()) v *= c;
        return unary("scale", std::move(out), a, [this, c](NodeId self, NodeId a) {
            Tensor d = nodes_[self].grad;
            for (auto& v : d.values()) v *= c;
            accumulate(a, std::move(d));
        });
    }

    NodeId add_const(NodeId a, double c) {
        Tensor out = value(a);
        for (auto& v : out.values()) v += c;
        return unary("add_const", std::move(out), a, [this](NodeId self, NodeId a) {
            accumulate(a, nodes_[self].grad);
        });
    }

    /// D[i][j] = squared Euclidean distance between row i of q and row j of p.
    NodeId pairwise_sqdist(NodeId q, NodeId p) {
        const Tensor& qv = value(q);
        const Tensor& pv = value(p);
        if (qv.rank() != 2 || pv.rank() != 2 || qv.cols() != pv.cols()) {
            throw std::invalid_argument("Tape::pairwise_sqdist: width mismatch");
        }
        const std::size_t m = qv.rows(), n = pv.rows(), h = qv.cols();
        Tensor out({m, n});
        for (std::size_t i = 0; i < m; ++i) {
            const double* qi = qv.row_ptr(i);
            double* orow = out.row_ptr(i);
            for (std::size_t j = 0; j < n; ++j) {
                const double* pj = pv.row_ptr(j);
                double s = 0.0;
                for (std::size_t t = 0; t < h; ++t) {
                    const double dlt = qi[t] - pj[t];
                    s += dlt * dlt;
                }
                orow[j] = s;
            }
        }
        return unary_or_binary("pairwise_sqdist", std::move(out), q, p,
                               [this](NodeId self, NodeId q, NodeId p) {
            const Tensor& g = nodes_[self].grad;
            const Tensor& qv = value(q);
            const Tensor& pv = value(p);
            const std::size_t m = qv.rows(), n = pv.rows(), h = qv.cols();
            Tensor dq = Tensor::zeros_like(qv);
            Tensor dp = Tensor::zeros_like(pv);
            for (std::size_t i = 0; i < m; ++i) {
                const double* qi = qv.row_ptr(i);
                const double* grow = g.row_ptr(i);
                double* dqi = dq.row_ptr(i);
                for (std::size_t j = 0; j < n; ++j) {
                    const double w = 2.0 * grow[j];
                    if (w == 0.0) continue;
                    const double* pj = pv.row_ptr(j);
                    double* dpj = dp.row_ptr(j);
                    for (std::size_t t = 0; t < h; ++t) {
                        const double dlt = w * (qi[t] - pj[t]);
                        dqi[t] += dlt;
                        dpj[t] -= dlt;
                    }
                }
            }
            if (nodes_[q].needs_grad) accumulate(q, std::move(dq));
            if (nodes_[p].needs_grad) accumulate(p, std::move(dp));
        });
    }

    /// Row gather; duplicate indices are allowed (gradients scatter-add).
    NodeId gather_rows(NodeId a, std::vector<std::size_t> rows) {
        const Tensor& x = value(a);
        if (x.rank() != 2) throw std::invalid_argument("Tape::gather_rows: matrix required");
        Tensor out({rows.size(), x.cols()});
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r] >= x.rows()) {
                throw std::invalid_argument("Tape::gather_rows: row index out of range");
            }
            const double* src = x.row_ptr(rows[r]);
            std::copy(src, src + x.cols(), out.row_ptr(r));
        }
        return unary("gather_rows", std::move(out), a,
                     [this, rows = std::move(rows)](NodeId self, NodeId a) {
            const Tensor& g = nodes_[self].grad;
            Tensor d = Tensor::zeros_like(value(a));
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const double* src = g.row_ptr(r);
                double* dst = d.row_ptr(rows[r]);
                for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += src[c];
            }
            accumulate(a, std::move(d));
        });
    }

    /// Weighted within-group row sums: out[g] = sum_{r in groups[g]} w[r] * z[r].
    /// The workhorse behind prototypes (rows grouped by class) and task
    /// descriptors (prototype rows grouped by session).
    NodeId pool_rows(NodeId z, NodeId w, RowGroups groups) {
        const Tensor& zv = value(z);
        const Tensor& wv = value(w);
        if (zv.rank() != 2 || wv.rank() != 1 || wv.size() != zv.rows()) {
            throw std::invalid_argument("Tape::pool_rows: need (m,n) rows and length-m weights");
        }
        check_groups(groups, zv.rows(), "pool_rows");
        Tensor out({groups.size(), zv.cols()});
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            double* orow = out.row_ptr(gi);
            for (const std::size_t r : groups[gi]) {
                const double* zr = zv.row_ptr(r);
                for (std::size_t c = 0; c < zv.cols(); ++c) orow[c] += wv[r] * zr[c];
            }
        }
        return unary_or_binary("pool_rows", std::move(out), z, w,
                               [this, groups = std::move(groups)](NodeId self, NodeId z, NodeId w) {
            const Tensor& g = nodes_[self].grad;
            const Tensor& zv = value(z);
            const Tensor& wv = value(w);
            Tensor dz = Tensor::zeros_like(zv);
            Tensor dw = Tensor::zeros_like(wv);
            for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                const double* grow = g.row_ptr(gi);
                for (const std::size_t r : groups[gi]) {
                    double* dzr = dz.row_ptr(r);
                    const double* zr = zv.row_ptr(r);
                    double dot = 0.0;
                    for (std::size_t c = 0; c < zv.cols(); ++c) {
                        dzr[c] += wv[r] * grow[c];
                        dot += grow[c] * zr[c];
                    }
                    dw[r] += dot;
                }
            }
            if (nodes_[z].needs_grad) accumulate(z, std::move(dz));
            if (nodes_[w].needs_grad) accumulate(w, std::move(dw));
        });
    }

    /// out[g] = sum_{r in groups[g]} w[r]
    NodeId segment_sum(NodeId w, RowGroups groups) {
        const Tensor& wv = value(w);
        if (wv.rank() != 1) throw std::invalid_argument("Tape::segment_sum: vector required");
        check_groups(groups, wv.size(), "segment_sum");
        Tensor out({groups.size()});
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            for (const std::size_t r : groups[gi]) out[gi] += wv[r];
        }
        return unary("segment_sum", std::move(out), w,
                     [this, groups = std::move(groups)](NodeId self, NodeId w) {
            const Tensor& g = nodes_[self].grad;
            Tensor d = Tensor::zeros_like(value(w));
            for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                for (const std::size_t r : groups[gi]) d[r] += g[gi];
            }
            accumulate(w, std::move(d));
        });
    }

    /// Inverse layout of segment_sum: out[r] = s[group containing r].
    NodeId expand_segments(NodeId s, RowGroups groups, std::size_t total_rows) {
        const Tensor& sv = value(s);
        if (sv.rank() != 1 || sv.size() != groups.size()) {
            throw std::invalid_argument("Tape::expand_segments: one value per group required");
        }
        check_groups(groups, total_rows, "expand_segments");
        Tensor out({total_rows});
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            for (const std::size_t r : groups[gi]) out[r] = sv[gi];
        }
        return unary("expand_segments", std::move(out), s,
                     [this, groups = std::move(groups)](NodeId self, NodeId s) {
            const Tensor& g = nodes_[self].grad;
            Tensor d = Tensor::zeros_like(value(s));
            for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                for (const std::size_t r : groups[gi]) d[gi] += g[r];
            }
            accumulate(s, std::move(d));
        });
    }

    NodeId reshape(NodeId a, std::vector<std::size_t> shape) {
        Tensor out = value(a).reshaped(shape);
        return unary("reshape", std::move(out), a, [this](NodeId self, NodeId a) {
            accumulate(a, nodes_[self].grad.reshaped(value(a).shape()));
        });
    }

    NodeId sum(NodeId a) {
        double s = 0.0;
        for (const double v : value(a).values()) s += v;
        return unary("sum", Tensor::scalar(s), a, [this](NodeId self, NodeId a) {
            accumulate(a, Tensor::filled(value(a).shape(), nodes_[self].grad[0]));
        });
    }

    NodeId mean(NodeId a) {
        const std::size_t n = value(a).size();
        double s = 0.0;
        for (const double v : value(a).values()) s += v;
        return unary("mean", Tensor::scalar(s / static_cast<double>(n)), a,
                     [this, n](NodeId self, NodeId a) {
            accumulate(a, Tensor::filled(value(a).shape(),
                                         nodes_[self].grad[0] / static_cast<double>(n)));
        });
    }

    /// Mean over rows of (1 + w[y_r]) * (-log probs[r][y_r]). `class_weights`
    /// participates in differentiation, so attention-produced scaling factors
    /// receive gradients through the loss.
    NodeId weighted_cross_entropy(NodeId probs, std::vector<std::size_t> labels,
                                  NodeId class_weights) {
        const Tensor& p = value(probs);
        const Tensor& w = value(class_weights);
        check_loss_inputs(p, w, labels, "weighted_cross_entropy");
        const std::size_t m = p.rows();
        double loss = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            loss += (1.0 + w[labels[r]]) * -std::log(p.at(r, labels[r]));
        }
        loss /= static_cast<double>(m);
        return unary_or_binary("weighted_cross_entropy", Tensor::scalar(loss), probs, class_weights,
                               [this, labels = std::move(labels)](NodeId self, NodeId probs,
                                                                  NodeId class_weights) {
            const double g = nodes_[self].grad[0];
            const Tensor& p = value(probs);
            const Tensor& w = value(class_weights);
            const double inv_m = 1.0 / static_cast<double>(p.rows());
            if (nodes_[probs].needs_grad) {
                Tensor dp = Tensor::zeros_like(p);
                for (std::size_t r = 0; r < p.rows(); ++r) {
                    const std::size_t y = labels[r];
                    dp.at(r, y) = -g * inv_m * (1.0 + w[y]) / p.at(r, y);
                }
                accumulate(probs, std::move(dp));
            }
            if (nodes_[class_weights].needs_grad) {
                Tensor dw = Tensor::zeros_like(w);
                for (std::size_t r = 0; r < p.rows(); ++r) {
                    const std::size_t y = labels[r];
                    dw[y] += -g * inv_m * std::log(p.at(r, y));
                }
                accumulate(class_weights, std::move(dw));
            }
        });
    }

    /// One-vs-rest reading of the scaled loss: mean over rows of
    /// sum_k (1 + w[k]) * -( [k==y] log p[k] + [k!=y] log(1 - p[k]) ).
    NodeId weighted_binary_cross_entropy(NodeId probs, std::vector<std::size_t> labels,
                                         NodeId class_weights) {
        const Tensor& p = value(probs);
        const Tensor& w = value(class_weights);
        check_loss_inputs(p, w, labels, "weighted_binary_cross_entropy");
        const std::size_t m = p.rows(), c = p.cols();
        double loss = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t k = 0; k < c; ++k) {
                const double pk = p.at(r, k);
                const double term = k == labels[r] ? std::log(pk) : std::log(1.0 - pk);
                loss -= (1.0 + w[k]) * term;
            }
        }
        loss /= static_cast<double>(m);
        return unary_or_binary("weighted_binary_cross_entropy", Tensor::scalar(loss), probs,
                               class_weights,
                               [this, labels = std::move(labels)](NodeId self, NodeId probs,
                                                                  NodeId class_weights) {
            const double g = nodes_[self].grad[0];
            const Tensor& p = value(probs);
            const Tensor& w = value(class_weights);
            const double inv_m = 1.0 / static_cast<double>(p.rows());
            if (nodes_[probs].needs_grad) {
                Tensor dp = Tensor::zeros_like(p);
                for (std::size_t r = 0; r < p.rows(); ++r) {
                    for (std::size_t k = 0; k < p.cols(); ++k) {
                        const double pk = p.at(r, k);
                        const double dterm = k == labels[r] ? -1.0 / pk : 1.0 / (1.0 - pk);
                        dp.at(r, k) = g * inv_m * (1.0 + w[k]) * dterm;
                    }
                }
                accumulate(probs, std::move(dp));
            }
            if (nodes_[class_weights].needs_grad) {
                Tensor dw = Tensor::zeros_like(w);
                for (std::size_t r = 0; r < p.rows(); ++r) {
                    for (std::size_t k = 0; k < p.cols(); ++k) {
                        const double pk = p.at(r, k);
                        const double term = k == labels[r] ? std::log(pk) : std::log(1.0 - pk);
                        dw[k] -= g * inv_m * term;
                    }
                }
                accumulate(class_weights, std::move(dw));
            }
        });
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        std::function<void()> pull;
    };

    static std::pair<std::size_t, std::size_t> row_view(const Tensor& t) {
        if (t.rank() == 1) return {1, t.size()};
        if (t.rank() == 2) return {t.rows(), t.cols()};
        throw std::invalid_argument("Tape: rank-1 or rank-2 tensor required");
    }

    static void check_groups(const RowGroups& groups, std::size_t total, const char* op) {
        std::vector<char> seen(total, 0);
        for (const auto& group : groups) {
            for (const std::size_t r : group) {
                if (r >= total || seen[r]) {
                    throw std::invalid_argument(std::string("Tape::") + op +
                                                ": groups must partition the row range");
                }
                seen[r] = 1;
            }
        }
    }

    static void check_loss_inputs(const Tensor& p, const Tensor& w,
                                  const std::vector<std::size_t>& labels, const char* op) {
        if (p.rank() != 2 || w.rank() != 1 || w.size() != p.cols()) {
            throw std::invalid_argument(std::string("Tape::") + op +
                                        ": need (m,c) distributions and length-c weights");
        }
        if (labels.size() != p.rows()) {
            throw std::invalid_argument(std::string("Tape::") + op + ": one label per row required");
        }
        for (const std::size_t y : labels) {
            if (y >= p.cols()) {
                throw std::invalid_argument(std::string("Tape::") + op +
                                            ": label " + std::to_string(y) + " outside class set");
            }
        }
    }

    void require_same_shape(const char* op, NodeId a, NodeId b) const {
        if (!value(a).same_shape(value(b))) {
            throw std::invalid_argument(std::string("Tape::") + op + ": shape mismatch");
        }
    }

    void accumulate(NodeId id, const Tensor& contribution) {
        Node& node = nodes_[id];
        if (!node.needs_grad) return;
        if (!node.grad.defined()) {
            node.grad = contribution;
        } else {
            axpy(1.0, contribution, node.grad);
        }
    }

    void accumulate(NodeId id, Tensor&& contribution) {
        Node& node = nodes_[id];
        if (!node.needs_grad) return;
        if (!node.grad.defined()) {
            node.grad = std::move(contribution);
        } else {
            axpy(1.0, contribution, node.grad);
        }
    }

    NodeId push(Tensor value, const char* op, bool needs_grad, std::function<void()> pull) {
        if (!value.all_finite()) {
            throw std::runtime_error(std::string("Tape: non-finite values produced by op '") + op +
                                     "'");
        }
        nodes_.push_back(Node{std::move(value), Tensor(), needs_grad, std::move(pull)});
        return nodes_.size() - 1;
    }

    template <typename Pull>
    NodeId unary(const char* op, Tensor out, NodeId a, Pull&& pull) {
        const bool needs = nodes_[a].needs_grad;
        const NodeId self = push(std::move(out), op, needs, {});
        if (needs) {
            nodes_[self].pull = [this, pull = std::forward<Pull>(pull), self, a]() {
                pull(self, a);
            };
        }
        return self;
    }

    template <typename Pull>
    NodeId unary_or_binary(const char* op, Tensor out, NodeId a, NodeId b, Pull&& pull) {
        const bool needs = nodes_[a].needs_grad || nodes_[b].needs_grad;
        const NodeId self = push(std::move(out), op, needs, {});
        if (needs) {
            nodes_[self].pull = [this, pull = std::forward<Pull>(pull), self, a, b]() {
                pull(self, a, b);
            };
        }
        return self;
    }

    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

}  // namespace gfcl::diff
