#pragma once

#include "pdvf/tensor.hpp"

#include <functional>
#include <vector>

namespace pdvf {

// Reverse-mode tape over dense matrices. Covers exactly the operations the
// three network shapes need; anything fancier is out of scope. Row
// convention: a batch is stored one sample per row.
//
// Typical use: build the graph with ops, call backward(loss) where loss is a
// 1x1 node, then read gradients either from nodes or from the bound ParamSet
// tensors. reset() drops the graph so the arena can be reused per batch.
template <typename S>
class Tape {
public:
    using Id = int;

    struct Node {
        Mat<S> val;
        Mat<S> grad;
        std::function<void(Tape&, Node&)> back;  // empty for leaves
    };

    void reset() { nodes_.clear(); }
    int size() const { return static_cast<int>(nodes_.size()); }
    const Mat<S>& val(Id id) const { return nodes_[id].val; }
    const Mat<S>& grad(Id id) const { return nodes_[id].grad; }

    Id leaf(Mat<S> v) { return push(std::move(v), {}); }

    // Leaf bound to a parameter tensor; backward accumulates into t.grad.
    Id param(Tensor<S>& t) {
        Tensor<S>* tp = &t;
        Id id = push(t.value, [tp](Tape& tape, Node& n) { tp->grad += n.grad; });
        return id;
    }

    Id matmul(Id a, Id b) {
        check_inner(a, b);
        Mat<S> v = nodes_[a].val * nodes_[b].val;
        return push(std::move(v), [a, b](Tape& t, Node& n) {
            t.nodes_[a].grad.noalias() += n.grad * t.nodes_[b].val.transpose();
            t.nodes_[b].grad.noalias() += t.nodes_[a].val.transpose() * n.grad;
        });
    }

    Id transpose(Id a) {
        return push(nodes_[a].val.transpose(), [a](Tape& t, Node& n) {
            t.nodes_[a].grad += n.grad.transpose();
        });
    }

    Id add(Id a, Id b) {
        check_same(a, b);
        return push(nodes_[a].val + nodes_[b].val, [a, b](Tape& t, Node& n) {
            t.nodes_[a].grad += n.grad;
            t.nodes_[b].grad += n.grad;
        });
    }

    Id sub(Id a, Id b) {
        check_same(a, b);
        return push(nodes_[a].val - nodes_[b].val, [a, b](Tape& t, Node& n) {
            t.nodes_[a].grad += n.grad;
            t.nodes_[b].grad -= n.grad;
        });
    }

    // Broadcast-add a 1 x d bias row to every row of a.
    Id add_rowwise(Id a, Id bias) {
        require(nodes_[bias].val.rows() == 1 &&
                    nodes_[bias].val.cols() == nodes_[a].val.cols(),
                "add_rowwise: bias must be 1 x ", nodes_[a].val.cols(), ", got ",
                nodes_[bias].val.rows(), " x ", nodes_[bias].val.cols());
        Mat<S> v = nodes_[a].val.rowwise() + nodes_[bias].val.row(0);
        return push(std::move(v), [a, bias](Tape& t, Node& n) {
            t.nodes_[a].grad += n.grad;
            t.nodes_[bias].grad.row(0) += n.grad.colwise().sum();
        });
    }

    // Broadcast-multiply every row of a by a 1 x d row.
    Id mul_rowwise(Id a, Id row) {
        require(nodes_[row].val.rows() == 1 &&
                    nodes_[row].val.cols() == nodes_[a].val.cols(),
                "mul_rowwise: row must be 1 x ", nodes_[a].val.cols());
        Mat<S> v = nodes_[a].val.array().rowwise() * nodes_[row].val.row(0).array();
        return push(std::move(v), [a, row](Tape& t, Node& n) {
            t.nodes_[a].grad.array() +=
                n.grad.array().rowwise() * t.nodes_[row].val.row(0).array();
            t.nodes_[row].grad.row(0).array() +=
                (n.grad.array() * t.nodes_[a].val.array()).colwise().sum();
        });
    }

    Id mul_el(Id a, Id b) {
        check_same(a, b);
        return push(nodes_[a].val.cwiseProduct(nodes_[b].val), [a, b](Tape& t, Node& n) {
            t.nodes_[a].grad += n.grad.cwiseProduct(t.nodes_[b].val);
            t.nodes_[b].grad += n.grad.cwiseProduct(t.nodes_[a].val);
        });
    }

    Id scale(Id a, S c) {
        return push(nodes_[a].val * c, [a, c](Tape& t, Node& n) {
            t.nodes_[a].grad += n.grad * c;
        });
    }

    Id add_const(Id a, S c) {
        return push(nodes_[a].val.array() + c, [a](Tape& t, Node& n) {
            t.nodes_[a].grad += n.grad;
        });
    }

    Id tanh_(Id a) {
        Mat<S> v = nodes_[a].val.array().tanh();
        return push(std::move(v), [a](Tape& t, Node& n) {
            t.nodes_[a].grad.array() +=
                n.grad.array() * (S(1) - n.val.array().square());
        });
    }

    Id relu(Id a) {
        Mat<S> v = nodes_[a].val.cwiseMax(S(0));
        return push(std::move(v), [a](Tape& t, Node& n) {
            t.nodes_[a].grad.array() +=
                n.grad.array() * (t.nodes_[a].val.array() > S(0)).template cast<S>();
        });
    }

    Id exp_(Id a) {
        Mat<S> v = nodes_[a].val.array().exp();
        return push(std::move(v), [a](Tape& t, Node& n) {
            t.nodes_[a].grad.array() += n.grad.array() * n.val.array();
        });
    }

    Id square(Id a) {
        Mat<S> v = nodes_[a].val.array().square();
        return push(std::move(v), [a](Tape& t, Node& n) {
            t.nodes_[a].grad.array() +=
                n.grad.array() * S(2) * t.nodes_[a].val.array();
        });
    }

    // Sum of each row -> n x 1.
    Id rowsum(Id a) {
        Mat<S> v = nodes_[a].val.rowwise().sum();
        return push(std::move(v), [a](Tape& t, Node& n) {
            t.nodes_[a].grad.colwise() += Vec<S>(n.grad.col(0));
        });
    }

    // Mean over all entries -> 1 x 1.
    Id mean_all(Id a) {
        Mat<S> v(1, 1);
        S inv = S(1) / static_cast<S>(nodes_[a].val.size());
        v(0, 0) = nodes_[a].val.sum() * inv;
        return push(std::move(v), [a, inv](Tape& t, Node& n) {
            t.nodes_[a].grad.array() += n.grad(0, 0) * inv;
        });
    }

    Id sum_all(Id a) {
        Mat<S> v(1, 1);
        v(0, 0) = nodes_[a].val.sum();
        return push(std::move(v), [a](Tape& t, Node& n) {
            t.nodes_[a].grad.array() += n.grad(0, 0);
        });
    }

    // Mean over rows -> 1 x d.
    Id mean_rows(Id a) {
        S inv = S(1) / static_cast<S>(nodes_[a].val.rows());
        Mat<S> v = nodes_[a].val.colwise().sum() * inv;
        return push(std::move(v), [a, inv](Tape& t, Node& n) {
            t.nodes_[a].grad.rowwise() += (n.grad.row(0) * inv).eval();
        });
    }

    // Row-wise softmax.
    Id softmax_rows(Id a) {
        Mat<S> v = nodes_[a].val;
        for (Eigen::Index r = 0; r < v.rows(); ++r) {
            S m = v.row(r).maxCoeff();
            v.row(r) = (v.row(r).array() - m).exp();
            v.row(r) /= v.row(r).sum();
        }
        return push(std::move(v), [a](Tape& t, Node& n) {
            for (Eigen::Index r = 0; r < n.val.rows(); ++r) {
                S dot = n.grad.row(r).dot(n.val.row(r));
                t.nodes_[a].grad.row(r).array() +=
                    n.val.row(r).array() * (n.grad.row(r).array() - dot);
            }
        });
    }

    // Row-wise layer norm with learned gain/shift (both 1 x d).
    Id layernorm_rows(Id a, Id gamma, Id beta, S eps = S(1e-5)) {
        const Mat<S>& x = nodes_[a].val;
        Eigen::Index d = x.cols();
        Mat<S> xhat(x.rows(), d);
        Vec<S> inv_std(x.rows());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            S mu = x.row(r).mean();
            S var = (x.row(r).array() - mu).square().sum() / static_cast<S>(d);
            S is = S(1) / std::sqrt(var + eps);
            inv_std(r) = is;
            xhat.row(r) = (x.row(r).array() - mu) * is;
        }
        Mat<S> v = (xhat.array().rowwise() * nodes_[gamma].val.row(0).array())
                       .rowwise() +
                   nodes_[beta].val.row(0).array();
        return push(std::move(v),
                    [a, gamma, beta, xhat, inv_std, d](Tape& t, Node& n) {
                        for (Eigen::Index r = 0; r < n.grad.rows(); ++r) {
                            auto g = n.grad.row(r).array();
                            t.nodes_[beta].grad.row(0).array() += g;
                            t.nodes_[gamma].grad.row(0).array() +=
                                g * xhat.row(r).array();
                            Eigen::Array<S, 1, Eigen::Dynamic> gh =
                                g * t.nodes_[gamma].val.row(0).array();
                            S m1 = gh.mean();
                            S m2 = (gh * xhat.row(r).array()).mean();
                            t.nodes_[a].grad.row(r).array() +=
                                (gh - m1 - xhat.row(r).array() * m2) * inv_std(r);
                        }
                    });
    }

    // Inverted dropout with an externally supplied 0/1 mask (same shape).
    Id dropout(Id a, const Mat<S>& mask, S rate) {
        S keep = S(1) - rate;
        Mat<S> v = nodes_[a].val.cwiseProduct(mask) / keep;
        return push(std::move(v), [a, mask, keep](Tape& t, Node& n) {
            t.nodes_[a].grad += n.grad.cwiseProduct(mask) / keep;
        });
    }

    Id concat_cols(Id a, Id b) {
        require(nodes_[a].val.rows() == nodes_[b].val.rows(),
                "concat_cols: row mismatch ", nodes_[a].val.rows(), " vs ",
                nodes_[b].val.rows());
        Mat<S> v(nodes_[a].val.rows(), nodes_[a].val.cols() + nodes_[b].val.cols());
        v << nodes_[a].val, nodes_[b].val;
        Eigen::Index ca = nodes_[a].val.cols();
        return push(std::move(v), [a, b, ca](Tape& t, Node& n) {
            t.nodes_[a].grad += n.grad.leftCols(ca);
            t.nodes_[b].grad += n.grad.rightCols(n.grad.cols() - ca);
        });
    }

    // Row slice [begin, begin+count).
    Id rows(Id a, Eigen::Index begin, Eigen::Index count) {
        return push(nodes_[a].val.middleRows(begin, count),
                    [a, begin, count](Tape& t, Node& n) {
                        t.nodes_[a].grad.middleRows(begin, count) += n.grad;
                    });
    }

    Id concat_rows(const std::vector<Id>& parts) {
        require(!parts.empty(), "concat_rows: empty list");
        Eigen::Index total = 0, cols = nodes_[parts[0]].val.cols();
        for (Id p : parts) total += nodes_[p].val.rows();
        Mat<S> v(total, cols);
        Eigen::Index off = 0;
        for (Id p : parts) {
            v.middleRows(off, nodes_[p].val.rows()) = nodes_[p].val;
            off += nodes_[p].val.rows();
        }
        return push(std::move(v), [parts](Tape& t, Node& n) {
            Eigen::Index off = 0;
            for (Id p : parts) {
                Eigen::Index r = t.nodes_[p].val.rows();
                t.nodes_[p].grad += n.grad.middleRows(off, r);
                off += r;
            }
        });
    }

    // Mean-pool each contiguous row segment; offsets[i] is the first row of
    // segment i, offsets.back() the total row count. Output: (B) x d.
    Id segment_mean(Id a, std::vector<Eigen::Index> offsets) {
        size_t b = offsets.size() - 1;
        Mat<S> v(b, nodes_[a].val.cols());
        for (size_t i = 0; i < b; ++i) {
            Eigen::Index n = offsets[i + 1] - offsets[i];
            v.row(i) = nodes_[a].val.middleRows(offsets[i], n).colwise().sum() /
                       static_cast<S>(n);
        }
        return push(std::move(v), [a, offsets](Tape& t, Node& n) {
            for (size_t i = 0; i + 1 < offsets.size(); ++i) {
                Eigen::Index cnt = offsets[i + 1] - offsets[i];
                t.nodes_[a].grad.middleRows(offsets[i], cnt).rowwise() +=
                    (n.grad.row(i) / static_cast<S>(cnt)).eval();
            }
        });
    }

    // Repeat row i of a (B x d) across segment i's rows. Inverse of
    // segment_mean's shape; backward sums per segment.
    Id segment_broadcast(Id a, std::vector<Eigen::Index> offsets) {
        Eigen::Index total = offsets.back();
        Mat<S> v(total, nodes_[a].val.cols());
        for (size_t i = 0; i + 1 < offsets.size(); ++i)
            v.middleRows(offsets[i], offsets[i + 1] - offsets[i]).rowwise() =
                nodes_[a].val.row(i);
        return push(std::move(v), [a, offsets](Tape& t, Node& n) {
            for (size_t i = 0; i + 1 < offsets.size(); ++i)
                t.nodes_[a].grad.row(i) +=
                    n.grad.middleRows(offsets[i], offsets[i + 1] - offsets[i])
                        .colwise()
                        .sum();
        });
    }

    // Normalize each row to unit l2 norm (guarded for near-zero rows).
    Id l2norm_rows(Id a) {
        const Mat<S>& x = nodes_[a].val;
        Vec<S> norms(x.rows());
        Mat<S> v(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            norms(r) = std::max(x.row(r).norm(), S(1e-12));
            v.row(r) = x.row(r) / norms(r);
        }
        return push(std::move(v), [a, norms](Tape& t, Node& n) {
            for (Eigen::Index r = 0; r < n.val.rows(); ++r) {
                S dot = n.grad.row(r).dot(n.val.row(r));
                t.nodes_[a].grad.row(r) +=
                    (n.grad.row(r) - n.val.row(r) * dot) / norms(r);
            }
        });
    }

    Id clamp(Id a, S lo, S hi) {
        Mat<S> v = nodes_[a].val.cwiseMax(lo).cwiseMin(hi);
        return push(std::move(v), [a, lo, hi](Tape& t, Node& n) {
            auto inside = (t.nodes_[a].val.array() > lo &&
                           t.nodes_[a].val.array() < hi)
                              .template cast<S>();
            t.nodes_[a].grad.array() += n.grad.array() * inside;
        });
    }

    // Element-wise min; gradient routed to the smaller operand (ties -> a).
    Id min_el(Id a, Id b) {
        check_same(a, b);
        Mat<S> v = nodes_[a].val.cwiseMin(nodes_[b].val);
        return push(std::move(v), [a, b](Tape& t, Node& n) {
            auto take_a = (t.nodes_[a].val.array() <= t.nodes_[b].val.array())
                              .template cast<S>();
            t.nodes_[a].grad.array() += n.grad.array() * take_a;
            t.nodes_[b].grad.array() += n.grad.array() * (S(1) - take_a);
        });
    }

    // Per row of a (B x d*d): reshape row-major to d x d, zero the strict
    // upper triangle giving L, and emit g_i = z_i^T L L^T z_i = |L^T z_i|^2.
    // z is B x d. Output B x 1.
    Id quad_form_rows(Id a, Id z) {
        const Mat<S>& rows_ = nodes_[a].val;
        const Mat<S>& zv = nodes_[z].val;
        Eigen::Index d = zv.cols();
        require(rows_.cols() == d * d, "quad_form_rows: expected ", d * d,
                " columns, got ", rows_.cols());
        require(rows_.rows() == zv.rows(), "quad_form_rows: batch mismatch");
        Mat<S> v(rows_.rows(), 1);
        Mat<S> w(rows_.rows(), d);  // w_i = L_i^T z_i, reused in backward
        for (Eigen::Index r = 0; r < rows_.rows(); ++r) {
            for (Eigen::Index j = 0; j < d; ++j) {
                S acc = 0;
                for (Eigen::Index i = j; i < d; ++i)
                    acc += zv(r, i) * rows_(r, i * d + j);
                w(r, j) = acc;
            }
            v(r, 0) = w.row(r).squaredNorm();
        }
        return push(std::move(v), [a, z, w, d](Tape& t, Node& n) {
            const Mat<S>& rv = t.nodes_[a].val;
            const Mat<S>& zv = t.nodes_[z].val;
            for (Eigen::Index r = 0; r < n.val.rows(); ++r) {
                S g = n.grad(r, 0);
                // dG/dL_ij = 2 w_j z_i (lower triangle only); dG/dz = 2 L w
                for (Eigen::Index i = 0; i < d; ++i) {
                    S dz = 0;
                    for (Eigen::Index j = 0; j <= i; ++j) {
                        t.nodes_[a].grad(r, i * d + j) +=
                            g * S(2) * w(r, j) * zv(r, i);
                        dz += rv(r, i * d + j) * w(r, j);
                    }
                    t.nodes_[z].grad(r, i) += g * S(2) * dz;
                }
            }
        });
    }

    // Backward from a 1 x 1 root.
    void backward(Id root) {
        require(nodes_[root].val.size() == 1,
                "backward: root must be scalar, got ", nodes_[root].val.rows(),
                " x ", nodes_[root].val.cols());
        for (auto& n : nodes_)
            n.grad = Mat<S>::Zero(n.val.rows(), n.val.cols());
        nodes_[root].grad(0, 0) = S(1);
        for (Id i = root; i >= 0; --i)
            if (nodes_[i].back) nodes_[i].back(*this, nodes_[i]);
    }

private:
    Id push(Mat<S> v, std::function<void(Tape&, Node&)> back) {
        nodes_.push_back(Node{std::move(v), {}, std::move(back)});
        return static_cast<Id>(nodes_.size()) - 1;
    }

    void check_inner(Id a, Id b) const {
        require(nodes_[a].val.cols() == nodes_[b].val.rows(),
                "matmul: inner dims ", nodes_[a].val.cols(), " vs ",
                nodes_[b].val.rows());
    }
    void check_same(Id a, Id b) const {
        require(nodes_[a].val.rows() == nodes_[b].val.rows() &&
                    nodes_[a].val.cols() == nodes_[b].val.cols(),
                "shape mismatch: ", nodes_[a].val.rows(), "x",
                nodes_[a].val.cols(), " vs ", nodes_[b].val.rows(), "x",
                nodes_[b].val.cols());
    }

    std::vector<Node> nodes_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace pdvf
