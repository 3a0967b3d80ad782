#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "langmanip/core/error.hpp"

namespace langmanip {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// A named trainable array plus its optimizer slots. Lives outside any tape;
/// tapes borrow it per forward pass via Tape::use().
template <typename T>
struct Parameter {
    std::string name;
    Mat<T> value;
    Mat<T> m;  // Adam first moment
    Mat<T> v;  // Adam second moment

    Parameter() = default;
    Parameter(std::string n, Mat<T> val) : name(std::move(n)), value(std::move(val)) {
        m = Mat<T>::Zero(value.rows(), value.cols());
        v = Mat<T>::Zero(value.rows(), value.cols());
    }
};

template <typename T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid for the tape that
/// produced it.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    Eigen::Index rows() const;
    Eigen::Index cols() const;
    const Mat<T>& value() const;
};

/// Reverse-mode autodiff tape. Nodes are created in topological order by
/// construction, so backward() is a single reverse sweep. All shapes are
/// 2-D; row vectors (1 x C) stand in for feature vectors.
template <typename T>
class Tape {
public:
    struct Node {
        Mat<T> value;
        Mat<T> grad;
        bool requires_grad = false;
        bool grad_set = false;
        std::function<void(Tape&, const Mat<T>&)> backward;
    };

    // ---- construction ------------------------------------------------

    Var<T> leaf(Mat<T> value, bool requires_grad = false) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return {this, static_cast<int>(nodes_.size() - 1)};
    }

    Var<T> constant(Mat<T> value) { return leaf(std::move(value), false); }

    Var<T> scalar(T v) {
        Mat<T> m(1, 1);
        m(0, 0) = v;
        return constant(std::move(m));
    }

    /// Borrow a parameter. Repeated use() of the same parameter returns the
    /// same node, so shared weights accumulate gradients from every use.
    Var<T> use(Parameter<T>& p) {
        auto it = param_ids_.find(&p);
        if (it != param_ids_.end()) return {this, it->second};
        Var<T> v = leaf(p.value, true);
        param_ids_.emplace(&p, v.id);
        return v;
    }

    bool has(const Parameter<T>& p) const { return param_ids_.count(&p) > 0; }

    /// Gradient accumulated for a borrowed parameter (zeros if untouched).
    Mat<T> grad_of(const Parameter<T>& p) const {
        auto it = param_ids_.find(&p);
        if (it == param_ids_.end() || !nodes_[it->second].grad_set)
            return Mat<T>::Zero(p.value.rows(), p.value.cols());
        return nodes_[it->second].grad;
    }

    const Mat<T>& value(Var<T> v) const { return nodes_[v.id].value; }

    Mat<T> grad(Var<T> v) const {
        const Node& n = nodes_[v.id];
        if (!n.grad_set) return Mat<T>::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    std::size_t size() const { return nodes_.size(); }

    // ---- backward ----------------------------------------------------

    void backward(Var<T> loss) {
        if (nodes_[loss.id].value.rows() != 1 || nodes_[loss.id].value.cols() != 1)
            throw ShapeError("backward() root must be a 1x1 scalar");
        accumulate(loss.id, Mat<T>::Ones(1, 1));
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (n.requires_grad && n.grad_set && n.backward) n.backward(*this, n.grad);
        }
    }

    // ---- primitive ops -----------------------------------------------

    Var<T> matmul(Var<T> a, Var<T> b) {
        check_same_tape(a, b);
        if (a.cols() != b.rows()) throw ShapeError("matmul inner dims " + dims(a) + " vs " + dims(b));
        Mat<T> out = val(a) * val(b);
        return make(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, const Mat<T>& g) {
            if (t.nodes_[ai].requires_grad) t.accumulate(ai, g * t.nodes_[bi].value.transpose());
            if (t.nodes_[bi].requires_grad) t.accumulate(bi, t.nodes_[ai].value.transpose() * g);
        });
    }

    Var<T> transpose(Var<T> a) {
        return make(val(a).transpose(), {a.id}, [ai = a.id](Tape& t, const Mat<T>& g) {
            t.accumulate(ai, g.transpose());
        });
    }

    Var<T> add(Var<T> a, Var<T> b) {
        check_same_shape(a, b, "add");
        return make(val(a) + val(b), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, const Mat<T>& g) {
            if (t.nodes_[ai].requires_grad) t.accumulate(ai, g);
            if (t.nodes_[bi].requires_grad) t.accumulate(bi, g);
        });
    }

    Var<T> sub(Var<T> a, Var<T> b) {
        check_same_shape(a, b, "sub");
        return make(val(a) - val(b), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, const Mat<T>& g) {
            if (t.nodes_[ai].requires_grad) t.accumulate(ai, g);
            if (t.nodes_[bi].requires_grad) t.accumulate(bi, -g);
        });
    }

    Var<T> mul(Var<T> a, Var<T> b) {
        check_same_shape(a, b, "mul");
        return make(val(a).cwiseProduct(val(b)), {a.id, b.id},
                    [ai = a.id, bi = b.id](Tape& t, const Mat<T>& g) {
                        if (t.nodes_[ai].requires_grad)
                            t.accumulate(ai, g.cwiseProduct(t.nodes_[bi].value));
                        if (t.nodes_[bi].requires_grad)
                            t.accumulate(bi, g.cwiseProduct(t.nodes_[ai].value));
                    });
    }

    Var<T> div(Var<T> a, Var<T> b) {
        check_same_shape(a, b, "div");
        return make(val(a).cwiseQuotient(val(b)), {a.id, b.id},
                    [ai = a.id, bi = b.id](Tape& t, const Mat<T>& g) {
                        const Mat<T>& bv = t.nodes_[bi].value;
                        if (t.nodes_[ai].requires_grad) t.accumulate(ai, g.cwiseQuotient(bv));
                        if (t.nodes_[bi].requires_grad) {
                            Mat<T> d = -g.cwiseProduct(t.nodes_[ai].value)
                                            .cwiseQuotient(bv.cwiseProduct(bv));
                            t.accumulate(bi, std::move(d));
                        }
                    });
    }

    /// Broadcast-add a 1 x C row vector to every row of a.
    Var<T> add_rowvec(Var<T> a, Var<T> b) {
        if (b.rows() != 1 || b.cols() != a.cols())
            throw ShapeError("add_rowvec needs 1x" + std::to_string(a.cols()) + ", got " + dims(b));
        Mat<T> out = val(a).rowwise() + val(b).row(0);
        return make(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, const Mat<T>& g) {
            if (t.nodes_[ai].requires_grad) t.accumulate(ai, g);
            if (t.nodes_[bi].requires_grad) t.accumulate(bi, g.colwise().sum());
        });
    }

    /// Broadcast-multiply each row of a by a 1 x C row vector.
    Var<T> mul_rowvec(Var<T> a, Var<T> b) {
        if (b.rows() != 1 || b.cols() != a.cols()) throw ShapeError("mul_rowvec shape " + dims(b));
        Mat<T> out = (val(a).array().rowwise() * val(b).row(0).array()).matrix();
        return make(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, const Mat<T>& g) {
            if (t.nodes_[ai].requires_grad) {
                Mat<T> d = (g.array().rowwise() * t.nodes_[bi].value.row(0).array()).matrix();
                t.accumulate(ai, std::move(d));
            }
            if (t.nodes_[bi].requires_grad) {
                Mat<T> d = g.cwiseProduct(t.nodes_[ai].value).colwise().sum();
                t.accumulate(bi, std::move(d));
            }
        });
    }

    /// Broadcast-add an n x 1 column vector to every column of a.
    Var<T> add_colvec(Var<T> a, Var<T> b) {
        if (b.cols() != 1 || b.rows() != a.rows()) throw ShapeError("add_colvec shape " + dims(b));
        Mat<T> out = val(a).colwise() + val(b).col(0);
        return make(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, const Mat<T>& g) {
            if (t.nodes_[ai].requires_grad) t.accumulate(ai, g);
            if (t.nodes_[bi].requires_grad) t.accumulate(bi, g.rowwise().sum());
        });
    }

    /// Broadcast-multiply each column of a by an n x 1 column vector.
    Var<T> mul_colvec(Var<T> a, Var<T> b) {
        if (b.cols() != 1 || b.rows() != a.rows()) throw ShapeError("mul_colvec shape " + dims(b));
        Mat<T> out = (val(a).array().colwise() * val(b).col(0).array()).matrix();
        return make(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, const Mat<T>& g) {
            if (t.nodes_[ai].requires_grad) {
                Mat<T> d = (g.array().colwise() * t.nodes_[bi].value.col(0).array()).matrix();
                t.accumulate(ai, std::move(d));
            }
            if (t.nodes_[bi].requires_grad) {
                Mat<T> d = g.cwiseProduct(t.nodes_[ai].value).rowwise().sum();
                t.accumulate(bi, std::move(d));
            }
        });
    }

    Var<T> scale(Var<T> a, T s) {
        return make(val(a) * s, {a.id}, [ai = a.id, s](Tape& t, const Mat<T>& g) {
            t.accumulate(ai, g * s);
        });
    }

    Var<T> add_scalar(Var<T> a, T c) {
        return make(Mat<T>((val(a).array() + c).matrix()), {a.id}, [ai = a.id](Tape& t, const Mat<T>& g) {
            t.accumulate(ai, g);
        });
    }

    Var<T> neg(Var<T> a) { return scale(a, T(-1)); }

    Var<T> exp(Var<T> a) {
        Mat<T> out = val(a).array().exp().matrix();
        return make_unary(a, std::move(out), [](const Mat<T>& x, const Mat<T>& y, const Mat<T>& g) {
            (void)x;
            return Mat<T>(g.cwiseProduct(y));
        });
    }

    Var<T> log(Var<T> a) {
        Mat<T> out = val(a).array().log().matrix();
        return make_unary(a, std::move(out), [](const Mat<T>& x, const Mat<T>& y, const Mat<T>& g) {
            (void)y;
            return Mat<T>(g.cwiseQuotient(x));
        });
    }

    Var<T> tanh(Var<T> a) {
        Mat<T> out = val(a).array().tanh().matrix();
        return make_unary(a, std::move(out), [](const Mat<T>& x, const Mat<T>& y, const Mat<T>& g) {
            (void)x;
            return Mat<T>((g.array() * (T(1) - y.array().square())).matrix());
        });
    }

    Var<T> relu(Var<T> a) {
        Mat<T> out = val(a).cwiseMax(T(0));
        return make_unary(a, std::move(out), [](const Mat<T>& x, const Mat<T>& y, const Mat<T>& g) {
            (void)y;
            return Mat<T>((g.array() * (x.array() > T(0)).template cast<T>()).matrix());
        });
    }

    Var<T> sigmoid(Var<T> a) {
        Mat<T> out = (T(1) / (T(1) + (-val(a).array()).exp())).matrix();
        return make_unary(a, std::move(out), [](const Mat<T>& x, const Mat<T>& y, const Mat<T>& g) {
            (void)x;
            return Mat<T>((g.array() * y.array() * (T(1) - y.array())).matrix());
        });
    }

    Var<T> sqrt(Var<T> a) {
        Mat<T> out = val(a).array().sqrt().matrix();
        return make_unary(a, std::move(out), [](const Mat<T>& x, const Mat<T>& y, const Mat<T>& g) {
            (void)x;
            return Mat<T>((g.array() / (T(2) * y.array())).matrix());
        });
    }

    /// y = 1 / sqrt(x + eps)
    Var<T> rsqrt(Var<T> a, T eps) {
        Mat<T> out = (val(a).array() + eps).rsqrt().matrix();
        return make(std::move(out), {a.id}, [ai = a.id, eps](Tape& t, const Mat<T>& g) {
            const auto x = t.nodes_[ai].value.array();
            Mat<T> d = (g.array() * T(-0.5) * (x + eps).pow(T(-1.5))).matrix();
            t.accumulate(ai, std::move(d));
        });
    }

    Var<T> square(Var<T> a) {
        Mat<T> out = val(a).array().square().matrix();
        return make_unary(a, std::move(out), [](const Mat<T>& x, const Mat<T>& y, const Mat<T>& g) {
            (void)y;
            return Mat<T>(T(2) * g.cwiseProduct(x));
        });
    }

    Var<T> abs(Var<T> a) {
        Mat<T> out = val(a).array().abs().matrix();
        return make_unary(a, std::move(out), [](const Mat<T>& x, const Mat<T>& y, const Mat<T>& g) {
            (void)y;
            return Mat<T>((g.array() * x.array().sign()).matrix());
        });
    }

    Var<T> clamp(Var<T> a, T lo, T hi) {
        Mat<T> out = val(a).cwiseMax(lo).cwiseMin(hi);
        return make(std::move(out), {a.id}, [ai = a.id, lo, hi](Tape& t, const Mat<T>& g) {
            const auto x = t.nodes_[ai].value.array();
            Mat<T> d = (g.array() * ((x >= lo) && (x <= hi)).template cast<T>()).matrix();
            t.accumulate(ai, std::move(d));
        });
    }

    Var<T> sum(Var<T> a) {
        Mat<T> out(1, 1);
        out(0, 0) = val(a).sum();
        return make(std::move(out), {a.id}, [ai = a.id](Tape& t, const Mat<T>& g) {
            const Node& n = t.nodes_[ai];
            t.accumulate(ai, Mat<T>::Constant(n.value.rows(), n.value.cols(), g(0, 0)));
        });
    }

    Var<T> mean(Var<T> a) {
        const T inv = T(1) / static_cast<T>(val(a).size());
        return scale(sum(a), inv);
    }

    Var<T> row_sum(Var<T> a) {  // n x C -> n x 1
        Mat<T> out = val(a).rowwise().sum();
        return make(std::move(out), {a.id}, [ai = a.id](Tape& t, const Mat<T>& g) {
            const Node& n = t.nodes_[ai];
            Mat<T> d = g.col(0).replicate(1, n.value.cols());
            t.accumulate(ai, std::move(d));
        });
    }

    Var<T> row_mean(Var<T> a) { return scale(row_sum(a), T(1) / static_cast<T>(a.cols())); }

    Var<T> col_sum(Var<T> a) {  // n x C -> 1 x C
        Mat<T> out = val(a).colwise().sum();
        return make(std::move(out), {a.id}, [ai = a.id](Tape& t, const Mat<T>& g) {
            const Node& n = t.nodes_[ai];
            Mat<T> d = g.row(0).replicate(n.value.rows(), 1);
            t.accumulate(ai, std::move(d));
        });
    }

    Var<T> col_mean(Var<T> a) { return scale(col_sum(a), T(1) / static_cast<T>(a.rows())); }

    /// Numerically stable row-wise softmax with exact gradients (the shift
    /// by the row max is treated as constant, which softmax's shift
    /// invariance makes exact).
    Var<T> softmax_rows(Var<T> a) {
        Mat<T> out = val(a);
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            const T mx = out.row(i).maxCoeff();
            out.row(i) = (out.row(i).array() - mx).exp().matrix();
            out.row(i) /= out.row(i).sum();
        }
        return make(std::move(out), {a.id}, [ai = a.id, self = next_id()](Tape& t, const Mat<T>& g) {
            const Mat<T>& s = t.nodes_[self].value;
            Mat<T> gs = g.cwiseProduct(s);
            Mat<T> rowdot = gs.rowwise().sum();  // n x 1
            Mat<T> d = gs - (s.array().colwise() * rowdot.col(0).array()).matrix();
            t.accumulate(ai, std::move(d));
        });
    }

    Var<T> logsumexp_rows(Var<T> a) {  // n x C -> n x 1
        const Mat<T>& x = val(a);
        Mat<T> out(x.rows(), 1);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const T mx = x.row(i).maxCoeff();
            out(i, 0) = mx + std::log((x.row(i).array() - mx).exp().sum());
        }
        return make(std::move(out), {a.id}, [ai = a.id, self = next_id()](Tape& t, const Mat<T>& g) {
            const Mat<T>& x = t.nodes_[ai].value;
            const Mat<T>& y = t.nodes_[self].value;
            Mat<T> soft = (x.array().colwise() - y.col(0).array()).exp().matrix();
            Mat<T> d = (soft.array().colwise() * g.col(0).array()).matrix();
            t.accumulate(ai, std::move(d));
        });
    }

    Var<T> pick(Var<T> a, Eigen::Index r, Eigen::Index c) {
        if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols())
            throw IndexError("pick(" + std::to_string(r) + "," + std::to_string(c) + ") out of " + dims(a));
        Mat<T> out(1, 1);
        out(0, 0) = val(a)(r, c);
        return make(std::move(out), {a.id}, [ai = a.id, r, c](Tape& t, const Mat<T>& g) {
            const Node& n = t.nodes_[ai];
            Mat<T> d = Mat<T>::Zero(n.value.rows(), n.value.cols());
            d(r, c) = g(0, 0);
            t.accumulate(ai, std::move(d));
        });
    }

    Var<T> gather_rows(Var<T> a, std::vector<int> idx) {
        const Mat<T>& x = val(a);
        Mat<T> out(static_cast<Eigen::Index>(idx.size()), x.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= x.rows()) throw IndexError("gather_rows index out of range");
            out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
        }
        return make(std::move(out), {a.id}, [ai = a.id, idx = std::move(idx)](Tape& t, const Mat<T>& g) {
            const Node& n = t.nodes_[ai];
            Mat<T> d = Mat<T>::Zero(n.value.rows(), n.value.cols());
            for (std::size_t i = 0; i < idx.size(); ++i)
                d.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
            t.accumulate(ai, std::move(d));
        });
    }

    Var<T> concat_cols(const std::vector<Var<T>>& parts) {
        if (parts.empty()) throw ShapeError("concat_cols of nothing");
        Eigen::Index rows = parts[0].rows(), cols = 0;
        for (const auto& p : parts) {
            if (p.rows() != rows) throw ShapeError("concat_cols row mismatch");
            cols += p.cols();
        }
        Mat<T> out(rows, cols);
        std::vector<int> ids;
        std::vector<Eigen::Index> offs;
        Eigen::Index off = 0;
        for (const auto& p : parts) {
            out.middleCols(off, p.cols()) = val(p);
            ids.push_back(p.id);
            offs.push_back(off);
            off += p.cols();
        }
        return make(std::move(out), ids,
                    [ids, offs](Tape& t, const Mat<T>& g) {
                        for (std::size_t i = 0; i < ids.size(); ++i) {
                            Node& n = t.nodes_[ids[i]];
                            if (!n.requires_grad) continue;
                            t.accumulate(ids[i], g.middleCols(offs[i], n.value.cols()));
                        }
                    });
    }

    Var<T> concat_rows(const std::vector<Var<T>>& parts) {
        if (parts.empty()) throw ShapeError("concat_rows of nothing");
        Eigen::Index cols = parts[0].cols(), rows = 0;
        for (const auto& p : parts) {
            if (p.cols() != cols) throw ShapeError("concat_rows col mismatch");
            rows += p.rows();
        }
        Mat<T> out(rows, cols);
        std::vector<int> ids;
        std::vector<Eigen::Index> offs;
        Eigen::Index off = 0;
        for (const auto& p : parts) {
            out.middleRows(off, p.rows()) = val(p);
            ids.push_back(p.id);
            offs.push_back(off);
            off += p.rows();
        }
        return make(std::move(out), ids,
                    [ids, offs](Tape& t, const Mat<T>& g) {
                        for (std::size_t i = 0; i < ids.size(); ++i) {
                            Node& n = t.nodes_[ids[i]];
                            if (!n.requires_grad) continue;
                            t.accumulate(ids[i], g.middleRows(offs[i], n.value.rows()));
                        }
                    });
    }

    /// Repeat a 1 x C row n times (broadcast to per-point rows).
    Var<T> repeat_row(Var<T> a, Eigen::Index n) {
        if (a.rows() != 1) throw ShapeError("repeat_row wants 1xC, got " + dims(a));
        Mat<T> out = val(a).replicate(n, 1);
        return make(std::move(out), {a.id}, [ai = a.id](Tape& t, const Mat<T>& g) {
            t.accumulate(ai, g.colwise().sum());
        });
    }

    /// Per-group max over rows of a. groups[g] lists row indices of group g
    /// (each must be non-empty). Ties keep the earliest listed row, so the
    /// pooling is deterministic for a fixed listing order.
    Var<T> group_max(Var<T> a, const std::vector<std::vector<int>>& groups) {
        const Mat<T>& x = val(a);
        const Eigen::Index G = static_cast<Eigen::Index>(groups.size());
        Mat<T> out(G, x.cols());
        auto argmax = std::vector<std::vector<int>>(groups.size());
        for (std::size_t g = 0; g < groups.size(); ++g) {
            if (groups[g].empty()) throw ShapeError("group_max: empty group");
            argmax[g].assign(static_cast<std::size_t>(x.cols()), groups[g][0]);
            out.row(static_cast<Eigen::Index>(g)) = x.row(groups[g][0]);
            for (std::size_t k = 1; k < groups[g].size(); ++k) {
                const int r = groups[g][k];
                if (r < 0 || r >= x.rows()) throw IndexError("group_max index out of range");
                for (Eigen::Index c = 0; c < x.cols(); ++c) {
                    if (x(r, c) > out(static_cast<Eigen::Index>(g), c)) {
                        out(static_cast<Eigen::Index>(g), c) = x(r, c);
                        argmax[g][static_cast<std::size_t>(c)] = r;
                    }
                }
            }
        }
        return make(std::move(out), {a.id},
                    [ai = a.id, argmax = std::move(argmax)](Tape& t, const Mat<T>& g) {
                        const Node& n = t.nodes_[ai];
                        Mat<T> d = Mat<T>::Zero(n.value.rows(), n.value.cols());
                        for (std::size_t gi = 0; gi < argmax.size(); ++gi)
                            for (Eigen::Index c = 0; c < d.cols(); ++c)
                                d(argmax[gi][static_cast<std::size_t>(c)], c) +=
                                    g(static_cast<Eigen::Index>(gi), c);
                        t.accumulate(ai, std::move(d));
                    });
    }

    /// out[i] = sum_j w(i,j) * a(idx(i,j), :). idx and w are constants
    /// (interpolation structure derived from geometry).
    Var<T> interp_rows(Var<T> a, const Eigen::MatrixXi& idx, const Mat<T>& w) {
        const Mat<T>& x = val(a);
        if (idx.rows() != w.rows() || idx.cols() != w.cols())
            throw ShapeError("interp_rows idx/w shape mismatch");
        Mat<T> out = Mat<T>::Zero(idx.rows(), x.cols());
        for (Eigen::Index i = 0; i < idx.rows(); ++i)
            for (Eigen::Index j = 0; j < idx.cols(); ++j)
                out.row(i) += w(i, j) * x.row(idx(i, j));
        return make(std::move(out), {a.id}, [ai = a.id, idx, w](Tape& t, const Mat<T>& g) {
            const Node& n = t.nodes_[ai];
            Mat<T> d = Mat<T>::Zero(n.value.rows(), n.value.cols());
            for (Eigen::Index i = 0; i < idx.rows(); ++i)
                for (Eigen::Index j = 0; j < idx.cols(); ++j)
                    d.row(idx(i, j)) += w(i, j) * g.row(i);
            t.accumulate(ai, std::move(d));
        });
    }

    /// Row-wise y = x / max(||x||, eps_floor).
    Var<T> l2_normalize_rows(Var<T> a, T eps_floor = T(1e-12)) {
        const Mat<T>& x = val(a);
        Mat<T> norms(x.rows(), 1);
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            norms(i, 0) = std::max(x.row(i).norm(), eps_floor);
        Mat<T> out = (x.array().colwise() / norms.col(0).array()).matrix();
        return make(std::move(out), {a.id},
                    [ai = a.id, norms, self = next_id()](Tape& t, const Mat<T>& g) {
                        const Mat<T>& y = t.nodes_[self].value;  // already normalized
                        Mat<T> rowdot = g.cwiseProduct(y).rowwise().sum();
                        Mat<T> d = (g - (y.array().colwise() * rowdot.col(0).array()).matrix())
                                       .array()
                                       .colwise() /
                                   norms.col(0).array();
                        t.accumulate(ai, std::move(d));
                    });
    }

private:
    template <typename F>
    Var<T> make(Mat<T> out, std::initializer_list<int> parents, F&& back) {
        return make(std::move(out), std::vector<int>(parents), std::forward<F>(back));
    }

    template <typename F>
    Var<T> make(Mat<T> out, const std::vector<int>& parents, F&& back) {
        Node n;
        n.value = std::move(out);
        for (int p : parents)
            if (nodes_[p].requires_grad) n.requires_grad = true;
        if (n.requires_grad) n.backward = std::forward<F>(back);
        nodes_.push_back(std::move(n));
        return {this, static_cast<int>(nodes_.size() - 1)};
    }

    /// Unary op whose backward needs input and/or output values.
    template <typename F>
    Var<T> make_unary(Var<T> a, Mat<T> out, F&& dfn) {
        const int self = next_id();
        return make(std::move(out), {a.id},
                    [ai = a.id, self, dfn = std::forward<F>(dfn)](Tape& t, const Mat<T>& g) {
                        t.accumulate(ai, dfn(t.nodes_[ai].value, t.nodes_[self].value, g));
                    });
    }

    int next_id() const { return static_cast<int>(nodes_.size()); }

    const Mat<T>& val(Var<T> v) const { return nodes_[v.id].value; }

    void accumulate(int id, Mat<T>&& g) {
        Node& n = nodes_[id];
        if (!n.grad_set) {
            n.grad = std::move(g);
            n.grad_set = true;
        } else {
            n.grad += g;
        }
    }

    template <typename Expr>
    void accumulate(int id, const Expr& g) {
        accumulate(id, Mat<T>(g));
    }

    void check_same_tape(Var<T> a, Var<T> b) const {
        if (a.tape != b.tape) throw ShapeError("vars from different tapes");
    }

    void check_same_shape(Var<T> a, Var<T> b, const char* op) const {
        if (a.rows() != b.rows() || a.cols() != b.cols())
            throw ShapeError(std::string(op) + " shape mismatch " + dims(a) + " vs " + dims(b));
    }

    static std::string dims(Var<T> v) {
        return std::to_string(v.rows()) + "x" + std::to_string(v.cols());
    }

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter<T>*, int> param_ids_;

    friend struct Var<T>;
};

template <typename T>
Eigen::Index Var<T>::rows() const { return tape->value(*this).rows(); }
template <typename T>
Eigen::Index Var<T>::cols() const { return tape->value(*this).cols(); }
template <typename T>
const Mat<T>& Var<T>::value() const { return tape->value(*this); }

}  // namespace langmanip
