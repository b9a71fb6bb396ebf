#ifndef FREEGAN_AUTODIFF_HPP
#define FREEGAN_AUTODIFF_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "freegan/common.hpp"

// Minimal reverse-mode differentiation over dense real tensors (rank <= 3,
// batch x rows x cols, row-major). A Graph owns its nodes, is built per
// training step and then discarded; there is no persistent tape. A graph is
// confined to one thread; distinct graphs may run on distinct threads.
//
// Values and gradients are double precision throughout, so gradient
// reductions meet the 64-bit accumulation requirement by construction.

namespace freegan::ad {

struct Shape {
    int rank = 0;
    long d[3] = {1, 1, 1};

    static Shape scalar() { return {1, {1, 1, 1}}; }
    static Shape vec(long n) { return {1, {n, 1, 1}}; }
    static Shape mat(long r, long c) { return {2, {r, c, 1}}; }
    static Shape t3(long b, long r, long c) { return {3, {b, r, c}}; }

    long numel() const {
        long n = 1;
        for (int i = 0; i < rank; ++i) n *= d[i];
        return rank == 0 ? 1 : n;
    }
    long last() const { return rank > 0 ? d[rank - 1] : 1; }
    bool operator==(const Shape& o) const {
        if (rank != o.rank) return false;
        for (int i = 0; i < rank; ++i)
            if (d[i] != o.d[i]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }
    std::string str() const {
        std::string s = "(";
        for (int i = 0; i < rank; ++i) s += std::to_string(d[i]) + (i + 1 < rank ? "," : "");
        return s + ")";
    }
};

class Graph;

struct Node {
    Graph* owner = nullptr;
    Shape shape;
    std::vector<real> v;
    std::vector<real> g;  // allocated lazily during backward
    bool requires_grad = false;
    std::vector<Node*> parents;
    std::function<void(Node&)> backward_fn;

    std::vector<real>& grad() {
        if (g.empty()) g.assign(v.size(), 0.0);
        return g;
    }
};

using Var = Node*;

class Graph {
  public:
    Node* make(const Shape& s, bool requires_grad) {
        nodes_.push_back(std::make_unique<Node>());
        Node* n = nodes_.back().get();
        n->owner = this;
        n->shape = s;
        n->v.assign(static_cast<size_t>(s.numel()), 0.0);
        n->requires_grad = requires_grad;
        return n;
    }

    Var leaf(const std::vector<real>& data, const Shape& s, bool requires_grad) {
        if (static_cast<long>(data.size()) != s.numel())
            throw ShapeError("leaf: data size " + std::to_string(data.size()) +
                             " != shape " + s.str());
        Node* n = make(s, requires_grad);
        n->v = data;
        return n;
    }

    Var constant(const std::vector<real>& data, const Shape& s) { return leaf(data, s, false); }

    Var constant_scalar(real x) {
        Node* n = make(Shape::scalar(), false);
        n->v[0] = x;
        return n;
    }

    // Reverse sweep in anti-topological (reverse creation) order; every node
    // is visited exactly once, so shared subexpressions accumulate gradients.
    void backward(Var loss) {
        if (loss->shape.numel() != 1) throw InvalidInput("backward: loss must be scalar");
        for (auto& n : nodes_) n->g.clear();
        loss->grad()[0] = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node* n = it->get();
            if (!n->requires_grad || n->g.empty() || !n->backward_fn) continue;
            n->backward_fn(*n);
        }
    }

    size_t node_count() const { return nodes_.size(); }

  private:
    std::vector<std::unique_ptr<Node>> nodes_;
};

namespace detail {

inline bool needs(std::initializer_list<Var> ps) {
    for (Var p : ps)
        if (p && p->requires_grad) return true;
    return false;
}

inline Var child(const Shape& s, std::initializer_list<Var> parents) {
    Graph* g = (*parents.begin())->owner;
    Node* n = g->make(s, needs(parents));
    for (Var p : parents) n->parents.push_back(p);
    return n;
}

using RMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RMat>;
using CMatMap = Eigen::Map<const RMat>;

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

template <class Fwd, class Bwd>
Var unary_op(Var x, Fwd fwd, Bwd dfdx) {
    Var y = detail::child(x->shape, {x});
    for (size_t i = 0; i < x->v.size(); ++i) y->v[i] = fwd(x->v[i]);
    if (y->requires_grad)
        y->backward_fn = [x, dfdx](Node& self) {
            if (!x->requires_grad) return;
            auto& gx = x->grad();
            for (size_t i = 0; i < self.v.size(); ++i)
                gx[i] += dfdx(x->v[i], self.v[i]) * self.g[i];
        };
    return y;
}

inline Var add(Var a, Var b) {
    // same shape, or b a rank-1 vector broadcast over the last dimension
    const bool bcast = (b->shape.rank == 1 && a->shape.rank > 1 && b->shape.d[0] == a->shape.last());
    if (!bcast && a->shape != b->shape)
        throw ShapeError("add: " + a->shape.str() + " vs " + b->shape.str());
    Var y = detail::child(a->shape, {a, b});
    const long C = b->shape.numel();
    for (size_t i = 0; i < a->v.size(); ++i) y->v[i] = a->v[i] + (bcast ? b->v[i % C] : b->v[i]);
    if (y->requires_grad)
        y->backward_fn = [a, b, bcast, C](Node& self) {
            if (a->requires_grad) {
                auto& ga = a->grad();
                for (size_t i = 0; i < self.g.size(); ++i) ga[i] += self.g[i];
            }
            if (b->requires_grad) {
                auto& gb = b->grad();
                for (size_t i = 0; i < self.g.size(); ++i) gb[bcast ? i % C : i] += self.g[i];
            }
        };
    return y;
}

inline Var sub(Var a, Var b) {
    if (a->shape != b->shape) throw ShapeError("sub: " + a->shape.str() + " vs " + b->shape.str());
    Var y = detail::child(a->shape, {a, b});
    for (size_t i = 0; i < a->v.size(); ++i) y->v[i] = a->v[i] - b->v[i];
    if (y->requires_grad)
        y->backward_fn = [a, b](Node& self) {
            if (a->requires_grad) {
                auto& ga = a->grad();
                for (size_t i = 0; i < self.g.size(); ++i) ga[i] += self.g[i];
            }
            if (b->requires_grad) {
                auto& gb = b->grad();
                for (size_t i = 0; i < self.g.size(); ++i) gb[i] -= self.g[i];
            }
        };
    return y;
}

inline Var mul(Var a, Var b) {
    const bool bcast = (b->shape.rank == 1 && a->shape.rank > 1 && b->shape.d[0] == a->shape.last());
    if (!bcast && a->shape != b->shape)
        throw ShapeError("mul: " + a->shape.str() + " vs " + b->shape.str());
    Var y = detail::child(a->shape, {a, b});
    const long C = b->shape.numel();
    for (size_t i = 0; i < a->v.size(); ++i) y->v[i] = a->v[i] * (bcast ? b->v[i % C] : b->v[i]);
    if (y->requires_grad)
        y->backward_fn = [a, b, bcast, C](Node& self) {
            if (a->requires_grad) {
                auto& ga = a->grad();
                for (size_t i = 0; i < self.g.size(); ++i)
                    ga[i] += (bcast ? b->v[i % C] : b->v[i]) * self.g[i];
            }
            if (b->requires_grad) {
                auto& gb = b->grad();
                for (size_t i = 0; i < self.g.size(); ++i)
                    gb[bcast ? i % C : i] += a->v[i] * self.g[i];
            }
        };
    return y;
}

inline Var neg(Var x) {
    return unary_op(x, [](real v) { return -v; }, [](real, real) { return -1.0; });
}
inline Var sin_op(Var x) {
    return unary_op(x, [](real v) { return std::sin(v); },
                    [](real v, real) { return std::cos(v); });
}
inline Var cos_op(Var x) {
    return unary_op(x, [](real v) { return std::cos(v); },
                    [](real v, real) { return -std::sin(v); });
}
inline Var exp_op(Var x) {
    return unary_op(x, [](real v) { return std::exp(v); }, [](real, real y) { return y; });
}
inline Var log_op(Var x) {
    for (real v : x->v)
        if (!(v > 0.0)) throw DomainError("log: input must be positive");
    return unary_op(x, [](real v) { return std::log(v); }, [](real v, real) { return 1.0 / v; });
}
// sqrt(v + 1e-24): the tiny offset keeps the derivative finite at zero.
inline Var sqrt_op(Var x) {
    return unary_op(x, [](real v) { return std::sqrt(v + 1e-24); },
                    [](real, real y) { return 0.5 / y; });
}
// subgradient 0 at the kink
inline Var abs_op(Var x) {
    return unary_op(x, [](real v) { return std::abs(v); },
                    [](real v, real) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}
inline Var clamp_min(Var x, real floor) {
    for (real v : x->v)
        if (std::isnan(v)) throw DomainError("clamp_min: NaN input");
    return unary_op(x, [floor](real v) { return std::max(v, floor); },
                    [floor](real v, real) { return v > floor ? 1.0 : 0.0; });
}
inline Var mul_scalar(Var x, real s) {
    return unary_op(x, [s](real v) { return s * v; }, [s](real, real) { return s; });
}
inline Var add_scalar(Var x, real s) {
    return unary_op(x, [s](real v) { return v + s; }, [](real, real) { return 1.0; });
}
inline Var gelu(Var x) {
    constexpr real inv_sqrt2 = 0.70710678118654752440;
    constexpr real inv_sqrt2pi = 0.39894228040143267794;
    return unary_op(
        x, [=](real v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [=](real v, real) {
            return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
        });
}

// anti-wrapping |x - 2*pi*round(x/2*pi)|; subgradient 0 at the wrap kinks
inline Var anti_wrap_op(Var x) {
    return unary_op(
        x, [](real v) { return std::abs(v - kTwoPi * std::round(v / kTwoPi)); },
        [](real v, real) {
            const real r = v - kTwoPi * std::round(v / kTwoPi);
            if (r == 0.0 || std::abs(r) == kPi) return 0.0;
            return r > 0 ? 1.0 : -1.0;
        });
}

// elementwise two-argument arctangent, result in (-pi, pi]
inline Var atan2_op(Var y, Var x) {
    if (y->shape != x->shape) throw ShapeError("atan2: shape mismatch");
    Var out = detail::child(y->shape, {y, x});
    for (size_t i = 0; i < y->v.size(); ++i) {
        real p = std::atan2(y->v[i], x->v[i]);
        if (p <= -kPi) p = kPi;
        out->v[i] = p;
    }
    if (out->requires_grad)
        out->backward_fn = [y, x](Node& self) {
            for (size_t i = 0; i < self.g.size(); ++i) {
                const real r2 = x->v[i] * x->v[i] + y->v[i] * y->v[i];
                if (r2 == 0.0) continue;
                if (y->requires_grad) y->grad()[i] += x->v[i] / r2 * self.g[i];
                if (x->requires_grad) x->grad()[i] -= y->v[i] / r2 * self.g[i];
            }
        };
    return out;
}

// multiply each last-dim position by a fixed (non-differentiated) coefficient
inline Var cmul_lastdim(Var x, const std::vector<real>& w) {
    if (static_cast<long>(w.size()) != x->shape.last())
        throw ShapeError("cmul_lastdim: coefficient length mismatch");
    Var y = detail::child(x->shape, {x});
    const size_t C = w.size();
    for (size_t i = 0; i < x->v.size(); ++i) y->v[i] = x->v[i] * w[i % C];
    if (y->requires_grad)
        y->backward_fn = [x, w, C](Node& self) {
            auto& gx = x->grad();
            for (size_t i = 0; i < self.g.size(); ++i) gx[i] += w[i % C] * self.g[i];
        };
    return y;
}

// value copy with the graph edge severed
inline Var detach(Var x) {
    Var y = x->owner->make(x->shape, false);
    y->v = x->v;
    return y;
}

// ---------------------------------------------------------------------------
// reductions and structure ops
// ---------------------------------------------------------------------------

inline Var mean(Var x) {
    Var y = detail::child(Shape::scalar(), {x});
    real acc = 0.0;
    for (real v : x->v) acc += v;
    const real inv = 1.0 / static_cast<real>(x->v.size());
    y->v[0] = acc * inv;
    if (y->requires_grad)
        y->backward_fn = [x, inv](Node& self) {
            auto& gx = x->grad();
            const real g0 = self.g[0] * inv;
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += g0;
        };
    return y;
}

inline Var sum(Var x) {
    Var y = detail::child(Shape::scalar(), {x});
    real acc = 0.0;
    for (real v : x->v) acc += v;
    y->v[0] = acc;
    if (y->requires_grad)
        y->backward_fn = [x](Node& self) {
            auto& gx = x->grad();
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += self.g[0];
        };
    return y;
}

// swap the last two dimensions (rank 2 or 3)
inline Var transpose(Var x) {
    if (x->shape.rank < 2) throw ShapeError("transpose: rank must be >= 2");
    Shape s = x->shape;
    std::swap(s.d[s.rank - 2], s.d[s.rank - 1]);
    Var y = detail::child(s, {x});
    const long B = (x->shape.rank == 3) ? x->shape.d[0] : 1;
    const long R = x->shape.d[x->shape.rank - 2], C = x->shape.d[x->shape.rank - 1];
    for (long b = 0; b < B; ++b)
        for (long r = 0; r < R; ++r)
            for (long c = 0; c < C; ++c)
                y->v[(b * C + c) * R + r] = x->v[(b * R + r) * C + c];
    if (y->requires_grad)
        y->backward_fn = [x, B, R, C](Node& self) {
            auto& gx = x->grad();
            for (long b = 0; b < B; ++b)
                for (long r = 0; r < R; ++r)
                    for (long c = 0; c < C; ++c)
                        gx[(b * R + r) * C + c] += self.g[(b * C + c) * R + r];
        };
    return y;
}

// concatenate along the last dimension
inline Var concat_lastdim(Var a, Var b) {
    if (a->shape.rank != b->shape.rank) throw ShapeError("concat: rank mismatch");
    Shape s = a->shape;
    for (int i = 0; i + 1 < s.rank; ++i)
        if (a->shape.d[i] != b->shape.d[i]) throw ShapeError("concat: leading dims differ");
    const long Ca = a->shape.last(), Cb = b->shape.last();
    s.d[s.rank - 1] = Ca + Cb;
    Var y = detail::child(s, {a, b});
    const long rows = a->shape.numel() / Ca;
    for (long r = 0; r < rows; ++r) {
        std::copy_n(&a->v[r * Ca], Ca, &y->v[r * (Ca + Cb)]);
        std::copy_n(&b->v[r * Cb], Cb, &y->v[r * (Ca + Cb) + Ca]);
    }
    if (y->requires_grad)
        y->backward_fn = [a, b, Ca, Cb, rows](Node& self) {
            for (long r = 0; r < rows; ++r) {
                if (a->requires_grad) {
                    auto& ga = a->grad();
                    for (long c = 0; c < Ca; ++c) ga[r * Ca + c] += self.g[r * (Ca + Cb) + c];
                }
                if (b->requires_grad) {
                    auto& gb = b->grad();
                    for (long c = 0; c < Cb; ++c) gb[r * Cb + c] += self.g[r * (Ca + Cb) + Ca + c];
                }
            }
        };
    return y;
}

// contiguous slice along the last dimension
inline Var slice_lastdim(Var x, long offset, long len) {
    const long C = x->shape.last();
    if (offset < 0 || offset + len > C) throw ShapeError("slice: out of range");
    Shape s = x->shape;
    s.d[s.rank - 1] = len;
    Var y = detail::child(s, {x});
    const long rows = x->shape.numel() / C;
    for (long r = 0; r < rows; ++r)
        std::copy_n(&x->v[r * C + offset], len, &y->v[r * len]);
    if (y->requires_grad)
        y->backward_fn = [x, offset, len, C, rows](Node& self) {
            auto& gx = x->grad();
            for (long r = 0; r < rows; ++r)
                for (long c = 0; c < len; ++c) gx[r * C + offset + c] += self.g[r * len + c];
        };
    return y;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

// a: (m,k) or (B,m,k); b: (k,n). Output matches a's rank.
inline Var matmul(Var a, Var b) {
    using namespace detail;
    if (b->shape.rank != 2) throw ShapeError("matmul: rhs must be rank 2");
    const long k = b->shape.d[0], n = b->shape.d[1];
    const long B = (a->shape.rank == 3) ? a->shape.d[0] : 1;
    const long m = a->shape.d[a->shape.rank - 2];
    if (a->shape.rank < 2 || a->shape.last() != k)
        throw ShapeError("matmul: " + a->shape.str() + " x " + b->shape.str());
    Shape s = (a->shape.rank == 3) ? Shape::t3(B, m, n) : Shape::mat(m, n);
    Var y = detail::child(s, {a, b});
    CMatMap bm(b->v.data(), k, n);
    for (long i = 0; i < B; ++i)
        MatMap(y->v.data() + i * m * n, m, n).noalias() =
            CMatMap(a->v.data() + i * m * k, m, k) * bm;
    if (y->requires_grad)
        y->backward_fn = [a, b, B, m, k, n](Node& self) {
            CMatMap bm(b->v.data(), k, n);
            for (long i = 0; i < B; ++i) {
                CMatMap gy(self.g.data() + i * m * n, m, n);
                if (a->requires_grad)
                    MatMap(a->grad().data() + i * m * k, m, k).noalias() += gy * bm.transpose();
                if (b->requires_grad)
                    MatMap(b->grad().data(), k, n).noalias() +=
                        CMatMap(a->v.data() + i * m * k, m, k).transpose() * gy;
            }
        };
    return y;
}

// Dense 1-D convolution over time, stride 1, zero same-padding.
// x: (B,T,Cin), w: (k,Cin,Cout) with k odd. Pointwise convolution is k=1.
inline Var conv1d(Var x, Var w) {
    using namespace detail;
    if (x->shape.rank != 3 || w->shape.rank != 3) throw ShapeError("conv1d: need rank-3 x and w");
    const long B = x->shape.d[0], T = x->shape.d[1], Cin = x->shape.d[2];
    const long k = w->shape.d[0], Cout = w->shape.d[2];
    if (w->shape.d[1] != Cin) throw ShapeError("conv1d: channel mismatch");
    if (k % 2 == 0) throw ShapeError("conv1d: kernel must be odd");
    const long p = (k - 1) / 2;
    Var y = detail::child(Shape::t3(B, T, Cout), {x, w});
    CMatMap wm(w->v.data(), k * Cin, Cout);

    std::vector<real> col(static_cast<size_t>(T) * k * Cin);
    auto build_col = [&](long b) {
        std::fill(col.begin(), col.end(), 0.0);
        for (long t = 0; t < T; ++t)
            for (long j = 0; j < k; ++j) {
                const long src = t + j - p;
                if (src < 0 || src >= T) continue;
                std::copy_n(&x->v[(b * T + src) * Cin], Cin, &col[(t * k + j) * Cin]);
            }
    };
    for (long b = 0; b < B; ++b) {
        build_col(b);
        MatMap(y->v.data() + b * T * Cout, T, Cout).noalias() =
            CMatMap(col.data(), T, k * Cin) * wm;
    }
    if (y->requires_grad)
        y->backward_fn = [x, w, B, T, Cin, k, Cout, p](Node& self) {
            CMatMap wm(w->v.data(), k * Cin, Cout);
            std::vector<real> col(static_cast<size_t>(T) * k * Cin);
            std::vector<real> gcol(static_cast<size_t>(T) * k * Cin);
            for (long b = 0; b < B; ++b) {
                CMatMap gy(self.g.data() + b * T * Cout, T, Cout);
                if (w->requires_grad) {
                    std::fill(col.begin(), col.end(), 0.0);
                    for (long t = 0; t < T; ++t)
                        for (long j = 0; j < k; ++j) {
                            const long src = t + j - p;
                            if (src < 0 || src >= T) continue;
                            std::copy_n(&x->v[(b * T + src) * Cin], Cin, &col[(t * k + j) * Cin]);
                        }
                    MatMap(w->grad().data(), k * Cin, Cout).noalias() +=
                        CMatMap(col.data(), T, k * Cin).transpose() * gy;
                }
                if (x->requires_grad) {
                    MatMap(gcol.data(), T, k * Cin).noalias() = gy * wm.transpose();
                    auto& gx = x->grad();
                    for (long t = 0; t < T; ++t)
                        for (long j = 0; j < k; ++j) {
                            const long src = t + j - p;
                            if (src < 0 || src >= T) continue;
                            for (long c = 0; c < Cin; ++c)
                                gx[(b * T + src) * Cin + c] += gcol[(t * k + j) * Cin + c];
                        }
                }
            }
        };
    return y;
}

// Depthwise 1-D convolution: x (B,T,C), w (k,C), zero same-padding.
inline Var conv1d_depthwise(Var x, Var w) {
    if (x->shape.rank != 3 || w->shape.rank != 2) throw ShapeError("conv1d_depthwise: bad ranks");
    const long B = x->shape.d[0], T = x->shape.d[1], C = x->shape.d[2];
    const long k = w->shape.d[0];
    if (w->shape.d[1] != C) throw ShapeError("conv1d_depthwise: channel mismatch");
    if (k % 2 == 0) throw ShapeError("conv1d_depthwise: kernel must be odd");
    const long p = (k - 1) / 2;
    Var y = detail::child(x->shape, {x, w});
    for (long b = 0; b < B; ++b)
        for (long t = 0; t < T; ++t) {
            real* out = &y->v[(b * T + t) * C];
            for (long j = 0; j < k; ++j) {
                const long src = t + j - p;
                if (src < 0 || src >= T) continue;
                const real* in = &x->v[(b * T + src) * C];
                const real* wj = &w->v[j * C];
                for (long c = 0; c < C; ++c) out[c] += in[c] * wj[c];
            }
        }
    if (y->requires_grad)
        y->backward_fn = [x, w, B, T, C, k, p](Node& self) {
            for (long b = 0; b < B; ++b)
                for (long t = 0; t < T; ++t) {
                    const real* gy = &self.g[(b * T + t) * C];
                    for (long j = 0; j < k; ++j) {
                        const long src = t + j - p;
                        if (src < 0 || src >= T) continue;
                        if (x->requires_grad) {
                            auto& gx = x->grad();
                            const real* wj = &w->v[j * C];
                            for (long c = 0; c < C; ++c) gx[(b * T + src) * C + c] += wj[c] * gy[c];
                        }
                        if (w->requires_grad) {
                            auto& gw = w->grad();
                            const real* in = &x->v[(b * T + src) * C];
                            for (long c = 0; c < C; ++c) gw[j * C + c] += in[c] * gy[c];
                        }
                    }
                }
        };
    return y;
}

// Layer normalization over the last (channel) dimension with learnable
// scale/shift, following the channel-last ConvNeXt placement.
inline Var layer_norm(Var x, Var gamma, Var beta, real eps = 1e-6) {
    const long C = x->shape.last();
    if (gamma->shape.rank != 1 || gamma->shape.d[0] != C || beta->shape != gamma->shape)
        throw ShapeError("layer_norm: scale/shift must be rank-1 of channel size");
    Var y = detail::child(x->shape, {x, gamma, beta});
    const long rows = x->shape.numel() / C;
    std::vector<real> inv_std(static_cast<size_t>(rows)), mu(static_cast<size_t>(rows));
    for (long r = 0; r < rows; ++r) {
        const real* xr = &x->v[r * C];
        real m = 0.0;
        for (long c = 0; c < C; ++c) m += xr[c];
        m /= static_cast<real>(C);
        real var = 0.0;
        for (long c = 0; c < C; ++c) var += (xr[c] - m) * (xr[c] - m);
        var /= static_cast<real>(C);
        const real is = 1.0 / std::sqrt(var + eps);
        mu[r] = m;
        inv_std[r] = is;
        for (long c = 0; c < C; ++c)
            y->v[r * C + c] = gamma->v[c] * (xr[c] - m) * is + beta->v[c];
    }
    if (y->requires_grad)
        y->backward_fn = [x, gamma, beta, C, rows, mu, inv_std](Node& self) {
            for (long r = 0; r < rows; ++r) {
                const real* xr = &x->v[r * C];
                const real* gy = &self.g[r * C];
                const real is = inv_std[r], m = mu[r];
                if (gamma->requires_grad) {
                    auto& gg = gamma->grad();
                    for (long c = 0; c < C; ++c) gg[c] += gy[c] * (xr[c] - m) * is;
                }
                if (beta->requires_grad) {
                    auto& gb = beta->grad();
                    for (long c = 0; c < C; ++c) gb[c] += gy[c];
                }
                if (x->requires_grad) {
                    // dx = is * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
                    real mean_dxh = 0.0, mean_dxh_xh = 0.0;
                    for (long c = 0; c < C; ++c) {
                        const real xh = (xr[c] - m) * is;
                        const real dxh = gy[c] * gamma->v[c];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh;
                    }
                    mean_dxh /= static_cast<real>(C);
                    mean_dxh_xh /= static_cast<real>(C);
                    auto& gx = x->grad();
                    for (long c = 0; c < C; ++c) {
                        const real xh = (xr[c] - m) * is;
                        const real dxh = gy[c] * gamma->v[c];
                        gx[r * C + c] += is * (dxh - mean_dxh - xh * mean_dxh_xh);
                    }
                }
            }
        };
    return y;
}

// ---------------------------------------------------------------------------
// signal-layout ops (linear; adjoint pairs)
// ---------------------------------------------------------------------------

// frames (B,F,L) -> overlap-added signal (B,(F-1)*shift+L)
inline Var overlap_add(Var frames, long shift) {
    if (frames->shape.rank != 3) throw ShapeError("overlap_add: need (B,F,L)");
    const long B = frames->shape.d[0], F = frames->shape.d[1], L = frames->shape.d[2];
    const long out_len = (F - 1) * shift + L;
    Var y = detail::child(Shape::mat(B, out_len), {frames});
    for (long b = 0; b < B; ++b)
        for (long s = 0; s < F; ++s) {
            const real* in = &frames->v[(b * F + s) * L];
            real* out = &y->v[b * out_len + s * shift];
            for (long i = 0; i < L; ++i) out[i] += in[i];
        }
    if (y->requires_grad)
        y->backward_fn = [frames, B, F, L, shift, out_len](Node& self) {
            auto& gf = frames->grad();
            for (long b = 0; b < B; ++b)
                for (long s = 0; s < F; ++s) {
                    const real* gy = &self.g[b * out_len + s * shift];
                    real* out = &gf[(b * F + s) * L];
                    for (long i = 0; i < L; ++i) out[i] += gy[i];
                }
        };
    return y;
}

// signal (B,T) -> frames (B,F,L) gathered at s*shift (no padding)
inline Var frame_grid(Var x, long frames, long frame_len, long shift) {
    if (x->shape.rank != 2) throw ShapeError("frame_grid: need (B,T)");
    const long B = x->shape.d[0], T = x->shape.d[1];
    if ((frames - 1) * shift + frame_len > T) throw ShapeError("frame_grid: frames exceed signal");
    Var y = detail::child(Shape::t3(B, frames, frame_len), {x});
    for (long b = 0; b < B; ++b)
        for (long s = 0; s < frames; ++s)
            std::copy_n(&x->v[b * T + s * shift], frame_len, &y->v[(b * frames + s) * frame_len]);
    if (y->requires_grad)
        y->backward_fn = [x, B, T, frames, frame_len, shift](Node& self) {
            auto& gx = x->grad();
            for (long b = 0; b < B; ++b)
                for (long s = 0; s < frames; ++s) {
                    const real* gy = &self.g[(b * frames + s) * frame_len];
                    for (long i = 0; i < frame_len; ++i) gx[b * T + s * shift + i] += gy[i];
                }
        };
    return y;
}

// forward difference along the last or middle dimension with the trailing
// difference replicated, matching the spectral phase differential
inline Var phase_diff(Var x, bool along_last) {
    if (x->shape.rank < 2) throw ShapeError("phase_diff: rank must be >= 2");
    const long B = (x->shape.rank == 3) ? x->shape.d[0] : 1;
    const long F = x->shape.d[x->shape.rank - 2], N = x->shape.last();
    if (along_last && N < 2) throw InvalidInput("phase_diff: need >= 2 bins");
    if (!along_last && F < 2) throw InvalidInput("phase_diff: need >= 2 frames");
    Var y = detail::child(x->shape, {x});
    auto X = [&](long b, long f, long n) -> real { return x->v[(b * F + f) * N + n]; };
    for (long b = 0; b < B; ++b)
        for (long f = 0; f < F; ++f)
            for (long n = 0; n < N; ++n) {
                real d;
                if (along_last)
                    d = (n < N - 1) ? X(b, f, n + 1) - X(b, f, n) : X(b, f, N - 1) - X(b, f, N - 2);
                else
                    d = (f < F - 1) ? X(b, f + 1, n) - X(b, f, n) : X(b, F - 1, n) - X(b, F - 2, n);
                y->v[(b * F + f) * N + n] = d;
            }
    if (y->requires_grad)
        y->backward_fn = [x, B, F, N, along_last](Node& self) {
            auto& gx = x->grad();
            auto add_g = [&](long b, long f, long n, real g) { gx[(b * F + f) * N + n] += g; };
            for (long b = 0; b < B; ++b)
                for (long f = 0; f < F; ++f)
                    for (long n = 0; n < N; ++n) {
                        const real g = self.g[(b * F + f) * N + n];
                        if (along_last) {
                            if (n < N - 1) {
                                add_g(b, f, n + 1, g);
                                add_g(b, f, n, -g);
                            } else {
                                add_g(b, f, N - 1, g);
                                add_g(b, f, N - 2, -g);
                            }
                        } else {
                            if (f < F - 1) {
                                add_g(b, f + 1, n, g);
                                add_g(b, f, n, -g);
                            } else {
                                add_g(b, F - 1, n, g);
                                add_g(b, F - 2, n, -g);
                            }
                        }
                    }
        };
    return y;
}

// ---------------------------------------------------------------------------
// fused model activations
// ---------------------------------------------------------------------------

// Snake: x + sin^2(alpha*x)/alpha with per-channel alpha > 0 broadcast over
// the last dimension. Differentiable in both x and alpha.
inline Var snake(Var x, Var alpha) {
    const long C = x->shape.last();
    if (alpha->shape.rank != 1 || alpha->shape.d[0] != C)
        throw ShapeError("snake: alpha must be rank-1 of channel size");
    for (real a : alpha->v)
        if (!(a > 0.0)) throw DomainError("snake: alpha must be positive");
    Var y = detail::child(x->shape, {x, alpha});
    for (size_t i = 0; i < x->v.size(); ++i) {
        const real a = alpha->v[i % C];
        const real s = std::sin(a * x->v[i]);
        y->v[i] = x->v[i] + s * s / a;
    }
    if (y->requires_grad)
        y->backward_fn = [x, alpha, C](Node& self) {
            for (size_t i = 0; i < self.g.size(); ++i) {
                const real a = alpha->v[i % C];
                const real xv = x->v[i];
                const real s2ax = std::sin(2.0 * a * xv);
                if (x->requires_grad) x->grad()[i] += (1.0 + s2ax) * self.g[i];
                if (alpha->requires_grad) {
                    const real s = std::sin(a * xv);
                    alpha->grad()[i % C] += (xv * s2ax / a - s * s / (a * a)) * self.g[i];
                }
            }
        };
    return y;
}

// Global response normalization (ConvNeXt v2): per-channel L2 energy over
// time, normalized by its cross-channel mean, gating as gamma*(x*n)+beta+x.
// With gamma = beta = 0 this is the identity.
inline Var grn(Var x, Var gamma, Var beta, real eps = 1e-6) {
    if (x->shape.rank != 3) throw ShapeError("grn: need rank-3 (B,T,C)");
    const long B = x->shape.d[0], T = x->shape.d[1], C = x->shape.d[2];
    if (gamma->shape.rank != 1 || gamma->shape.d[0] != C || beta->shape != gamma->shape)
        throw ShapeError("grn: gamma/beta must be rank-1 of channel size");
    Var y = detail::child(x->shape, {x, gamma, beta});
    std::vector<real> G(static_cast<size_t>(B) * C, 0.0);  // per-(b,c) L2 over time
    std::vector<real> mu(static_cast<size_t>(B), 0.0);
    for (long b = 0; b < B; ++b) {
        for (long t = 0; t < T; ++t)
            for (long c = 0; c < C; ++c) {
                const real v = x->v[(b * T + t) * C + c];
                G[b * C + c] += v * v;
            }
        for (long c = 0; c < C; ++c) {
            G[b * C + c] = std::sqrt(G[b * C + c]);
            mu[b] += G[b * C + c];
        }
        mu[b] /= static_cast<real>(C);
    }
    for (long b = 0; b < B; ++b)
        for (long t = 0; t < T; ++t)
            for (long c = 0; c < C; ++c) {
                const size_t i = (b * T + t) * C + c;
                const real n = G[b * C + c] / (mu[b] + eps);
                y->v[i] = gamma->v[c] * x->v[i] * n + beta->v[c] + x->v[i];
            }
    if (y->requires_grad)
        y->backward_fn = [x, gamma, beta, B, T, C, G, mu, eps](Node& self) {
            for (long b = 0; b < B; ++b) {
                const real denom = mu[b] + eps;
                // q[c] = sum_t gy*gamma*x = dL/dn[b,c]
                std::vector<real> q(static_cast<size_t>(C), 0.0);
                for (long t = 0; t < T; ++t)
                    for (long c = 0; c < C; ++c) {
                        const size_t i = (b * T + t) * C + c;
                        q[c] += self.g[i] * gamma->v[c] * x->v[i];
                    }
                // dL/dG via n = G/(mu+eps), mu = mean(G)
                real qg = 0.0;
                for (long c = 0; c < C; ++c) qg += q[c] * G[b * C + c];
                std::vector<real> dG(static_cast<size_t>(C));
                for (long c = 0; c < C; ++c)
                    dG[c] = q[c] / denom - qg / (denom * denom * static_cast<real>(C));
                for (long t = 0; t < T; ++t)
                    for (long c = 0; c < C; ++c) {
                        const size_t i = (b * T + t) * C + c;
                        const real n = G[b * C + c] / denom;
                        if (gamma->requires_grad) gamma->grad()[c] += self.g[i] * x->v[i] * n;
                        if (beta->requires_grad) beta->grad()[c] += self.g[i];
                        if (x->requires_grad) {
                            real gx = self.g[i] * (1.0 + gamma->v[c] * n);
                            const real Gbc = G[b * C + c];
                            if (Gbc > 1e-300) gx += dG[c] * x->v[i] / Gbc;
                            x->grad()[i] += gx;
                        }
                    }
            }
        };
    return y;
}

// ---------------------------------------------------------------------------
// parameter storage
// ---------------------------------------------------------------------------

// Named persistent tensor; graphs mount these as leaves each step.
struct Param {
    std::string name;
    Shape shape;
    std::vector<real> value;

    Param() = default;
    Param(std::string n, const Shape& s) : name(std::move(n)), shape(s) {
        value.assign(static_cast<size_t>(s.numel()), 0.0);
    }
};

}  // namespace freegan::ad

#endif  // FREEGAN_AUTODIFF_HPP
