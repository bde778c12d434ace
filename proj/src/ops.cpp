#include <algorithm>
#include <cmath>
#include <utility>

#include "pcn/tensor.hpp"

namespace pcn {

namespace {

constexpr double kNormEps = 1e-12;

TensorPtr make_op(const char* name, std::vector<std::size_t> shape, std::vector<double> values,
                  std::vector<TensorPtr> parents, std::function<void(Tensor&)> bp) {
    auto t = tensor(std::move(shape), std::move(values));
    t->op = name;
    bool rg = false;
    if (grad_enabled()) {
        for (const auto& p : parents) rg = rg || p->requires_grad;
    }
    if (rg) {
        t->requires_grad = true;
        t->parents = std::move(parents);
        t->backprop = std::move(bp);
    }
    return t;
}

bool is_suffix(const std::vector<std::size_t>& small, const std::vector<std::size_t>& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// decompose shape around `axis` into (outer, n, inner)
struct AxisSplit {
    std::size_t outer = 1, n = 1, inner = 1;
};
AxisSplit split_axis(const char* op, const std::vector<std::size_t>& shape, std::size_t axis) {
    if (axis >= shape.size())
        throw Error(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                    shape_str(shape));
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.n = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

// C[M,N] += A[M,K] * B[K,N]
void mm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
           double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            double aik = arow[kk];
            const double* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

// C[M,K] += G[M,N] * B[K,N]^T
void mm_nt(std::size_t m, std::size_t k, std::size_t n, const double* g, const double* b,
           double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        double* crow = c + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double* brow = b + kk * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            crow[kk] += acc;
        }
    }
}

// C[K,N] += A[M,K]^T * G[M,N]
void mm_tn(std::size_t k, std::size_t n, std::size_t m, const double* a, const double* g,
           double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* grow = g + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            double aik = arow[kk];
            double* crow = c + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * grow[j];
        }
    }
}

enum class BinOp { Add, Sub, Mul };

TensorPtr binary_broadcast(const char* name, BinOp kind, const TensorPtr& a, const TensorPtr& b) {
    const Tensor& ta = *a;
    const Tensor& tb = *b;
    bool a_big = ta.size() != tb.size() ? ta.size() > tb.size()
                                        : ta.shape.size() >= tb.shape.size();
    const Tensor& big = a_big ? ta : tb;
    const Tensor& small = a_big ? tb : ta;
    bool same = ta.shape == tb.shape;
    if (!same && !(small.size() == 1 || is_suffix(small.shape, big.shape)))
        throw Error(std::string(name) + ": shapes " + shape_str(ta.shape) + " and " +
                    shape_str(tb.shape) + " are not broadcastable");
    std::size_t bn = big.size();
    std::size_t sn = small.size();

    std::vector<double> out(bn);
    for (std::size_t i = 0; i < bn; ++i) {
        double av = a_big ? ta.values[i] : ta.values[i % sn];
        double bv = a_big ? tb.values[i % sn] : tb.values[i];
        switch (kind) {
            case BinOp::Add: out[i] = av + bv; break;
            case BinOp::Sub: out[i] = av - bv; break;
            case BinOp::Mul: out[i] = av * bv; break;
        }
    }
    return make_op(name, big.shape, std::move(out), {a, b}, [kind, a_big, sn](Tensor& self) {
        Tensor& pa = *self.parents[0];
        Tensor& pb = *self.parents[1];
        std::size_t n = self.size();
        auto idx_a = [&](std::size_t i) { return a_big ? i : i % sn; };
        auto idx_b = [&](std::size_t i) { return a_big ? i % sn : i; };
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                double g = self.grad[i];
                if (kind == BinOp::Mul) g *= pb.values[idx_b(i)];
                pa.grad[idx_a(i)] += g;
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                double g = self.grad[i];
                if (kind == BinOp::Mul)
                    g *= pa.values[idx_a(i)];
                else if (kind == BinOp::Sub)
                    g = -g;
                pb.grad[idx_b(i)] += g;
            }
        }
    });
}

TensorPtr unary_op(const char* name, const TensorPtr& a, double (*fwd)(double),
                   double (*dydx_from)(double x, double y)) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a->values[i]);
    return make_op(name, a->shape, std::move(out), {a}, [dydx_from](Tensor& self) {
        Tensor& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i)
            p.grad[i] += self.grad[i] * dydx_from(p.values[i], self.values[i]);
    });
}

}  // namespace

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
        throw Error("matmul: incompatible shapes " + shape_str(a->shape) + " x " +
                    shape_str(b->shape));
    std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    std::vector<double> out(m * n, 0.0);
    mm_nn(m, n, k, a->values.data(), b->values.data(), out.data());
    return make_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Tensor& self) {
        Tensor& pa = *self.parents[0];
        Tensor& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            mm_nt(m, k, n, self.grad.data(), pb.values.data(), pa.grad.data());
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            mm_tn(k, n, m, pa.values.data(), self.grad.data(), pb.grad.data());
        }
    });
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    return binary_broadcast("add", BinOp::Add, a, b);
}
TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    return binary_broadcast("sub", BinOp::Sub, a, b);
}
TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    return binary_broadcast("mul", BinOp::Mul, a, b);
}

TensorPtr scale(const TensorPtr& a, double s) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] * s;
    return make_op("scale", a->shape, std::move(out), {a}, [s](Tensor& self) {
        Tensor& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i) p.grad[i] += self.grad[i] * s;
    });
}

TensorPtr relu(const TensorPtr& a) {
    return unary_op(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

TensorPtr tanh_op(const TensorPtr& a) {
    return unary_op(
        "tanh", a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

TensorPtr sigmoid(const TensorPtr& a) {
    return unary_op(
        "sigmoid", a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

TensorPtr log_op(const TensorPtr& a) {
    return unary_op(
        "log", a, [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

TensorPtr sqrt_op(const TensorPtr& a) {
    return unary_op(
        "sqrt", a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; });
}

TensorPtr clamp(const TensorPtr& a, double lo, double hi) {
    if (lo > hi) throw Error("clamp: lo > hi");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(a->values[i], lo), hi);
    return make_op("clamp", a->shape, std::move(out), {a}, [lo, hi](Tensor& self) {
        Tensor& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i) {
            double x = p.values[i];
            if (x > lo && x < hi) p.grad[i] += self.grad[i];
        }
    });
}

TensorPtr softmax_last(const TensorPtr& a) {
    if (a->shape.empty()) throw Error("softmax: scalar input " + shape_str(a->shape));
    std::size_t cols = a->shape.back();
    std::size_t rows = a->size() / cols;
    std::vector<double> out(a->size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a->values.data() + r * cols;
        double* y = out.data() + r * cols;
        double mx = x[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        for (std::size_t j = 0; j < cols; ++j) y[j] /= sum;
    }
    return make_op("softmax", a->shape, std::move(out), {a}, [rows, cols](Tensor& self) {
        Tensor& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.values.data() + r * cols;
            const double* g = self.grad.data() + r * cols;
            double dot = 0.0;
            for (std::size_t j = 0; j < cols; ++j) dot += y[j] * g[j];
            double* px = p.grad.data() + r * cols;
            for (std::size_t j = 0; j < cols; ++j) px[j] += y[j] * (g[j] - dot);
        }
    });
}

namespace {

TensorPtr reduce_axis(const char* name, const TensorPtr& a, std::size_t axis, bool mean) {
    AxisSplit s = split_axis(name, a->shape, axis);
    std::vector<std::size_t> out_shape;
    for (std::size_t i = 0; i < a->shape.size(); ++i)
        if (i != axis) out_shape.push_back(a->shape[i]);
    std::vector<double> out(s.outer * s.inner, 0.0);
    const double* x = a->values.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < s.n; ++k) {
            const double* row = x + (o * s.n + k) * s.inner;
            double* dst = out.data() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += row[i];
        }
    double f = mean ? 1.0 / static_cast<double>(s.n) : 1.0;
    if (mean)
        for (double& v : out) v *= f;
    return make_op(name, std::move(out_shape), std::move(out), {a}, [s, f](Tensor& self) {
        Tensor& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t k = 0; k < s.n; ++k) {
                const double* g = self.grad.data() + o * s.inner;
                double* dst = p.grad.data() + (o * s.n + k) * s.inner;
                for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[i] * f;
            }
    });
}

}  // namespace

TensorPtr mean_axis(const TensorPtr& a, std::size_t axis) {
    return reduce_axis("mean", a, axis, true);
}

TensorPtr sum_axis(const TensorPtr& a, std::size_t axis) {
    return reduce_axis("sum", a, axis, false);
}

TensorPtr weighted_mean_axis(const TensorPtr& a, const TensorPtr& weights, std::size_t axis) {
    AxisSplit s = split_axis("weighted_mean", a->shape, axis);
    std::vector<std::size_t> wshape(a->shape.begin(), a->shape.begin() + axis + 1);
    if (weights->shape != wshape)
        throw Error("weighted_mean: weights " + shape_str(weights->shape) + " do not match " +
                    shape_str(wshape) + " for input " + shape_str(a->shape));
    std::vector<std::size_t> out_shape;
    for (std::size_t i = 0; i < a->shape.size(); ++i)
        if (i != axis) out_shape.push_back(a->shape[i]);
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < s.n; ++k) {
            double w = weights->values[o * s.n + k];
            const double* row = a->values.data() + (o * s.n + k) * s.inner;
            double* dst = out.data() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += w * row[i];
        }
    return make_op("weighted_mean", std::move(out_shape), std::move(out), {a, weights},
                   [s](Tensor& self) {
                       Tensor& pa = *self.parents[0];
                       Tensor& pw = *self.parents[1];
                       if (pa.requires_grad) {
                           pa.ensure_grad();
                           for (std::size_t o = 0; o < s.outer; ++o)
                               for (std::size_t k = 0; k < s.n; ++k) {
                                   double w = pw.values[o * s.n + k];
                                   const double* g = self.grad.data() + o * s.inner;
                                   double* dst = pa.grad.data() + (o * s.n + k) * s.inner;
                                   for (std::size_t i = 0; i < s.inner; ++i) dst[i] += w * g[i];
                               }
                       }
                       if (pw.requires_grad) {
                           pw.ensure_grad();
                           for (std::size_t o = 0; o < s.outer; ++o)
                               for (std::size_t k = 0; k < s.n; ++k) {
                                   const double* g = self.grad.data() + o * s.inner;
                                   const double* row =
                                       pa.values.data() + (o * s.n + k) * s.inner;
                                   double acc = 0.0;
                                   for (std::size_t i = 0; i < s.inner; ++i) acc += g[i] * row[i];
                                   pw.grad[o * s.n + k] += acc;
                               }
                       }
                   });
}

TensorPtr concat_last(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw Error("concat: no inputs");
    std::vector<std::size_t> lead(parts[0]->shape.begin(), parts[0]->shape.end() - 1);
    std::size_t total_last = 0;
    std::vector<std::size_t> lasts;
    for (const auto& p : parts) {
        if (p->shape.empty() ||
            !std::equal(lead.begin(), lead.end(), p->shape.begin(),
                        p->shape.begin() + (p->shape.size() - 1)))
            throw Error("concat: shape " + shape_str(p->shape) + " incompatible with " +
                        shape_str(parts[0]->shape));
        lasts.push_back(p->shape.back());
        total_last += p->shape.back();
    }
    std::size_t rows = shape_numel(lead);
    std::vector<std::size_t> out_shape = lead;
    out_shape.push_back(total_last);
    std::vector<double> out(rows * total_last);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const double* src = parts[p]->values.data() + r * lasts[p];
            std::copy(src, src + lasts[p], out.data() + r * total_last + off);
            off += lasts[p];
        }
    }
    return make_op("concat", std::move(out_shape), std::move(out), parts,
                   [rows, total_last, lasts](Tensor& self) {
                       std::size_t off = 0;
                       for (std::size_t p = 0; p < self.parents.size(); ++p) {
                           Tensor& pp = *self.parents[p];
                           if (pp.requires_grad) {
                               pp.ensure_grad();
                               for (std::size_t r = 0; r < rows; ++r) {
                                   const double* g = self.grad.data() + r * total_last + off;
                                   double* dst = pp.grad.data() + r * lasts[p];
                                   for (std::size_t i = 0; i < lasts[p]; ++i) dst[i] += g[i];
                               }
                           }
                           off += lasts[p];
                       }
                   });
}

TensorPtr slice_last(const TensorPtr& a, std::size_t start, std::size_t len) {
    if (a->shape.empty()) throw Error("slice: scalar input");
    std::size_t last = a->shape.back();
    if (start + len > last)
        throw Error("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                    ") exceeds last dim of " + shape_str(a->shape));
    std::size_t rows = a->size() / last;
    std::vector<std::size_t> out_shape = a->shape;
    out_shape.back() = len;
    std::vector<double> out(rows * len);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = a->values.data() + r * last + start;
        std::copy(src, src + len, out.data() + r * len);
    }
    return make_op("slice", std::move(out_shape), std::move(out), {a},
                   [rows, last, start, len](Tensor& self) {
                       Tensor& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       p.ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                           const double* g = self.grad.data() + r * len;
                           double* dst = p.grad.data() + r * last + start;
                           for (std::size_t i = 0; i < len; ++i) dst[i] += g[i];
                       }
                   });
}

TensorPtr reshape(const TensorPtr& a, std::vector<std::size_t> new_shape) {
    if (shape_numel(new_shape) != a->size())
        throw Error("reshape: cannot view " + shape_str(a->shape) + " as " +
                    shape_str(new_shape));
    return make_op("reshape", std::move(new_shape), a->values, {a}, [](Tensor& self) {
        Tensor& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i) p.grad[i] += self.grad[i];
    });
}

TensorPtr expand_axis(const TensorPtr& a, std::size_t axis, std::size_t n) {
    if (axis > a->shape.size())
        throw Error("expand: axis " + std::to_string(axis) + " out of range for " +
                    shape_str(a->shape));
    if (n == 0) throw Error("expand: zero extent");
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a->shape[i];
    std::size_t inner = a->size() / outer;
    std::vector<std::size_t> out_shape = a->shape;
    out_shape.insert(out_shape.begin() + axis, n);
    std::vector<double> out(a->size() * n);
    for (std::size_t o = 0; o < outer; ++o) {
        const double* src = a->values.data() + o * inner;
        for (std::size_t j = 0; j < n; ++j)
            std::copy(src, src + inner, out.data() + (o * n + j) * inner);
    }
    return make_op("expand", std::move(out_shape), std::move(out), {a},
                   [outer, inner, n](Tensor& self) {
                       Tensor& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       p.ensure_grad();
                       for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t j = 0; j < n; ++j) {
                               const double* g = self.grad.data() + (o * n + j) * inner;
                               double* dst = p.grad.data() + o * inner;
                               for (std::size_t i = 0; i < inner; ++i) dst[i] += g[i];
                           }
                   });
}

TensorPtr l2_normalize_last(const TensorPtr& a) {
    if (a->shape.empty()) throw Error("l2_normalize: scalar input");
    std::size_t cols = a->shape.back();
    std::size_t rows = a->size() / cols;
    std::vector<double> out(a->size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a->values.data() + r * cols;
        double nrm = 0.0;
        for (std::size_t j = 0; j < cols; ++j) nrm += x[j] * x[j];
        double inv = 1.0 / std::max(std::sqrt(nrm), kNormEps);
        for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = x[j] * inv;
    }
    return make_op("l2_normalize", a->shape, std::move(out), {a}, [rows, cols](Tensor& self) {
        Tensor& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* x = p.values.data() + r * cols;
            const double* g = self.grad.data() + r * cols;
            double nrm = 0.0;
            for (std::size_t j = 0; j < cols; ++j) nrm += x[j] * x[j];
            nrm = std::sqrt(nrm);
            double s = std::max(nrm, kNormEps);
            double dot = 0.0;
            for (std::size_t j = 0; j < cols; ++j) dot += g[j] * x[j];
            double c = nrm > kNormEps ? dot / (s * s * nrm) : 0.0;
            double* dst = p.grad.data() + r * cols;
            for (std::size_t j = 0; j < cols; ++j) dst[j] += g[j] / s - x[j] * c;
        }
    });
}

TensorPtr l2_norm_last(const TensorPtr& a) {
    if (a->shape.empty()) throw Error("l2_norm: scalar input");
    std::size_t cols = a->shape.back();
    std::size_t rows = a->size() / cols;
    std::vector<std::size_t> out_shape(a->shape.begin(), a->shape.end() - 1);
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a->values.data() + r * cols;
        double nrm = 0.0;
        for (std::size_t j = 0; j < cols; ++j) nrm += x[j] * x[j];
        out[r] = std::sqrt(nrm);
    }
    return make_op("l2_norm", std::move(out_shape), std::move(out), {a},
                   [rows, cols](Tensor& self) {
                       Tensor& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       p.ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                           double inv = self.grad[r] / std::max(self.values[r], kNormEps);
                           const double* x = p.values.data() + r * cols;
                           double* dst = p.grad.data() + r * cols;
                           for (std::size_t j = 0; j < cols; ++j) dst[j] += inv * x[j];
                       }
                   });
}

TensorPtr min_elem(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape)
        throw Error("min: shapes " + shape_str(a->shape) + " and " + shape_str(b->shape) +
                    " differ");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a->values[i] <= b->values[i] ? a->values[i] : b->values[i];
    return make_op("min", a->shape, std::move(out), {a, b}, [](Tensor& self) {
        Tensor& pa = *self.parents[0];
        Tensor& pb = *self.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i) {
            bool take_a = pa.values[i] <= pb.values[i];
            if (take_a && pa.requires_grad) pa.grad[i] += self.grad[i];
            if (!take_a && pb.requires_grad) pb.grad[i] += self.grad[i];
        }
    });
}

TensorPtr rotate_vec3(const TensorPtr& rot, const TensorPtr& v, bool transpose) {
    if (rot->shape.size() != 3 || rot->shape[1] != 3 || rot->shape[2] != 3)
        throw Error("rotate: rotation must be [B,3,3], got " + shape_str(rot->shape));
    std::size_t batch = rot->shape[0];
    bool flat = v->shape.size() == 2;
    if ((flat && (v->shape[0] != batch || v->shape[1] != 3)) ||
        (!flat && (v->shape.size() != 3 || v->shape[0] != batch || v->shape[2] != 3)))
        throw Error("rotate: vectors " + shape_str(v->shape) + " incompatible with rotations " +
                    shape_str(rot->shape));
    std::size_t m = flat ? 1 : v->shape[1];
    std::vector<double> out(v->size());
    for (std::size_t b = 0; b < batch; ++b) {
        const double* R = rot->values.data() + b * 9;
        for (std::size_t p = 0; p < m; ++p) {
            const double* x = v->values.data() + (b * m + p) * 3;
            double* y = out.data() + (b * m + p) * 3;
            for (std::size_t i = 0; i < 3; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < 3; ++j)
                    acc += (transpose ? R[j * 3 + i] : R[i * 3 + j]) * x[j];
                y[i] = acc;
            }
        }
    }
    return make_op("rotate", v->shape, std::move(out), {rot, v},
                   [batch, m, transpose](Tensor& self) {
                       Tensor& pr = *self.parents[0];
                       Tensor& pv = *self.parents[1];
                       if (pr.requires_grad) pr.ensure_grad();
                       if (pv.requires_grad) pv.ensure_grad();
                       for (std::size_t b = 0; b < batch; ++b) {
                           const double* R = pr.values.data() + b * 9;
                           double* dR = pr.requires_grad ? pr.grad.data() + b * 9 : nullptr;
                           for (std::size_t p = 0; p < m; ++p) {
                               const double* x = pv.values.data() + (b * m + p) * 3;
                               const double* g = self.grad.data() + (b * m + p) * 3;
                               if (dR) {
                                   for (std::size_t i = 0; i < 3; ++i)
                                       for (std::size_t j = 0; j < 3; ++j) {
                                           if (transpose)
                                               dR[j * 3 + i] += g[i] * x[j];
                                           else
                                               dR[i * 3 + j] += g[i] * x[j];
                                       }
                               }
                               if (pv.requires_grad) {
                                   double* dx = pv.grad.data() + (b * m + p) * 3;
                                   for (std::size_t j = 0; j < 3; ++j) {
                                       double acc = 0.0;
                                       for (std::size_t i = 0; i < 3; ++i)
                                           acc += (transpose ? R[j * 3 + i] : R[i * 3 + j]) * g[i];
                                       dx[j] += acc;
                                   }
                               }
                           }
                       }
                   });
}

}  // namespace pcn
