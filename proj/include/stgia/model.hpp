#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stgia {

using ParamVector = std::vector<double>;
using GradVector = std::vector<double>;

/// The fixed next-location model: input(2W) -> dense(H, tanh) -> dense(L)
/// -> softmax cross-entropy. H = 0 selects the single-layer linear-softmax
/// variant input(2W) -> dense(L), which admits a closed-form inversion and
/// anchors the exact-recovery tests.
struct ModelSpec {
    int window = 3;   // W, input points (2 coordinates each)
    int hidden = 16;  // H
    int classes = 16; // L

    int input_dim() const { return 2 * window; }
    std::size_t param_count() const {
        const std::size_t w = static_cast<std::size_t>(window);
        const std::size_t h = static_cast<std::size_t>(hidden);
        const std::size_t l = static_cast<std::size_t>(classes);
        if (hidden == 0) return l * 2 * w + l;
        return h * 2 * w + h + l * h + l;
    }
};

inline void validate(const ModelSpec& spec) {
    if (spec.window < 1) throw std::invalid_argument("ModelSpec: W must be >= 1");
    if (spec.hidden < 0) throw std::invalid_argument("ModelSpec: H must be >= 0");
    if (spec.classes < 2) throw std::invalid_argument("ModelSpec: L must be >= 2");
}

/// Views into the flat parameter layout [W1 (HxD), b1 (H), W2 (LxH), b2 (L)];
/// the linear variant collapses to [W2 (LxD), b2 (L)].
struct ParamLayout {
    // offsets
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, total = 0;
    int d = 0, h = 0, l = 0;

    explicit ParamLayout(const ModelSpec& spec)
        : d(spec.input_dim()), h(spec.hidden), l(spec.classes) {
        if (h == 0) {
            w2 = 0;
            b2 = w2 + static_cast<std::size_t>(l) * d;
        } else {
            w1 = 0;
            b1 = w1 + static_cast<std::size_t>(h) * d;
            w2 = b1 + h;
            b2 = w2 + static_cast<std::size_t>(l) * h;
        }
        total = b2 + l;
    }
};

inline void check_shapes(const ModelSpec& spec, const std::vector<double>& params,
                         const std::vector<double>& x) {
    validate(spec);
    if (params.size() != spec.param_count())
        throw std::invalid_argument("model: parameter vector has wrong length");
    if (x.size() != static_cast<std::size_t>(spec.input_dim()))
        throw std::invalid_argument("model: input vector has wrong length");
}

/// Numerically stable softmax.
inline std::vector<double> softmax(std::span<const double> z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - m);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

inline double log_sum_exp(std::span<const double> z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    return m + std::log(sum);
}

namespace detail {

/// Forward activations kept around for the backward passes.
struct ForwardTrace {
    std::vector<double> a1;      // tanh activations (empty for linear variant)
    std::vector<double> logits;  // z2
    std::vector<double> probs;   // softmax(z2)
};

inline ForwardTrace forward_trace(const ModelSpec& spec, const ParamVector& params,
                                  const std::vector<double>& x) {
    check_shapes(spec, params, x);
    const ParamLayout lay(spec);
    ForwardTrace t;
    t.logits.assign(lay.l, 0.0);
    if (lay.h == 0) {
        for (int c = 0; c < lay.l; ++c) {
            double z = params[lay.b2 + c];
            for (int j = 0; j < lay.d; ++j)
                z += params[lay.w2 + static_cast<std::size_t>(c) * lay.d + j] * x[j];
            t.logits[c] = z;
        }
    } else {
        t.a1.assign(lay.h, 0.0);
        for (int i = 0; i < lay.h; ++i) {
            double z = params[lay.b1 + i];
            for (int j = 0; j < lay.d; ++j)
                z += params[lay.w1 + static_cast<std::size_t>(i) * lay.d + j] * x[j];
            t.a1[i] = std::tanh(z);
        }
        for (int c = 0; c < lay.l; ++c) {
            double z = params[lay.b2 + c];
            for (int i = 0; i < lay.h; ++i)
                z += params[lay.w2 + static_cast<std::size_t>(c) * lay.h + i] * t.a1[i];
            t.logits[c] = z;
        }
    }
    t.probs = softmax(t.logits);
    return t;
}

}  // namespace detail

inline std::vector<double> forward(const ModelSpec& spec, const ParamVector& params,
                                   const std::vector<double>& x) {
    return detail::forward_trace(spec, params, x).logits;
}

inline void check_label(const ModelSpec& spec, const std::vector<double>& y) {
    if (y.size() != static_cast<std::size_t>(spec.classes))
        throw std::invalid_argument("model: label vector has wrong length");
    double sum = 0.0;
    for (double v : y) {
        if (!(v >= 0.0)) throw std::invalid_argument("model: label entries must be >= 0");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("model: label must sum to 1");
}

/// Cross-entropy -sum_c y_c log softmax(logits)_c via log-sum-exp.
inline double loss(const std::vector<double>& logits, const std::vector<double>& y) {
    if (logits.size() != y.size())
        throw std::invalid_argument("loss: length mismatch");
    double sum = 0.0;
    for (double v : y) {
        if (!(v >= 0.0)) throw std::invalid_argument("loss: label entries must be >= 0");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("loss: label must sum to 1");
    const double lse = log_sum_exp(logits);
    double dot = 0.0;
    for (std::size_t c = 0; c < y.size(); ++c) dot += y[c] * logits[c];
    return lse - dot;
}

inline std::vector<double> one_hot(int c, int classes) {
    std::vector<double> y(classes, 0.0);
    y.at(c) = 1.0;
    return y;
}

/// Exact reverse-mode gradient of the cross-entropy loss w.r.t. all
/// parameters, for one example (batch 1). y may be any probability vector.
inline GradVector param_grad(const ModelSpec& spec, const ParamVector& params,
                             const std::vector<double>& x, const std::vector<double>& y) {
    check_label(spec, y);
    const ParamLayout lay(spec);
    const detail::ForwardTrace t = detail::forward_trace(spec, params, x);
    GradVector g(lay.total, 0.0);

    std::vector<double> r(lay.l);  // dL/dz2 = p - y
    for (int c = 0; c < lay.l; ++c) r[c] = t.probs[c] - y[c];

    if (lay.h == 0) {
        for (int c = 0; c < lay.l; ++c) {
            g[lay.b2 + c] = r[c];
            for (int j = 0; j < lay.d; ++j)
                g[lay.w2 + static_cast<std::size_t>(c) * lay.d + j] = r[c] * x[j];
        }
        return g;
    }

    std::vector<double> dz1(lay.h, 0.0);
    for (int i = 0; i < lay.h; ++i) {
        double da1 = 0.0;
        for (int c = 0; c < lay.l; ++c)
            da1 += params[lay.w2 + static_cast<std::size_t>(c) * lay.h + i] * r[c];
        dz1[i] = da1 * (1.0 - t.a1[i] * t.a1[i]);
    }
    for (int c = 0; c < lay.l; ++c) {
        g[lay.b2 + c] = r[c];
        for (int i = 0; i < lay.h; ++i)
            g[lay.w2 + static_cast<std::size_t>(c) * lay.h + i] = r[c] * t.a1[i];
    }
    for (int i = 0; i < lay.h; ++i) {
        g[lay.b1 + i] = dz1[i];
        for (int j = 0; j < lay.d; ++j)
            g[lay.w1 + static_cast<std::size_t>(i) * lay.d + j] = dz1[i] * x[j];
    }
    return g;
}

/// Reported gradient-matching distance: ||g_dummy - g_true||_2.
inline double matching_objective(const GradVector& g_dummy, const GradVector& g_true) {
    if (g_dummy.size() != g_true.size())
        throw std::invalid_argument("matching_objective: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < g_dummy.size(); ++i) {
        const double d = g_dummy[i] - g_true[i];
        s += d * d;
    }
    return std::sqrt(s);
}

/// The attacker's optimization state: x' holds 2W normalized window
/// coordinates, y' holds L free logits whose softmax is the dummy label.
struct DummyState {
    std::vector<double> x;  // 2W
    std::vector<double> y;  // L
};

struct InputGrad {
    std::vector<double> dx;  // dS/dx', 2W
    std::vector<double> dy;  // dS/dy', L
};

/// Gradient of the squared matching objective
///   S(x', y') = || param_grad(params, x', softmax(y')) - g_true ||^2
/// with respect to the dummy inputs and the free label logits. Computed by
/// hand-rolled reverse-over-reverse through the fixed architecture; exact up
/// to floating point, which the finite-difference suites pin down.
inline InputGrad input_grad_of_matching(const ModelSpec& spec, const ParamVector& params,
                                        const DummyState& dummy, const GradVector& g_true) {
    const ParamLayout lay(spec);
    if (g_true.size() != lay.total)
        throw std::invalid_argument("input_grad_of_matching: g_true has wrong length");
    if (dummy.y.size() != static_cast<std::size_t>(lay.l))
        throw std::invalid_argument("input_grad_of_matching: y' has wrong length");
    const std::vector<double>& x = dummy.x;
    check_shapes(spec, params, x);

    const detail::ForwardTrace t = detail::forward_trace(spec, params, x);
    const std::vector<double> y = softmax(dummy.y);
    std::vector<double> r(lay.l);
    for (int c = 0; c < lay.l; ++c) r[c] = t.probs[c] - y[c];

    InputGrad out;
    out.dx.assign(lay.d, 0.0);
    out.dy.assign(lay.l, 0.0);

    if (lay.h == 0) {
        // Gradient components: gW2 = r x^T, gb2 = r.
        // bar(v) denotes dS/dv; S = ||gW2 - gW2_true||^2 + ||gb2 - gb2_true||^2.
        std::vector<double> bar_r(lay.l, 0.0);
        for (int c = 0; c < lay.l; ++c) {
            const double rb2 = r[c] - g_true[lay.b2 + c];
            bar_r[c] = 2.0 * rb2;
            for (int j = 0; j < lay.d; ++j) {
                const double rw = r[c] * x[j] - g_true[lay.w2 + static_cast<std::size_t>(c) * lay.d + j];
                bar_r[c] += 2.0 * rw * x[j];
                out.dx[j] += 2.0 * rw * r[c];
            }
        }
        // r = softmax(z2) - softmax(y'); z2 = W2 x + b2.
        double dot_p = 0.0, dot_y = 0.0;
        for (int c = 0; c < lay.l; ++c) { dot_p += t.probs[c] * bar_r[c]; dot_y += y[c] * bar_r[c]; }
        for (int c = 0; c < lay.l; ++c) {
            const double bar_z2 = t.probs[c] * (bar_r[c] - dot_p);
            for (int j = 0; j < lay.d; ++j)
                out.dx[j] += params[lay.w2 + static_cast<std::size_t>(c) * lay.d + j] * bar_z2;
            out.dy[c] = y[c] * (-bar_r[c] + dot_y);
        }
        return out;
    }

    // Recompute the pieces of the inner (parameter) gradient.
    std::vector<double> hp(lay.h), da1(lay.h), dz1(lay.h);
    for (int i = 0; i < lay.h; ++i) {
        hp[i] = 1.0 - t.a1[i] * t.a1[i];
        double s = 0.0;
        for (int c = 0; c < lay.l; ++c)
            s += params[lay.w2 + static_cast<std::size_t>(c) * lay.h + i] * r[c];
        da1[i] = s;
        dz1[i] = s * hp[i];
    }

    // Residuals of the four gradient blocks enter with weight 2.
    // bar(gW1)[i][j] = 2 (dz1_i x_j - gW1_true), etc.
    std::vector<double> bar_dz1(lay.h, 0.0);
    for (int i = 0; i < lay.h; ++i) {
        bar_dz1[i] = 2.0 * (dz1[i] - g_true[lay.b1 + i]);  // gb1 block
        for (int j = 0; j < lay.d; ++j) {
            const double rw1 = dz1[i] * x[j] - g_true[lay.w1 + static_cast<std::size_t>(i) * lay.d + j];
            bar_dz1[i] += 2.0 * rw1 * x[j];
            out.dx[j] += 2.0 * rw1 * dz1[i];  // direct x path through gW1 = dz1 x^T
        }
    }

    std::vector<double> bar_r(lay.l, 0.0), bar_a1(lay.h, 0.0);
    for (int c = 0; c < lay.l; ++c) {
        const double rb2 = r[c] - g_true[lay.b2 + c];
        bar_r[c] = 2.0 * rb2;
        for (int i = 0; i < lay.h; ++i) {
            const double rw2 = r[c] * t.a1[i] - g_true[lay.w2 + static_cast<std::size_t>(c) * lay.h + i];
            bar_r[c] += 2.0 * rw2 * t.a1[i];
            bar_a1[i] += 2.0 * rw2 * r[c];
        }
    }

    // dz1 = da1 .* hp ; da1 = W2^T r ; hp = 1 - a1^2.
    for (int i = 0; i < lay.h; ++i) {
        const double bar_da1 = bar_dz1[i] * hp[i];
        const double bar_hp = bar_dz1[i] * da1[i];
        bar_a1[i] += -2.0 * t.a1[i] * bar_hp;
        for (int c = 0; c < lay.l; ++c)
            bar_r[c] += params[lay.w2 + static_cast<std::size_t>(c) * lay.h + i] * bar_da1;
    }

    // r = p - y with p = softmax(z2), y = softmax(y').
    double dot_p = 0.0, dot_y = 0.0;
    for (int c = 0; c < lay.l; ++c) { dot_p += t.probs[c] * bar_r[c]; dot_y += y[c] * bar_r[c]; }
    std::vector<double> bar_z2(lay.l);
    for (int c = 0; c < lay.l; ++c) {
        bar_z2[c] = t.probs[c] * (bar_r[c] - dot_p);
        out.dy[c] = y[c] * (-bar_r[c] + dot_y);
    }

    // z2 = W2 a1 + b2 closes the last a1 source; then back through tanh.
    for (int i = 0; i < lay.h; ++i) {
        for (int c = 0; c < lay.l; ++c)
            bar_a1[i] += params[lay.w2 + static_cast<std::size_t>(c) * lay.h + i] * bar_z2[c];
        const double bar_z1 = bar_a1[i] * hp[i];
        for (int j = 0; j < lay.d; ++j)
            out.dx[j] += params[lay.w1 + static_cast<std::size_t>(i) * lay.d + j] * bar_z1;
    }
    return out;
}

/// Label inference from a batch-1 gradient: the b2 component of the true
/// class is p_c - 1, the only negative entry, so the argmin names the class.
/// Valid for batch 1 only; best-effort argmin otherwise.
inline int infer_label_analytic(const ModelSpec& spec, const GradVector& g_true) {
    const ParamLayout lay(spec);
    if (g_true.size() != lay.total)
        throw std::invalid_argument("infer_label_analytic: gradient has wrong length");
    int best = 0;
    double best_v = g_true[lay.b2];
    for (int c = 1; c < lay.l; ++c) {
        const double v = g_true[lay.b2 + c];
        if (v < best_v) { best_v = v; best = c; }
    }
    return best;
}

/// Parameter checkpoint: text, first line "W H L", then one value per line
/// at full precision. Text keeps the format byte-order independent.
inline void save_params(const ModelSpec& spec, const ParamVector& params, std::ostream& out) {
    if (params.size() != spec.param_count())
        throw std::invalid_argument("save_params: parameter vector has wrong length");
    out << spec.window << " " << spec.hidden << " " << spec.classes << "\n";
    std::ostringstream line;
    line.precision(17);
    for (double v : params) {
        line.str("");
        line << v;
        out << line.str() << "\n";
    }
}

inline std::pair<ModelSpec, ParamVector> load_params(std::istream& in) {
    ModelSpec spec;
    if (!(in >> spec.window >> spec.hidden >> spec.classes))
        throw std::runtime_error("load_params: bad header");
    ParamVector params;
    params.reserve(spec.param_count());
    double v;
    while (in >> v) params.push_back(v);
    if (params.size() != spec.param_count())
        throw std::runtime_error("load_params: value count does not match header");
    return {spec, params};
}

inline void save_params(const ModelSpec& spec, const ParamVector& params, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    save_params(spec, params, out);
}

inline std::pair<ModelSpec, ParamVector> load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    return load_params(in);
}

}  // namespace stgia
