#include "surro/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace surro::ad {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSimplexTol = 1e-9;

bool row_in_simplex(const double* z) {
    double sum = 0.0;
    for (int j = 0; j < 3; ++j) {
        if (z[j] < 0.0 || z[j] > 1.0) return false;
        sum += z[j];
    }
    return std::abs(sum - 1.0) <= kSimplexTol;
}

} // namespace

double log_factorial(int n) {
    thread_local std::vector<double> cache{0.0};
    if (n < 0) throw std::invalid_argument("factorial of negative count");
    while (static_cast<int>(cache.size()) <= n)
        cache.push_back(cache.back() + std::log(static_cast<double>(cache.size())));
    return cache[static_cast<std::size_t>(n)];
}

Node Tape::push(OpKind kind, Tensor val, int a, int b, int c) {
    Record r;
    r.kind = kind;
    r.a = a;
    r.b = b;
    r.c = c;
    bool req = kind == OpKind::Leaf;
    for (int in : {a, b, c})
        if (in >= 0 && requires_[static_cast<std::size_t>(in)]) req = true;
    recs_.push_back(r);
    vals_.push_back(std::move(val));
    requires_.push_back(req ? 1 : 0);
    return Node{static_cast<int>(vals_.size()) - 1};
}

void Tape::check(Node n) const {
    if (n.id < 0 || n.id >= static_cast<int>(vals_.size()))
        throw std::invalid_argument("node is not on this tape");
}

Tensor& Tape::grad_buf(int id) {
    Tensor& g = grads_[static_cast<std::size_t>(id)];
    if (g.v.empty()) g = Tensor(vals_[static_cast<std::size_t>(id)].rows,
                                vals_[static_cast<std::size_t>(id)].cols);
    return g;
}

Node Tape::leaf(Tensor t) { return push(OpKind::Leaf, std::move(t)); }

Node Tape::constant(Tensor t) { return push(OpKind::Constant, std::move(t)); }

Node Tape::linear(Node x, Node w, Node b) {
    check(x); check(w); check(b);
    const Tensor& xv = vals_[x.id];
    const Tensor& wv = vals_[w.id];
    const Tensor& bv = vals_[b.id];
    if (xv.cols != wv.cols || bv.rows != 1 || bv.cols != wv.rows)
        throw std::invalid_argument("linear: shape mismatch");
    Tensor y(xv.rows, wv.rows);
    for (std::size_t r = 0; r < xv.rows; ++r) {
        const double* xr = &xv.v[r * xv.cols];
        double* yr = &y.v[r * y.cols];
        for (std::size_t o = 0; o < wv.rows; ++o) {
            const double* wr = &wv.v[o * wv.cols];
            double acc = bv.v[o];
            for (std::size_t i = 0; i < xv.cols; ++i) acc += xr[i] * wr[i];
            yr[o] = acc;
        }
    }
    return push(OpKind::Linear, std::move(y), x.id, w.id, b.id);
}

Node Tape::relu(Node x) {
    check(x);
    Tensor y = vals_[x.id];
    for (double& v : y.v) v = v > 0.0 ? v : 0.0;
    return push(OpKind::Relu, std::move(y), x.id);
}

Node Tape::sigmoid(Node x) {
    check(x);
    Tensor y = vals_[x.id];
    for (double& v : y.v) v = 1.0 / (1.0 + std::exp(-v));
    return push(OpKind::Sigmoid, std::move(y), x.id);
}

Node Tape::tanh_(Node x) {
    check(x);
    Tensor y = vals_[x.id];
    for (double& v : y.v) v = std::tanh(v);
    return push(OpKind::Tanh, std::move(y), x.id);
}

Node Tape::add(Node a, Node b) {
    check(a); check(b);
    const Tensor& av = vals_[a.id];
    const Tensor& bv = vals_[b.id];
    if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
    Tensor y = av;
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += bv.v[i];
    return push(OpKind::Add, std::move(y), a.id, b.id);
}

Node Tape::mul(Node a, Node b) {
    check(a); check(b);
    const Tensor& av = vals_[a.id];
    const Tensor& bv = vals_[b.id];
    if (!av.same_shape(bv)) throw std::invalid_argument("mul: shape mismatch");
    Tensor y = av;
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] *= bv.v[i];
    return push(OpKind::Mul, std::move(y), a.id, b.id);
}

Node Tape::affine(Node x, double scale, double shift) {
    check(x);
    Tensor y = vals_[x.id];
    for (double& v : y.v) v = scale * v + shift;
    Node n = push(OpKind::Affine, std::move(y), x.id);
    recs_.back().s0 = scale;
    return n;
}

Node Tape::sirs_euler_step(Node z, Node theta, double dt) {
    check(z); check(theta);
    const Tensor& zv = vals_[z.id];
    const Tensor& tv = vals_[theta.id];
    if (zv.cols != 3 || !zv.same_shape(tv))
        throw std::invalid_argument("sirs_euler_step: expects matching [B, 3] inputs");
    Tensor y(zv.rows, 3);
    for (std::size_t r = 0; r < zv.rows; ++r) {
        const double* q = &zv.v[r * 3];
        const double* th = &tv.v[r * 3];
        double s = q[0], i = q[1], rr = q[2];
        double a = th[0], b = th[1], g = th[2];
        y.v[r * 3 + 0] = s + dt * (g * rr - a * i * s);
        y.v[r * 3 + 1] = i + dt * (a * i * s - b * i);
        y.v[r * 3 + 2] = rr + dt * (b * i - g * rr);
    }
    Node n = push(OpKind::SirsStep, std::move(y), z.id, theta.id);
    recs_.back().s0 = dt;
    return n;
}

Node Tape::clamp_simplex(Node z) {
    check(z);
    const Tensor& zv = vals_[z.id];
    if (zv.cols != 3) throw std::invalid_argument("clamp_simplex: expects [B, 3]");
    Tensor y = zv;
    Tensor touched(zv.rows, 1);
    for (std::size_t r = 0; r < zv.rows; ++r) {
        double* row = &y.v[r * 3];
        if (row_in_simplex(row)) continue;
        touched.v[r] = 1.0;
        ++clamp_events_;
        double sum = 0.0;
        for (int j = 0; j < 3; ++j) {
            row[j] = std::min(std::max(row[j], 0.0), 1.0);
            sum += row[j];
        }
        if (sum <= 0.0) {
            for (int j = 0; j < 3; ++j) row[j] = 1.0 / 3.0;
        } else {
            for (int j = 0; j < 3; ++j) row[j] /= sum;
        }
    }
    Node n = push(OpKind::ClampSimplex, std::move(y), z.id);
    recs_.back().aux = static_cast<int>(aux_tensors_.size());
    aux_tensors_.push_back(std::move(touched));
    return n;
}

Node Tape::mn_logpmf_probs(const std::vector<std::array<int, 3>>& counts, Node probs) {
    check(probs);
    const Tensor& pv = vals_[probs.id];
    if (pv.cols != 3 || pv.rows != counts.size())
        throw std::invalid_argument("mn_logpmf_probs: counts/probs mismatch");
    Tensor y(pv.rows, 1);
    for (std::size_t r = 0; r < pv.rows; ++r) {
        const double* p = &pv.v[r * 3];
        const auto& c = counts[r];
        int n = c[0] + c[1] + c[2];
        double ll = log_factorial(n) - log_factorial(c[0]) - log_factorial(c[1]) -
                    log_factorial(c[2]);
        for (int j = 0; j < 3; ++j) {
            if (c[j] == 0) continue;
            if (p[j] <= 0.0) {
                ll = -kInf;
                break;
            }
            ll += c[j] * std::log(p[j]);
        }
        y.v[r] = ll;
    }
    Node n = push(OpKind::MnProbs, std::move(y), probs.id);
    recs_.back().aux = static_cast<int>(aux_counts_.size());
    aux_counts_.push_back(counts);
    return n;
}

Node Tape::mn_logpmf_logits(const std::vector<std::array<int, 3>>& counts, Node logits) {
    check(logits);
    const Tensor& ov = vals_[logits.id];
    if (ov.cols != 3 || ov.rows != counts.size())
        throw std::invalid_argument("mn_logpmf_logits: counts/logits mismatch");
    Tensor y(ov.rows, 1);
    for (std::size_t r = 0; r < ov.rows; ++r) {
        const double* o = &ov.v[r * 3];
        const auto& c = counts[r];
        int n = c[0] + c[1] + c[2];
        double m = std::max(o[0], std::max(o[1], o[2]));
        double lse = m + std::log(std::exp(o[0] - m) + std::exp(o[1] - m) + std::exp(o[2] - m));
        double ll = log_factorial(n) - log_factorial(c[0]) - log_factorial(c[1]) -
                    log_factorial(c[2]) - n * lse;
        for (int j = 0; j < 3; ++j) ll += c[j] * o[j];
        y.v[r] = ll;
    }
    Node n = push(OpKind::MnLogits, std::move(y), logits.id);
    recs_.back().aux = static_cast<int>(aux_counts_.size());
    aux_counts_.push_back(counts);
    return n;
}

Node Tape::weighted_sum(Node x, Tensor w) {
    check(x);
    const Tensor& xv = vals_[x.id];
    if (xv.cols != 1 || !xv.same_shape(w))
        throw std::invalid_argument("weighted_sum: expects [B, 1] and matching weights");
    Tensor y(1, 1);
    // Zero-weight rows are skipped outright so a -inf entry cannot produce NaN.
    for (std::size_t r = 0; r < xv.rows; ++r)
        if (w.v[r] != 0.0) y.v[0] += w.v[r] * xv.v[r];
    Node n = push(OpKind::WeightedSum, std::move(y), x.id);
    recs_.back().aux = static_cast<int>(aux_tensors_.size());
    aux_tensors_.push_back(std::move(w));
    return n;
}

const Tensor& Tape::val(Node n) const {
    check(n);
    return vals_[static_cast<std::size_t>(n.id)];
}

const Tensor& Tape::grad(Node n) const {
    check(n);
    auto* self = const_cast<Tape*>(this);
    if (self->grads_.size() != vals_.size()) self->grads_.resize(vals_.size());
    Tensor& g = self->grads_[static_cast<std::size_t>(n.id)];
    if (g.v.empty()) g = Tensor(vals_[n.id].rows, vals_[n.id].cols);
    return g;
}

void Tape::backward(Node loss) {
    check(loss);
    if (backward_done_) throw std::logic_error("backward already ran on this tape");
    const Tensor& lv = vals_[loss.id];
    if (lv.rows != 1 || lv.cols != 1)
        throw std::invalid_argument("backward: loss must be a [1, 1] scalar");
    backward_done_ = true;
    grads_.assign(vals_.size(), Tensor());
    grad_buf(loss.id).v[0] = 1.0;
    for (std::size_t i = recs_.size(); i-- > 0;) backstep(i);
}

void Tape::backstep(std::size_t i) {
    const Record& r = recs_[i];
    if (r.kind == OpKind::Leaf || r.kind == OpKind::Constant) return;
    if (!needs_grad(static_cast<int>(i))) return;
    const Tensor& gy = grads_[i];
    if (gy.v.empty()) return;
    const Tensor& yv = vals_[i];

    switch (r.kind) {
    case OpKind::Linear: {
        const Tensor& xv = vals_[r.a];
        const Tensor& wv = vals_[r.b];
        bool gx_on = needs_grad(r.a), gw_on = needs_grad(r.b), gb_on = needs_grad(r.c);
        Tensor* gx = gx_on ? &grad_buf(r.a) : nullptr;
        Tensor* gw = gw_on ? &grad_buf(r.b) : nullptr;
        Tensor* gb = gb_on ? &grad_buf(r.c) : nullptr;
        for (std::size_t row = 0; row < xv.rows; ++row) {
            const double* gyr = &gy.v[row * gy.cols];
            const double* xr = &xv.v[row * xv.cols];
            for (std::size_t o = 0; o < wv.rows; ++o) {
                double g = gyr[o];
                if (g == 0.0) continue;
                const double* wr = &wv.v[o * wv.cols];
                if (gx) {
                    double* gxr = &gx->v[row * xv.cols];
                    for (std::size_t k = 0; k < xv.cols; ++k) gxr[k] += g * wr[k];
                }
                if (gw) {
                    double* gwr = &gw->v[o * wv.cols];
                    for (std::size_t k = 0; k < xv.cols; ++k) gwr[k] += g * xr[k];
                }
                if (gb) gb->v[o] += g;
            }
        }
        break;
    }
    case OpKind::Relu: {
        if (!needs_grad(r.a)) break;
        Tensor& gx = grad_buf(r.a);
        const Tensor& xv = vals_[r.a];
        for (std::size_t k = 0; k < gx.v.size(); ++k)
            if (xv.v[k] > 0.0) gx.v[k] += gy.v[k];
        break;
    }
    case OpKind::Sigmoid: {
        if (!needs_grad(r.a)) break;
        Tensor& gx = grad_buf(r.a);
        for (std::size_t k = 0; k < gx.v.size(); ++k)
            gx.v[k] += gy.v[k] * yv.v[k] * (1.0 - yv.v[k]);
        break;
    }
    case OpKind::Tanh: {
        if (!needs_grad(r.a)) break;
        Tensor& gx = grad_buf(r.a);
        for (std::size_t k = 0; k < gx.v.size(); ++k)
            gx.v[k] += gy.v[k] * (1.0 - yv.v[k] * yv.v[k]);
        break;
    }
    case OpKind::Add: {
        for (int in : {r.a, r.b}) {
            if (!needs_grad(in)) continue;
            Tensor& g = grad_buf(in);
            for (std::size_t k = 0; k < g.v.size(); ++k) g.v[k] += gy.v[k];
        }
        break;
    }
    case OpKind::Mul: {
        if (needs_grad(r.a)) {
            Tensor& ga = grad_buf(r.a);
            const Tensor& bv = vals_[r.b];
            for (std::size_t k = 0; k < ga.v.size(); ++k) ga.v[k] += gy.v[k] * bv.v[k];
        }
        if (needs_grad(r.b)) {
            Tensor& gb = grad_buf(r.b);
            const Tensor& av = vals_[r.a];
            for (std::size_t k = 0; k < gb.v.size(); ++k) gb.v[k] += gy.v[k] * av.v[k];
        }
        break;
    }
    case OpKind::Affine: {
        if (!needs_grad(r.a)) break;
        Tensor& gx = grad_buf(r.a);
        for (std::size_t k = 0; k < gx.v.size(); ++k) gx.v[k] += gy.v[k] * r.s0;
        break;
    }
    case OpKind::SirsStep: {
        const Tensor& zv = vals_[r.a];
        const Tensor& tv = vals_[r.b];
        double dt = r.s0;
        bool gz_on = needs_grad(r.a), gt_on = needs_grad(r.b);
        Tensor* gz = gz_on ? &grad_buf(r.a) : nullptr;
        Tensor* gt = gt_on ? &grad_buf(r.b) : nullptr;
        for (std::size_t row = 0; row < zv.rows; ++row) {
            const double* q = &zv.v[row * 3];
            const double* th = &tv.v[row * 3];
            const double* g = &gy.v[row * 3];
            double s = q[0], i = q[1], rr = q[2];
            double a = th[0], b = th[1], gm = th[2];
            if (gz) {
                double* o = &gz->v[row * 3];
                o[0] += g[0] * (1.0 - dt * a * i) + g[1] * (dt * a * i);
                o[1] += g[0] * (-dt * a * s) + g[1] * (1.0 + dt * (a * s - b)) + g[2] * (dt * b);
                o[2] += g[0] * (dt * gm) + g[2] * (1.0 - dt * gm);
            }
            if (gt) {
                double* o = &gt->v[row * 3];
                o[0] += (g[1] - g[0]) * dt * i * s;
                o[1] += (g[2] - g[1]) * dt * i;
                o[2] += (g[0] - g[2]) * dt * rr;
            }
        }
        break;
    }
    case OpKind::ClampSimplex: {
        if (!needs_grad(r.a)) break;
        Tensor& gz = grad_buf(r.a);
        const Tensor& zv = vals_[r.a];
        const Tensor& touched = aux_tensors_[r.aux];
        for (std::size_t row = 0; row < zv.rows; ++row) {
            const double* g = &gy.v[row * 3];
            double* o = &gz.v[row * 3];
            if (touched.v[row] == 0.0) {
                for (int j = 0; j < 3; ++j) o[j] += g[j];
                continue;
            }
            const double* z = &zv.v[row * 3];
            double c[3], sum = 0.0;
            for (int j = 0; j < 3; ++j) {
                c[j] = std::min(std::max(z[j], 0.0), 1.0);
                sum += c[j];
            }
            if (sum <= 0.0) continue; // degenerate rows get no gradient
            double dot = 0.0;
            for (int j = 0; j < 3; ++j) dot += g[j] * c[j] / sum;
            for (int j = 0; j < 3; ++j)
                if (z[j] > 0.0 && z[j] < 1.0) o[j] += (g[j] - dot) / sum;
        }
        break;
    }
    case OpKind::MnProbs: {
        if (!needs_grad(r.a)) break;
        Tensor& gp = grad_buf(r.a);
        const Tensor& pv = vals_[r.a];
        const auto& counts = aux_counts_[r.aux];
        for (std::size_t row = 0; row < pv.rows; ++row) {
            double g = gy.v[row];
            if (g == 0.0 || yv.v[row] == -kInf) continue;
            const double* p = &pv.v[row * 3];
            double* o = &gp.v[row * 3];
            for (int j = 0; j < 3; ++j)
                if (counts[row][j] > 0) o[j] += g * counts[row][j] / p[j];
        }
        break;
    }
    case OpKind::MnLogits: {
        if (!needs_grad(r.a)) break;
        Tensor& go = grad_buf(r.a);
        const Tensor& ov = vals_[r.a];
        const auto& counts = aux_counts_[r.aux];
        for (std::size_t row = 0; row < ov.rows; ++row) {
            double g = gy.v[row];
            if (g == 0.0) continue;
            const double* o = &ov.v[row * 3];
            const auto& c = counts[row];
            int n = c[0] + c[1] + c[2];
            double m = std::max(o[0], std::max(o[1], o[2]));
            double e0 = std::exp(o[0] - m), e1 = std::exp(o[1] - m), e2 = std::exp(o[2] - m);
            double z = e0 + e1 + e2;
            double* out = &go.v[row * 3];
            out[0] += g * (c[0] - n * e0 / z);
            out[1] += g * (c[1] - n * e1 / z);
            out[2] += g * (c[2] - n * e2 / z);
        }
        break;
    }
    case OpKind::WeightedSum: {
        if (!needs_grad(r.a)) break;
        Tensor& gx = grad_buf(r.a);
        const Tensor& w = aux_tensors_[r.aux];
        double g = gy.v[0];
        for (std::size_t row = 0; row < gx.v.size(); ++row)
            if (w.v[row] != 0.0) gx.v[row] += g * w.v[row];
        break;
    }
    case OpKind::Leaf:
    case OpKind::Constant:
        break;
    }
}

} // namespace surro::ad
