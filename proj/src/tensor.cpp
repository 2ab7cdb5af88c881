#include "evfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "evfuse/common.hpp"
#include "evfuse/kernels.hpp"

namespace evfuse {

namespace {

thread_local std::vector<Tape*> g_tape_stack;

std::shared_ptr<TensorNode> make_node(Shape shape, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->v.assign(static_cast<std::size_t>(shape_numel(n->shape)), 0.0);
    if (requires_grad) {
        n->g.assign(n->v.size(), 0.0);
        n->requires_grad = true;
    }
    return n;
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

// Marks the output differentiable and records the pullback if a tape is
// active and any input wants gradients.
template <typename Fn>
void autograd(Tensor& out, bool any_input_grad, Fn&& backward_fn) {
    Tape* tape = Tape::active();
    if (!tape || !any_input_grad) return;
    out.enable_grad();
    tape->record(std::forward<Fn>(backward_fn));
}

void check_chw(const Tensor& t, const char* who) {
    require(t.defined() && t.shape().size() == 3, std::string(who) + ": expected a C*H*W tensor");
}

}  // namespace

long shape_numel(const Shape& s) {
    long n = 1;
    for (int e : s) n *= e;
    return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    Tensor t;
    t.n_ = make_node(std::move(shape), requires_grad);
    return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.n_->v.begin(), t.n_->v.end(), value);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    require(static_cast<long>(values.size()) == shape_numel(shape),
            "Tensor::from: value count does not match shape");
    Tensor t;
    t.n_ = std::make_shared<TensorNode>();
    t.n_->shape = std::move(shape);
    t.n_->v = std::move(values);
    if (requires_grad) t.enable_grad();
    return t;
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

void Tensor::enable_grad() {
    if (!n_->requires_grad) {
        n_->g.assign(n_->v.size(), 0.0);
        n_->requires_grad = true;
    }
}

void Tensor::zero_grad() {
    if (n_->requires_grad) std::fill(n_->g.begin(), n_->g.end(), 0.0);
}

double Tensor::item() const {
    require(numel() == 1, "Tensor::item: tensor is not scalar");
    return n_->v[0];
}

Tape::Tape() { g_tape_stack.push_back(this); }

Tape::~Tape() {
    if (!g_tape_stack.empty() && g_tape_stack.back() == this) g_tape_stack.pop_back();
}

Tape* Tape::active() { return g_tape_stack.empty() ? nullptr : g_tape_stack.back(); }

void Tape::record(std::function<void()> fn) { records_.push_back(std::move(fn)); }

void Tape::backward(const Tensor& loss) {
    require(loss.defined() && loss.numel() == 1, "backward: loss must be scalar");
    if (consumed_) throw std::logic_error("backward: tape already consumed");
    consumed_ = true;
    if (loss.requires_grad()) loss.node()->g[0] = 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

// --- conv2d -----------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad) {
    check_chw(input, "conv2d");
    require(weight.defined() && weight.shape().size() == 4, "conv2d: weight must be Cout*Cin*k*k");
    const int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int c_out = weight.dim(0), k = weight.dim(2);
    require(weight.dim(1) == c_in, "conv2d: weight input-channel mismatch");
    require(weight.dim(3) == k && k % 2 == 1, "conv2d: kernel must be square with odd size");
    require(bias.defined() && bias.shape() == Shape{c_out}, "conv2d: bias shape mismatch");
    require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
    require((h + 2 * pad - k) % stride == 0 && (w + 2 * pad - k) % stride == 0,
            "conv2d: output extent is not integral for this stride/pad");
    kernels::Conv2dDims d;
    d.c_in = c_in; d.h_in = h; d.w_in = w;
    d.c_out = c_out; d.k = k; d.stride = stride; d.pad = pad;
    d.h_out = (h + 2 * pad - k) / stride + 1;
    d.w_out = (w + 2 * pad - k) / stride + 1;
    require(d.h_out >= 1 && d.w_out >= 1, "conv2d: empty output");

    Tensor out = Tensor::zeros({c_out, d.h_out, d.w_out});
    kernels::conv2d_forward(input.values().data(), weight.values().data(),
                            bias.values().data(), out.values().data(), d);

    bool needs = input.requires_grad() || weight.requires_grad() || bias.requires_grad();
    auto xn = input.node(), wn = weight.node(), bn = bias.node(), on = out.node();
    autograd(out, needs, [xn, wn, bn, on, d] {
        if (xn->requires_grad)
            kernels::conv2d_dinput(on->g.data(), wn->v.data(), xn->g.data(), d);
        if (wn->requires_grad)
            kernels::conv2d_dweight(on->g.data(), xn->v.data(), wn->g.data(),
                                    bn->requires_grad ? bn->g.data() : nullptr, d);
        else if (bn->requires_grad) {
            for (int co = 0; co < d.c_out; ++co) {
                const double* p = on->g.data() + static_cast<long>(co) * d.h_out * d.w_out;
                double acc = 0.0;
                for (long i = 0; i < static_cast<long>(d.h_out) * d.w_out; ++i) acc += p[i];
                bn->g[static_cast<std::size_t>(co)] += acc;
            }
        }
    });
    return out;
}

// --- pooling / resampling ----------------------------------------------------

Tensor adaptive_avg_pool(const Tensor& input, int out_h, int out_w) {
    check_chw(input, "adaptive_avg_pool");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    require(out_h >= 1 && out_w >= 1 && out_h <= h && out_w <= w,
            "adaptive_avg_pool: grid larger than feature map");
    Tensor out = Tensor::zeros({c, out_h, out_w});
    kernels::adaptive_avg_pool_forward(input.values().data(), out.values().data(),
                                       c, h, w, out_h, out_w);
    auto xn = input.node(), on = out.node();
    autograd(out, input.requires_grad(), [xn, on, c, h, w, out_h, out_w] {
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < out_h; ++i) {
                const int y0 = (i * h) / out_h, y1 = ((i + 1) * h + out_h - 1) / out_h;
                for (int j = 0; j < out_w; ++j) {
                    const int x0 = (j * w) / out_w, x1 = ((j + 1) * w + out_w - 1) / out_w;
                    const double gv = on->g[(static_cast<long>(ch) * out_h + i) * out_w + j] /
                                      ((y1 - y0) * (x1 - x0));
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x)
                            xn->g[(static_cast<long>(ch) * h + y) * w + x] += gv;
                }
            }
    });
    return out;
}

Tensor upsample_bilinear(const Tensor& input, int out_h, int out_w) {
    check_chw(input, "upsample_bilinear");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    require(out_h >= 1 && out_w >= 1, "upsample_bilinear: bad target size");
    Tensor out = Tensor::zeros({c, out_h, out_w});
    kernels::upsample_bilinear_forward(input.values().data(), out.values().data(),
                                       c, h, w, out_h, out_w);
    auto xn = input.node(), on = out.node();
    autograd(out, input.requires_grad(), [xn, on, c, h, w, out_h, out_w] {
        const double sy = static_cast<double>(h) / out_h;
        const double sx = static_cast<double>(w) / out_w;
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < out_h; ++oy) {
                double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
                const int y0 = static_cast<int>(fy);
                const int y1 = std::min(y0 + 1, h - 1);
                const double wy = fy - y0;
                for (int ox = 0; ox < out_w; ++ox) {
                    double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
                    const int x0 = static_cast<int>(fx);
                    const int x1 = std::min(x0 + 1, w - 1);
                    const double wx = fx - x0;
                    const double gv = on->g[(static_cast<long>(ch) * out_h + oy) * out_w + ox];
                    double* gin = xn->g.data() + static_cast<long>(ch) * h * w;
                    gin[y0 * w + x0] += gv * (1.0 - wy) * (1.0 - wx);
                    gin[y0 * w + x1] += gv * (1.0 - wy) * wx;
                    gin[y1 * w + x0] += gv * wy * (1.0 - wx);
                    gin[y1 * w + x1] += gv * wy * wx;
                }
            }
    });
    return out;
}

// --- elementwise -------------------------------------------------------------

Tensor sigmoid(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const auto xv = x.values();
    auto ov = out.values();
    for (long i = 0; i < x.numel(); ++i) {
        const double z = xv[i];
        ov[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    auto xn = x.node(), on = out.node();
    autograd(out, x.requires_grad(), [xn, on] {
        for (std::size_t i = 0; i < on->v.size(); ++i)
            xn->g[i] += on->g[i] * on->v[i] * (1.0 - on->v[i]);
    });
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const auto xv = x.values();
    auto ov = out.values();
    for (long i = 0; i < x.numel(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    auto xn = x.node(), on = out.node();
    autograd(out, x.requires_grad(), [xn, on] {
        for (std::size_t i = 0; i < on->v.size(); ++i)
            if (xn->v[i] > 0.0) xn->g[i] += on->g[i];
    });
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(same_shape(a, b), "add: shape mismatch");
    Tensor out = Tensor::zeros(a.shape());
    const auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (long i = 0; i < a.numel(); ++i) ov[i] = av[i] + bv[i];
    auto an = a.node(), bn = b.node(), on = out.node();
    autograd(out, a.requires_grad() || b.requires_grad(), [an, bn, on] {
        if (an->requires_grad)
            for (std::size_t i = 0; i < on->v.size(); ++i) an->g[i] += on->g[i];
        if (bn->requires_grad)
            for (std::size_t i = 0; i < on->v.size(); ++i) bn->g[i] += on->g[i];
    });
    return out;
}

namespace {

bool is_gate_for(const Tensor& gate, const Tensor& map) {
    return gate.shape().size() == 3 && map.shape().size() == 3 &&
           gate.dim(0) == map.dim(0) && gate.dim(1) == 1 && gate.dim(2) == 1 &&
           (map.dim(1) != 1 || map.dim(2) != 1);
}

// map {C,H,W} * gate {C,1,1}
Tensor mul_gate(const Tensor& map, const Tensor& gate) {
    const int c = map.dim(0), h = map.dim(1), w = map.dim(2);
    const long hw = static_cast<long>(h) * w;
    Tensor out = Tensor::zeros(map.shape());
    const auto mv = map.values(), gv = gate.values();
    auto ov = out.values();
    for (int ch = 0; ch < c; ++ch)
        for (long i = 0; i < hw; ++i) ov[ch * hw + i] = mv[ch * hw + i] * gv[ch];
    auto mn = map.node(), gn = gate.node(), on = out.node();
    autograd(out, map.requires_grad() || gate.requires_grad(), [mn, gn, on, c, hw] {
        if (mn->requires_grad)
            for (int ch = 0; ch < c; ++ch)
                for (long i = 0; i < hw; ++i) mn->g[ch * hw + i] += on->g[ch * hw + i] * gn->v[ch];
        if (gn->requires_grad)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (long i = 0; i < hw; ++i) acc += on->g[ch * hw + i] * mn->v[ch * hw + i];
                gn->g[static_cast<std::size_t>(ch)] += acc;
            }
    });
    return out;
}

}  // namespace

Tensor mul(const Tensor& a, const Tensor& b) {
    if (is_gate_for(b, a)) return mul_gate(a, b);
    if (is_gate_for(a, b)) return mul_gate(b, a);
    require(same_shape(a, b), "mul: shapes are neither equal nor gate-broadcastable");
    Tensor out = Tensor::zeros(a.shape());
    const auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (long i = 0; i < a.numel(); ++i) ov[i] = av[i] * bv[i];
    auto an = a.node(), bn = b.node(), on = out.node();
    autograd(out, a.requires_grad() || b.requires_grad(), [an, bn, on] {
        if (an->requires_grad)
            for (std::size_t i = 0; i < on->v.size(); ++i) an->g[i] += on->g[i] * bn->v[i];
        if (bn->requires_grad)
            for (std::size_t i = 0; i < on->v.size(); ++i) bn->g[i] += on->g[i] * an->v[i];
    });
    return out;
}

Tensor scale(const Tensor& x, double c) {
    Tensor out = Tensor::zeros(x.shape());
    const auto xv = x.values();
    auto ov = out.values();
    for (long i = 0; i < x.numel(); ++i) ov[i] = xv[i] * c;
    auto xn = x.node(), on = out.node();
    autograd(out, x.requires_grad(), [xn, on, c] {
        for (std::size_t i = 0; i < on->v.size(); ++i) xn->g[i] += on->g[i] * c;
    });
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    require(!parts.empty(), "concat: no inputs");
    require(axis == 0, "concat: only the leading axis is supported");
    const Shape& first = parts.front().shape();
    require(!first.empty(), "concat: scalar inputs");
    int total = 0;
    bool needs = false;
    for (const Tensor& p : parts) {
        require(p.shape().size() == first.size(), "concat: rank mismatch");
        for (std::size_t i = 1; i < first.size(); ++i)
            require(p.shape()[i] == first[i], "concat: trailing extent mismatch");
        total += p.dim(0);
        needs = needs || p.requires_grad();
    }
    Shape os = first;
    os[0] = total;
    Tensor out = Tensor::zeros(os);
    auto ov = out.values();
    long off = 0;
    for (const Tensor& p : parts) {
        std::memcpy(ov.data() + off, p.values().data(), sizeof(double) * p.numel());
        off += p.numel();
    }
    std::vector<std::shared_ptr<TensorNode>> ns;
    ns.reserve(parts.size());
    for (const Tensor& p : parts) ns.push_back(p.node());
    auto on = out.node();
    autograd(out, needs, [ns, on] {
        long o = 0;
        for (const auto& n : ns) {
            if (n->requires_grad)
                for (std::size_t i = 0; i < n->v.size(); ++i) n->g[i] += on->g[o + i];
            o += static_cast<long>(n->v.size());
        }
    });
    return out;
}

std::vector<Tensor> split(const Tensor& x, const std::vector<int>& sizes, int axis) {
    require(axis == 0, "split: only the leading axis is supported");
    require(!x.shape().empty(), "split: scalar input");
    int total = 0;
    for (int s : sizes) total += s;
    require(total == x.dim(0), "split: sizes do not sum to the leading extent");
    long inner = 1;
    for (std::size_t i = 1; i < x.shape().size(); ++i) inner *= x.shape()[i];
    std::vector<Tensor> out;
    long off = 0;
    for (int s : sizes) {
        Shape ps = x.shape();
        ps[0] = s;
        Tensor part = Tensor::zeros(ps);
        std::memcpy(part.values().data(), x.values().data() + off, sizeof(double) * s * inner);
        auto xn = x.node(), pn = part.node();
        const long o = off;
        autograd(part, x.requires_grad(), [xn, pn, o] {
            for (std::size_t i = 0; i < pn->v.size(); ++i) xn->g[o + i] += pn->g[i];
        });
        out.push_back(part);
        off += s * inner;
    }
    return out;
}

Tensor channel_affine(const Tensor& x, const Tensor& scl, const Tensor& shift) {
    check_chw(x, "channel_affine");
    const int c = x.dim(0);
    require(scl.shape() == Shape{c} && shift.shape() == Shape{c},
            "channel_affine: parameter shape mismatch");
    const long hw = static_cast<long>(x.dim(1)) * x.dim(2);
    Tensor out = Tensor::zeros(x.shape());
    const auto xv = x.values(), sv = scl.values(), tv = shift.values();
    auto ov = out.values();
    for (int ch = 0; ch < c; ++ch)
        for (long i = 0; i < hw; ++i) ov[ch * hw + i] = xv[ch * hw + i] * sv[ch] + tv[ch];
    auto xn = x.node(), sn = scl.node(), tn = shift.node(), on = out.node();
    bool needs = x.requires_grad() || scl.requires_grad() || shift.requires_grad();
    autograd(out, needs, [xn, sn, tn, on, c, hw] {
        for (int ch = 0; ch < c; ++ch) {
            double ds = 0.0, dt = 0.0;
            for (long i = 0; i < hw; ++i) {
                const double gv = on->g[ch * hw + i];
                if (xn->requires_grad) xn->g[ch * hw + i] += gv * sn->v[ch];
                ds += gv * xn->v[ch * hw + i];
                dt += gv;
            }
            if (sn->requires_grad) sn->g[static_cast<std::size_t>(ch)] += ds;
            if (tn->requires_grad) tn->g[static_cast<std::size_t>(ch)] += dt;
        }
    });
    return out;
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    Tensor out = Tensor::scalar(acc);
    auto xn = x.node(), on = out.node();
    autograd(out, x.requires_grad(), [xn, on] {
        const double gv = on->g[0];
        for (std::size_t i = 0; i < xn->v.size(); ++i) xn->g[i] += gv;
    });
    return out;
}

// --- losses -----------------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& target_ids, int ignore_id) {
    check_chw(logits, "cross_entropy");
    const int k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    const long hw = static_cast<long>(h) * w;
    require(static_cast<long>(target_ids.size()) == hw, "cross_entropy: target size mismatch");
    for (int id : target_ids)
        require(id == ignore_id || (id >= 0 && id < k), "cross_entropy: target id out of range");

    const auto zv = logits.values();
    long m = 0;
    double loss = 0.0;
    for (long i = 0; i < hw; ++i) {
        if (target_ids[static_cast<std::size_t>(i)] == ignore_id) continue;
        ++m;
        double zmax = zv[i];
        for (int c = 1; c < k; ++c) zmax = std::max(zmax, zv[c * hw + i]);
        double lse = 0.0;
        for (int c = 0; c < k; ++c) lse += std::exp(zv[c * hw + i] - zmax);
        lse = zmax + std::log(lse);
        loss += lse - zv[static_cast<long>(target_ids[static_cast<std::size_t>(i)]) * hw + i];
    }
    Tensor out = Tensor::scalar(m > 0 ? loss / static_cast<double>(m) : 0.0);
    auto zn = logits.node(), on = out.node();
    const long mm = m;
    autograd(out, logits.requires_grad(), [zn, on, target_ids, ignore_id, k, hw, mm] {
        if (mm == 0) return;
        const double gv = on->g[0] / static_cast<double>(mm);
        for (long i = 0; i < hw; ++i) {
            const int t = target_ids[static_cast<std::size_t>(i)];
            if (t == ignore_id) continue;
            double zmax = zn->v[static_cast<std::size_t>(i)];
            for (int c = 1; c < k; ++c) zmax = std::max(zmax, zn->v[c * hw + i]);
            double denom = 0.0;
            for (int c = 0; c < k; ++c) denom += std::exp(zn->v[c * hw + i] - zmax);
            for (int c = 0; c < k; ++c) {
                const double p = std::exp(zn->v[c * hw + i] - zmax) / denom;
                zn->g[c * hw + i] += gv * (p - (c == t ? 1.0 : 0.0));
            }
        }
    });
    return out;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& target) {
    require(same_shape(logits, target), "bce_with_logits: shape mismatch");
    const auto zv = logits.values(), tv = target.values();
    const long n = logits.numel();
    require(n > 0, "bce_with_logits: empty input");
    double loss = 0.0;
    for (long i = 0; i < n; ++i) {
        const double z = zv[i];
        loss += std::max(z, 0.0) - z * tv[i] + std::log1p(std::exp(-std::abs(z)));
    }
    Tensor out = Tensor::scalar(loss / static_cast<double>(n));
    auto zn = logits.node(), tn = target.node(), on = out.node();
    autograd(out, logits.requires_grad(), [zn, tn, on, n] {
        const double gv = on->g[0] / static_cast<double>(n);
        for (long i = 0; i < n; ++i) {
            const double z = zn->v[i];
            const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            zn->g[i] += gv * (s - tn->v[i]);
        }
    });
    return out;
}

// --- optimizer ----------------------------------------------------------------

void adam_step(Tensor& param, AdamState& state, const AdamConfig& cfg) {
    require(param.requires_grad(), "adam_step: parameter has no gradient");
    const long n = param.numel();
    if (state.m.empty()) {
        state.m.assign(static_cast<std::size_t>(n), 0.0);
        state.v.assign(static_cast<std::size_t>(n), 0.0);
    }
    require(static_cast<long>(state.m.size()) == n, "adam_step: state size mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    auto pv = param.values();
    const auto gv = param.grad();
    for (long i = 0; i < n; ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * gv[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gv[i] * gv[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        pv[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * pv[i]);
    }
}

double cosine_lr(int epoch, int total, double lr0, double lr_min) {
    if (total <= 0) return lr_min;
    const double t = static_cast<double>(epoch) / static_cast<double>(total);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(3.14159265358979323846 * t));
}

}  // namespace evfuse
