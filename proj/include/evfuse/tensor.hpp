#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace evfuse {

using Shape = std::vector<int>;

long shape_numel(const Shape& s);

struct TensorNode {
    Shape shape;
    std::vector<double> v;
    std::vector<double> g;  // allocated iff requires_grad
    bool requires_grad = false;
};

// Shared-handle dense double tensor. Copies alias the same storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return n_->shape; }
    long numel() const { return static_cast<long>(n_->v.size()); }
    int dim(int i) const { return n_->shape[static_cast<std::size_t>(i)]; }

    std::span<double> values() { return n_->v; }
    std::span<const double> values() const { return n_->v; }
    std::span<double> grad() { return n_->g; }
    std::span<const double> grad() const { return n_->g; }

    bool requires_grad() const { return n_->requires_grad; }
    void enable_grad();
    void zero_grad();

    double item() const;  // numel() == 1 only

    const std::shared_ptr<TensorNode>& node() const { return n_; }

private:
    std::shared_ptr<TensorNode> n_;
};

// Reverse-mode tape. Construction pushes onto a thread-local stack of active
// tapes; ops record onto the innermost one. Single-owner: a tape and the
// tensors recorded on it belong to one computation context.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    void record(std::function<void()> fn);

    // Seeds d(loss)/d(loss) = 1 and replays records in reverse execution
    // order. loss must be scalar; a second call on the same tape throws.
    void backward(const Tensor& loss);

private:
    std::vector<std::function<void()>> records_;
    bool consumed_ = false;
};

// --- differentiable ops ----------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad);
Tensor adaptive_avg_pool(const Tensor& input, int out_h, int out_w);
Tensor upsample_bilinear(const Tensor& input, int out_h, int out_w);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
// Elementwise product; either operand may be a {C,1,1} gate against {C,H,W}.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor concat(const std::vector<Tensor>& parts, int axis);
std::vector<Tensor> split(const Tensor& x, const std::vector<int>& sizes, int axis);
// Per-channel affine y = x * scale[c] + shift[c]; stands in for batch norm.
Tensor channel_affine(const Tensor& x, const Tensor& scl, const Tensor& shift);
Tensor sum(const Tensor& x);

// Mean CE over non-ignored pixels, log-sum-exp stabilized. target_ids has
// H*W entries; entries equal to ignore_id are skipped. All ignored -> 0 loss.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& target_ids, int ignore_id);
// Mean BCE over all elements; target values in [0, 1], not differentiated.
Tensor bce_with_logits(const Tensor& logits, const Tensor& target);

// --- optimizer --------------------------------------------------------------

struct AdamState {
    std::vector<double> m, v;
    long step = 0;
};

struct AdamConfig {
    double lr = 4e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled
};

void adam_step(Tensor& param, AdamState& state, const AdamConfig& cfg);

double cosine_lr(int epoch, int total, double lr0, double lr_min);

}  // namespace evfuse
