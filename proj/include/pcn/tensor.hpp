#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace pcn {

class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor of 64-bit floats. Ops build a reverse-mode graph on
// the fly: each result holds its parents and a closure that scatters the
// result's gradient into them. Reductions always sum in index order, so a
// given graph evaluates identically run to run.
class Tensor : public std::enable_shared_from_this<Tensor> {
  public:
    std::vector<std::size_t> shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until backward reaches this node

    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backprop;  // reads this->grad, accumulates into parents
    const char* op = "leaf";

    std::size_t size() const { return values.size(); }
    double item() const;
    void ensure_grad();  // allocate zero grad matching shape
    void accumulate_grad(const std::vector<double>& g);
};

std::string shape_str(const std::vector<std::size_t>& shape);
std::size_t shape_numel(const std::vector<std::size_t>& shape);

TensorPtr tensor(std::vector<std::size_t> shape, std::vector<double> values,
                 bool requires_grad = false);
TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad = false);
TensorPtr full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
TensorPtr scalar(double value, bool requires_grad = false);

// Disables graph recording for the lifetime of the guard (forward-only eval).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};
bool grad_enabled();

// ---- primitive ops -------------------------------------------------------
// add/sub/mul broadcast when one operand's shape is a trailing suffix of the
// other's (bias add, scalar constants); the gradient of the smaller operand
// sums over the leading axes.
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double s);
TensorPtr relu(const TensorPtr& a);
TensorPtr tanh_op(const TensorPtr& a);
TensorPtr sigmoid(const TensorPtr& a);
TensorPtr log_op(const TensorPtr& a);
TensorPtr sqrt_op(const TensorPtr& a);
TensorPtr clamp(const TensorPtr& a, double lo, double hi);
TensorPtr softmax_last(const TensorPtr& a);
TensorPtr mean_axis(const TensorPtr& a, std::size_t axis);
TensorPtr sum_axis(const TensorPtr& a, std::size_t axis);
// weights shape must equal a's shape truncated after `axis`; reduces `axis`:
// out[o,i] = sum_k w[o,k] * a[o,k,i]
TensorPtr weighted_mean_axis(const TensorPtr& a, const TensorPtr& weights, std::size_t axis);
TensorPtr concat_last(const std::vector<TensorPtr>& parts);
TensorPtr slice_last(const TensorPtr& a, std::size_t start, std::size_t len);
TensorPtr reshape(const TensorPtr& a, std::vector<std::size_t> new_shape);
// inserts an axis of extent n at position `axis`, replicating along it
TensorPtr expand_axis(const TensorPtr& a, std::size_t axis, std::size_t n);
TensorPtr l2_normalize_last(const TensorPtr& a);  // v / (|v| + 1e-12)
TensorPtr l2_norm_last(const TensorPtr& a);       // reduces last axis to |v|
// elementwise min; on exact ties the gradient goes to a
TensorPtr min_elem(const TensorPtr& a, const TensorPtr& b);
// rot: [B,3,3], v: [B,3] or [B,K,3]; out = R*v per row (R^T*v if transpose)
TensorPtr rotate_vec3(const TensorPtr& rot, const TensorPtr& v, bool transpose = false);

void backward(const TensorPtr& loss);

// ---- SGD with momentum ----------------------------------------------------
struct SgdState {
    double learning_rate = 1e-4;
    double momentum = 0.9;
    std::vector<std::vector<double>> velocity;  // one per parameter, zero-initialized
};

SgdState make_sgd(const std::vector<TensorPtr>& params, double learning_rate, double momentum);
// v <- momentum*v + g; p <- p - lr*v; grads cleared afterwards
void sgd_step(const std::vector<TensorPtr>& params, SgdState& state);

// ---- parameter checkpoint container ----------------------------------------
// Versioned text container: header line, "meta k v" lines, then per tensor a
// "tensor <name> <rank> <dims...>" line followed by one line of values.
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, TensorPtr>> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pcn
