#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mixtg/errors.hpp"

namespace mixtg {

class Rng;

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& shape);
std::int64_t shape_numel(const Shape& shape);

enum class Act { Relu, Tanh, Sigmoid, Gelu };

Act parse_act(const std::string& name);  // ConfigError on unknown kind
std::string act_name(Act kind);

namespace detail {

// One node of the differentiation graph. Interior nodes carry a backward rule
// that reads this node's grad and accumulates into the parents' grads.
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;  // leaf flag; interior nodes use backward_fn
    std::vector<double> grad;    // pre-allocated (zeros) for requires_grad leaves
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool tracked() const { return requires_grad || static_cast<bool>(backward_fn); }
    void accum_grad(const std::vector<double>& g);
    std::vector<double>& ensure_grad();
};

}  // namespace detail

// Dense row-major tensor of 64-bit reals. Handle semantics: copies of a
// Tensor share one node of the differentiation graph. A graph is confined to
// one thread during construction and backward; tensors that do not require
// grad are immutable after creation and safe to share.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(impl_); }
    const Shape& shape() const;
    int ndim() const;
    std::int64_t dim(int axis) const;  // negative axis counts from the back
    std::int64_t numel() const;

    const std::vector<double>& data() const;
    /// Direct mutation of leaf storage (initialization, optimizer updates).
    std::vector<double>& raw_data();

    bool requires_grad() const;
    /// Gradient of a requires_grad leaf; zeros until backward reaches it.
    const std::vector<double>& grad() const;
    std::vector<double>& raw_grad();
    void zero_grad();

    double item() const;  // scalar tensors only
    double at(const std::vector<std::int64_t>& idx) const;
    bool all_finite() const;

    /// Reverse-mode sweep from a scalar. Visits each graph node once in
    /// reverse topological order; leaf grads accumulate across all paths.
    void backward() const;

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
    static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl);

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

// ---- differentiable primitives ----
// All primitives are pure: identical inputs give bitwise-identical outputs.
// Binary elementwise ops broadcast with align-right semantics (each trailing
// dimension must match or be 1 on one side).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);

/// Batched matrix product over the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& x, int axis0, int axis1);
Tensor reshape(const Tensor& x, Shape new_shape);

/// Numerically stable softmax over the last axis (max subtraction).
Tensor softmax_lastdim(const Tensor& x);

/// Softmax restricted to entries where keep_mask != 0; masked entries are 0.
/// The mask is a plain tensor and receives no gradient.
Tensor masked_softmax_lastdim(const Tensor& x, const Tensor& keep_mask);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// x·w + b over the last axis of x.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor activation(Act kind, const Tensor& x);

Tensor sum_all(const Tensor& x);   // -> shape [1]
Tensor mean_all(const Tensor& x);  // -> shape [1]

/// Reduce over the given axes, keeping them as size-1 dimensions.
Tensor sum_axes(const Tensor& x, std::vector<int> axes);
Tensor mean_axes(const Tensor& x, std::vector<int> axes);

Tensor sqrt_elem(const Tensor& x);

Tensor concat_lastdim(const std::vector<Tensor>& parts);
Tensor slice_axis(const Tensor& x, int axis, std::int64_t start, std::int64_t len);

}  // namespace mixtg
