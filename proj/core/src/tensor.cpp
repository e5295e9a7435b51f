#include "mixtg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "mixtg/rng.hpp"

namespace mixtg {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Act parse_act(const std::string& name) {
    if (name == "relu") return Act::Relu;
    if (name == "tanh") return Act::Tanh;
    if (name == "sigmoid") return Act::Sigmoid;
    if (name == "gelu") return Act::Gelu;
    throw ConfigError("unknown activation kind '" + name + "' (expected relu|tanh|sigmoid|gelu)");
}

std::string act_name(Act kind) {
    switch (kind) {
        case Act::Relu: return "relu";
        case Act::Tanh: return "tanh";
        case Act::Sigmoid: return "sigmoid";
        case Act::Gelu: return "gelu";
    }
    throw ConfigError("invalid activation enum value");
}

namespace detail {

void TensorImpl::accum_grad(const std::vector<double>& g) {
    auto& dst = ensure_grad();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

std::vector<double>& TensorImpl::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
}

}  // namespace detail

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

namespace {

void check_shape_valid(const Shape& shape) {
    for (auto d : shape) {
        if (d <= 0) throw DimensionError("dimension sizes must be positive, got " + shape_str(shape));
    }
}

ImplPtr make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
    check_shape_valid(shape);
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    if (requires_grad) impl->grad.assign(impl->data.size(), 0.0);
    return impl;
}

bool any_tracked(const std::vector<ImplPtr>& inputs) {
    for (const auto& p : inputs) {
        if (p->tracked()) return true;
    }
    return false;
}

// Wires an op result into the graph only when some input is tracked.
Tensor make_op(Shape shape, std::vector<double> data, std::vector<ImplPtr> parents,
               std::function<void(TensorImpl&)> backward) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    if (any_tracked(parents)) {
        impl->parents = std::move(parents);
        impl->backward_fn = std::move(backward);
    }
    return Tensor::wrap(std::move(impl));
}

// ---- broadcasting helpers ----

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const int ra = static_cast<int>(a.size());
    const int rb = static_cast<int>(b.size());
    const int r = std::max(ra, rb);
    Shape out(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        const std::int64_t da = (i < r - ra) ? 1 : a[static_cast<std::size_t>(i - (r - ra))];
        const std::int64_t db = (i < r - rb) ? 1 : b[static_cast<std::size_t>(i - (r - rb))];
        if (da != db && da != 1 && db != 1) {
            throw DimensionError(std::string(op) + ": cannot broadcast shapes " + shape_str(a) +
                                 " and " + shape_str(b));
        }
        out[static_cast<std::size_t>(i)] = std::max(da, db);
    }
    return out;
}

// Row-major strides; broadcast dims (size 1 against a larger output) get stride 0.
std::vector<std::int64_t> broadcast_strides(const Shape& shape, const Shape& out) {
    const int r = static_cast<int>(out.size());
    const int rs = static_cast<int>(shape.size());
    std::vector<std::int64_t> natural(static_cast<std::size_t>(rs), 1);
    for (int i = rs - 2; i >= 0; --i) {
        natural[static_cast<std::size_t>(i)] =
            natural[static_cast<std::size_t>(i + 1)] * shape[static_cast<std::size_t>(i + 1)];
    }
    std::vector<std::int64_t> strides(static_cast<std::size_t>(r), 0);
    for (int i = 0; i < r; ++i) {
        const int j = i - (r - rs);
        if (j < 0) continue;
        if (shape[static_cast<std::size_t>(j)] == 1 && out[static_cast<std::size_t>(i)] != 1) continue;
        strides[static_cast<std::size_t>(i)] = natural[static_cast<std::size_t>(j)];
    }
    return strides;
}

template <class F>
std::vector<double> ew_binary(const std::vector<double>& a, const Shape& ash,
                              const std::vector<double>& b, const Shape& bsh,
                              const Shape& osh, F f) {
    const std::int64_t n = shape_numel(osh);
    std::vector<double> out(static_cast<std::size_t>(n));
    const auto sa = broadcast_strides(ash, osh);
    const auto sb = broadcast_strides(bsh, osh);
    const int r = static_cast<int>(osh.size());
    std::vector<std::int64_t> coord(static_cast<std::size_t>(r), 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] =
            f(a[static_cast<std::size_t>(ia)], b[static_cast<std::size_t>(ib)]);
        for (int d = r - 1; d >= 0; --d) {
            coord[static_cast<std::size_t>(d)]++;
            ia += sa[static_cast<std::size_t>(d)];
            ib += sb[static_cast<std::size_t>(d)];
            if (coord[static_cast<std::size_t>(d)] < osh[static_cast<std::size_t>(d)]) break;
            ia -= sa[static_cast<std::size_t>(d)] * osh[static_cast<std::size_t>(d)];
            ib -= sb[static_cast<std::size_t>(d)] * osh[static_cast<std::size_t>(d)];
            coord[static_cast<std::size_t>(d)] = 0;
        }
    }
    return out;
}

// Sum a gradient of shape `from` down to shape `to` (inverse of broadcasting).
std::vector<double> reduce_to_shape(const std::vector<double>& g, const Shape& from, const Shape& to) {
    if (from == to) return g;
    std::vector<double> out(static_cast<std::size_t>(shape_numel(to)), 0.0);
    const auto st = broadcast_strides(to, from);
    const int r = static_cast<int>(from.size());
    std::vector<std::int64_t> coord(static_cast<std::size_t>(r), 0);
    std::int64_t it = 0;
    const std::int64_t n = shape_numel(from);
    for (std::int64_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(it)] += g[static_cast<std::size_t>(i)];
        for (int d = r - 1; d >= 0; --d) {
            coord[static_cast<std::size_t>(d)]++;
            it += st[static_cast<std::size_t>(d)];
            if (coord[static_cast<std::size_t>(d)] < from[static_cast<std::size_t>(d)]) break;
            it -= st[static_cast<std::size_t>(d)] * from[static_cast<std::size_t>(d)];
            coord[static_cast<std::size_t>(d)] = 0;
        }
    }
    return out;
}

int normalize_axis(int axis, int ndim, const char* op) {
    const int a = axis < 0 ? axis + ndim : axis;
    if (a < 0 || a >= ndim) {
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                             " out of range for rank " + std::to_string(ndim));
    }
    return a;
}

// ---- batched matmul kernel ----
// Computes op(A)·op(B) per batch slice where op optionally transposes the
// last two axes. Batch dims broadcast align-right.
struct MatmulOut {
    std::vector<double> data;
    Shape shape;
};

MatmulOut batched_matmul(const std::vector<double>& a, const Shape& ash, bool ta,
                         const std::vector<double>& b, const Shape& bsh, bool tb) {
    if (ash.size() < 2 || bsh.size() < 2) {
        throw DimensionError("matmul: operands must have rank >= 2, got " + shape_str(ash) +
                             " and " + shape_str(bsh));
    }
    const auto arank = static_cast<int>(ash.size());
    const auto brank = static_cast<int>(bsh.size());
    const std::int64_t am = ash[static_cast<std::size_t>(arank - 2)];
    const std::int64_t an = ash[static_cast<std::size_t>(arank - 1)];
    const std::int64_t bm = bsh[static_cast<std::size_t>(brank - 2)];
    const std::int64_t bn = bsh[static_cast<std::size_t>(brank - 1)];
    const std::int64_t m = ta ? an : am;
    const std::int64_t k = ta ? am : an;
    const std::int64_t k2 = tb ? bn : bm;
    const std::int64_t n = tb ? bm : bn;
    if (k != k2) {
        throw DimensionError("matmul: inner dimensions disagree for shapes " + shape_str(ash) +
                             " and " + shape_str(bsh));
    }
    Shape abatch(ash.begin(), ash.end() - 2);
    Shape bbatch(bsh.begin(), bsh.end() - 2);
    Shape obatch = broadcast_shape(abatch, bbatch, "matmul");
    const std::int64_t batches = shape_numel(obatch);
    const auto sa = broadcast_strides(abatch, obatch);
    const auto sb = broadcast_strides(bbatch, obatch);
    const std::int64_t a_mat = am * an;
    const std::int64_t b_mat = bm * bn;

    MatmulOut out;
    out.shape = obatch;
    out.shape.push_back(m);
    out.shape.push_back(n);
    out.data.assign(static_cast<std::size_t>(batches * m * n), 0.0);

    const int r = static_cast<int>(obatch.size());
    std::vector<std::int64_t> coord(static_cast<std::size_t>(r), 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t bi = 0; bi < batches; ++bi) {
        const double* ap = a.data() + ia * a_mat;
        const double* bp = b.data() + ib * b_mat;
        double* op = out.data.data() + bi * m * n;
        // Row strides of the (possibly transposed) views.
        const std::int64_t ars = ta ? 1 : an;
        const std::int64_t acs = ta ? an : 1;
        const std::int64_t brs = tb ? 1 : bn;
        const std::int64_t bcs = tb ? bn : 1;
        for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t kk = 0; kk < k; ++kk) {
                const double av = ap[i * ars + kk * acs];
                if (av == 0.0) continue;
                const double* brow = bp + kk * brs;
                double* orow = op + i * n;
                for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j * bcs];
            }
        }
        for (int d = r - 1; d >= 0; --d) {
            coord[static_cast<std::size_t>(d)]++;
            ia += sa[static_cast<std::size_t>(d)];
            ib += sb[static_cast<std::size_t>(d)];
            if (coord[static_cast<std::size_t>(d)] < obatch[static_cast<std::size_t>(d)]) break;
            ia -= sa[static_cast<std::size_t>(d)] * obatch[static_cast<std::size_t>(d)];
            ib -= sb[static_cast<std::size_t>(d)] * obatch[static_cast<std::size_t>(d)];
            coord[static_cast<std::size_t>(d)] = 0;
        }
    }
    return out;
}

}  // namespace

// ---- Tensor handle ----

Tensor Tensor::wrap(std::shared_ptr<detail::TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_numel(shape);
    return wrap(make_leaf(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0),
                          requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return wrap(make_leaf(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value),
                          requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    return wrap(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad) {
    const auto n = shape_numel(shape);
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return wrap(make_leaf(std::move(shape), std::move(data), requires_grad));
}

const Shape& Tensor::shape() const { return impl_->shape; }
int Tensor::ndim() const { return static_cast<int>(impl_->shape.size()); }

std::int64_t Tensor::dim(int axis) const {
    const int a = normalize_axis(axis, ndim(), "dim");
    return impl_->shape[static_cast<std::size_t>(a)];
}

std::int64_t Tensor::numel() const { return impl_->numel(); }
const std::vector<double>& Tensor::data() const { return impl_->data; }
std::vector<double>& Tensor::raw_data() { return impl_->data; }
bool Tensor::requires_grad() const { return impl_->requires_grad; }

const std::vector<double>& Tensor::grad() const {
    if (!impl_->requires_grad) throw std::logic_error("grad(): tensor does not require grad");
    return const_cast<TensorImpl&>(*impl_).ensure_grad();
}

std::vector<double>& Tensor::raw_grad() {
    if (!impl_->requires_grad) throw std::logic_error("raw_grad(): tensor does not require grad");
    return impl_->ensure_grad();
}

void Tensor::zero_grad() {
    if (impl_->requires_grad) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("item(): tensor is not scalar, shape " + shape_str(shape()));
    return impl_->data[0];
}

double Tensor::at(const std::vector<std::int64_t>& idx) const {
    if (static_cast<int>(idx.size()) != ndim()) {
        throw DimensionError("at(): index rank mismatch for shape " + shape_str(shape()));
    }
    std::int64_t flat = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) {
        if (idx[d] < 0 || idx[d] >= impl_->shape[d]) {
            throw DimensionError("at(): index out of bounds for shape " + shape_str(shape()));
        }
        flat = flat * impl_->shape[d] + idx[d];
    }
    return impl_->data[static_cast<std::size_t>(flat)];
}

bool Tensor::all_finite() const {
    for (double v : impl_->data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::backward() const {
    if (numel() != 1) {
        throw DimensionError("backward: loss must be scalar, got shape " + shape_str(shape()));
    }
    // Iterative post-order DFS for the topological order.
    std::vector<TensorImpl*> topo;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    visited.insert(impl_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorImpl* parent = node->parents[next].get();
            ++next;
            if (visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }
    impl_->ensure_grad();
    impl_->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

// ---- primitives ----

namespace {

Tensor binary_add_like(const Tensor& a, const Tensor& b, double sign_b, const char* name) {
    const auto osh = broadcast_shape(a.shape(), b.shape(), name);
    auto out = sign_b > 0
                   ? ew_binary(a.data(), a.shape(), b.data(), b.shape(), osh,
                               [](double x, double y) { return x + y; })
                   : ew_binary(a.data(), a.shape(), b.data(), b.shape(), osh,
                               [](double x, double y) { return x - y; });
    auto pa = a.impl();
    auto pb = b.impl();
    const Shape ash = a.shape();
    const Shape bsh = b.shape();
    return make_op(osh, std::move(out), {pa, pb},
                   [pa, pb, ash, bsh, osh, sign_b](TensorImpl& self) {
                       if (pa->tracked()) pa->accum_grad(reduce_to_shape(self.grad, osh, ash));
                       if (pb->tracked()) {
                           auto gb = reduce_to_shape(self.grad, osh, bsh);
                           if (sign_b < 0) {
                               for (auto& v : gb) v = -v;
                           }
                           pb->accum_grad(gb);
                       }
                   });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_add_like(a, b, +1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_add_like(a, b, -1.0, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
    const auto osh = broadcast_shape(a.shape(), b.shape(), "mul");
    auto out = ew_binary(a.data(), a.shape(), b.data(), b.shape(), osh,
                         [](double x, double y) { return x * y; });
    auto pa = a.impl();
    auto pb = b.impl();
    const Shape ash = a.shape();
    const Shape bsh = b.shape();
    return make_op(osh, std::move(out), {pa, pb}, [pa, pb, ash, bsh, osh](TensorImpl& self) {
        if (pa->tracked()) {
            auto gfull = ew_binary(self.grad, osh, pb->data, bsh, osh,
                                   [](double g, double y) { return g * y; });
            pa->accum_grad(reduce_to_shape(gfull, osh, ash));
        }
        if (pb->tracked()) {
            auto gfull = ew_binary(self.grad, osh, pa->data, ash, osh,
                                   [](double g, double x) { return g * x; });
            pb->accum_grad(reduce_to_shape(gfull, osh, bsh));
        }
    });
}

Tensor scale(const Tensor& x, double s) {
    auto out = x.data();
    for (auto& v : out) v *= s;
    auto px = x.impl();
    return make_op(x.shape(), std::move(out), {px}, [px, s](TensorImpl& self) {
        if (!px->tracked()) return;
        auto g = self.grad;
        for (auto& v : g) v *= s;
        px->accum_grad(g);
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    auto fw = batched_matmul(a.data(), a.shape(), false, b.data(), b.shape(), false);
    auto pa = a.impl();
    auto pb = b.impl();
    const Shape ash = a.shape();
    const Shape bsh = b.shape();
    const Shape osh = fw.shape;
    return make_op(fw.shape, std::move(fw.data), {pa, pb}, [pa, pb, ash, bsh, osh](TensorImpl& self) {
        if (pa->tracked()) {
            // dA = dC · Bᵀ, then reduce broadcast batch dims back to A's shape.
            auto da = batched_matmul(self.grad, osh, false, pb->data, bsh, true);
            pa->accum_grad(reduce_to_shape(da.data, da.shape, ash));
        }
        if (pb->tracked()) {
            // dB = Aᵀ · dC.
            auto db = batched_matmul(pa->data, ash, true, self.grad, osh, false);
            pb->accum_grad(reduce_to_shape(db.data, db.shape, bsh));
        }
    });
}

namespace {

std::vector<double> transpose_data(const std::vector<double>& src, const Shape& shape, int a0,
                                   int a1, Shape& out_shape) {
    out_shape = shape;
    std::swap(out_shape[static_cast<std::size_t>(a0)], out_shape[static_cast<std::size_t>(a1)]);
    const int r = static_cast<int>(shape.size());
    std::vector<std::int64_t> in_strides(static_cast<std::size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i) {
        in_strides[static_cast<std::size_t>(i)] =
            in_strides[static_cast<std::size_t>(i + 1)] * shape[static_cast<std::size_t>(i + 1)];
    }
    // Strides of the output walk, expressed in source offsets.
    std::vector<std::int64_t> walk = in_strides;
    std::swap(walk[static_cast<std::size_t>(a0)], walk[static_cast<std::size_t>(a1)]);
    const std::int64_t n = shape_numel(shape);
    std::vector<double> out(static_cast<std::size_t>(n));
    std::vector<std::int64_t> coord(static_cast<std::size_t>(r), 0);
    std::int64_t is = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = src[static_cast<std::size_t>(is)];
        for (int d = r - 1; d >= 0; --d) {
            coord[static_cast<std::size_t>(d)]++;
            is += walk[static_cast<std::size_t>(d)];
            if (coord[static_cast<std::size_t>(d)] < out_shape[static_cast<std::size_t>(d)]) break;
            is -= walk[static_cast<std::size_t>(d)] * out_shape[static_cast<std::size_t>(d)];
            coord[static_cast<std::size_t>(d)] = 0;
        }
    }
    return out;
}

}  // namespace

Tensor transpose(const Tensor& x, int axis0, int axis1) {
    const int a0 = normalize_axis(axis0, x.ndim(), "transpose");
    const int a1 = normalize_axis(axis1, x.ndim(), "transpose");
    Shape osh;
    auto out = transpose_data(x.data(), x.shape(), a0, a1, osh);
    auto px = x.impl();
    return make_op(osh, std::move(out), {px}, [px, osh, a0, a1](TensorImpl& self) {
        if (!px->tracked()) return;
        Shape back;
        px->accum_grad(transpose_data(self.grad, osh, a0, a1, back));
    });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    check_shape_valid(new_shape);
    if (shape_numel(new_shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                             shape_str(new_shape));
    }
    auto px = x.impl();
    return make_op(std::move(new_shape), x.data(), {px}, [px](TensorImpl& self) {
        if (px->tracked()) px->accum_grad(self.grad);
    });
}

namespace {

// Shared softmax forward/backward; an empty mask means all entries are kept.
Tensor softmax_impl(const Tensor& x, const Tensor* mask) {
    const std::int64_t n = x.dim(-1);
    if (n < 1) throw DimensionError("softmax: empty last dimension");
    if (mask && mask->shape() != x.shape()) {
        throw DimensionError("masked_softmax: mask shape " + shape_str(mask->shape()) +
                             " does not match input " + shape_str(x.shape()));
    }
    const std::int64_t rows = x.numel() / n;
    std::vector<double> out(static_cast<std::size_t>(x.numel()), 0.0);
    const auto& src = x.data();
    const double* mk = mask ? mask->data().data() : nullptr;
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = src.data() + r * n;
        const double* mr = mk ? mk + r * n : nullptr;
        double* yr = out.data() + r * n;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::int64_t j = 0; j < n; ++j) {
            if (!mr || mr[j] != 0.0) mx = std::max(mx, xr[j]);
        }
        if (mx == -std::numeric_limits<double>::infinity()) {
            throw ConfigError("masked_softmax: row with no kept entries");
        }
        double sum = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            if (!mr || mr[j] != 0.0) {
                yr[j] = std::exp(xr[j] - mx);
                sum += yr[j];
            }
        }
        for (std::int64_t j = 0; j < n; ++j) yr[j] /= sum;
    }
    auto px = x.impl();
    std::vector<ImplPtr> parents{px};
    if (mask) parents.push_back(mask->impl());
    return make_op(x.shape(), std::move(out), std::move(parents), [px, n](TensorImpl& self) {
        if (!px->tracked()) return;
        // dx = y ∘ (g − Σ_j g_j y_j); masked entries have y = 0, so the same
        // expression covers both the plain and the masked variants.
        const std::int64_t rows = self.numel() / n;
        std::vector<double> gx(self.grad.size());
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* y = self.data.data() + r * n;
            const double* g = self.grad.data() + r * n;
            double dot = 0.0;
            for (std::int64_t j = 0; j < n; ++j) dot += g[j] * y[j];
            double* dst = gx.data() + static_cast<std::size_t>(r * n);
            for (std::int64_t j = 0; j < n; ++j) dst[j] = y[j] * (g[j] - dot);
        }
        px->accum_grad(gx);
    });
}

}  // namespace

Tensor softmax_lastdim(const Tensor& x) { return softmax_impl(x, nullptr); }

Tensor masked_softmax_lastdim(const Tensor& x, const Tensor& keep_mask) {
    return softmax_impl(x, &keep_mask);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
    const std::int64_t n = x.dim(-1);
    if (gamma.ndim() != 1 || beta.ndim() != 1 || gamma.dim(0) != n || beta.dim(0) != n) {
        throw DimensionError("layer_norm: gamma/beta must be rank-1 of size " + std::to_string(n) +
                             ", got " + shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
    }
    const std::int64_t rows = x.numel() / n;
    std::vector<double> out(static_cast<std::size_t>(x.numel()));
    const auto& src = x.data();
    const auto& gm = gamma.data();
    const auto& bt = beta.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = src.data() + r * n;
        double* yr = out.data() + r * n;
        double mean = 0.0;
        for (std::int64_t j = 0; j < n; ++j) mean += xr[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            const double d = xr[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::int64_t j = 0; j < n; ++j) yr[j] = (xr[j] - mean) * inv * gm[j] + bt[j];
    }
    auto px = x.impl();
    auto pg = gamma.impl();
    auto pb = beta.impl();
    return make_op(x.shape(), std::move(out), {px, pg, pb}, [px, pg, pb, n, eps](TensorImpl& self) {
        const std::int64_t rows = self.numel() / n;
        std::vector<double> gx;
        std::vector<double> gg, gb;
        if (px->tracked()) gx.assign(self.grad.size(), 0.0);
        if (pg->tracked()) gg.assign(static_cast<std::size_t>(n), 0.0);
        if (pb->tracked()) gb.assign(static_cast<std::size_t>(n), 0.0);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* xr = px->data.data() + r * n;
            const double* g = self.grad.data() + r * n;
            double mean = 0.0;
            for (std::int64_t j = 0; j < n; ++j) mean += xr[j];
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::int64_t j = 0; j < n; ++j) {
                const double d = xr[j] - mean;
                var += d * d;
            }
            var /= static_cast<double>(n);
            const double inv = 1.0 / std::sqrt(var + eps);
            double ghat_mean = 0.0, ghat_xhat_mean = 0.0;
            for (std::int64_t j = 0; j < n; ++j) {
                const double xhat = (xr[j] - mean) * inv;
                const double ghat = g[j] * pg->data[static_cast<std::size_t>(j)];
                ghat_mean += ghat;
                ghat_xhat_mean += ghat * xhat;
                if (!gg.empty()) gg[static_cast<std::size_t>(j)] += g[j] * xhat;
                if (!gb.empty()) gb[static_cast<std::size_t>(j)] += g[j];
            }
            ghat_mean /= static_cast<double>(n);
            ghat_xhat_mean /= static_cast<double>(n);
            if (!gx.empty()) {
                double* dst = gx.data() + static_cast<std::size_t>(r * n);
                for (std::int64_t j = 0; j < n; ++j) {
                    const double xhat = (xr[j] - mean) * inv;
                    const double ghat = g[j] * pg->data[static_cast<std::size_t>(j)];
                    dst[j] = inv * (ghat - ghat_mean - xhat * ghat_xhat_mean);
                }
            }
        }
        if (!gx.empty()) px->accum_grad(gx);
        if (!gg.empty()) pg->accum_grad(gg);
        if (!gb.empty()) pb->accum_grad(gb);
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.ndim() != 2) throw DimensionError("linear: weight must be rank-2, got " + shape_str(w.shape()));
    if (x.dim(-1) != w.dim(0)) {
        throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                             shape_str(w.shape()));
    }
    if (b.ndim() != 1 || b.dim(0) != w.dim(1)) {
        throw DimensionError("linear: bias " + shape_str(b.shape()) + " incompatible with weight " +
                             shape_str(w.shape()));
    }
    if (x.ndim() == 1) {
        auto row = reshape(x, {1, x.dim(0)});
        return reshape(add(matmul(row, w), b), {w.dim(1)});
    }
    return add(matmul(x, w), b);
}

Tensor activation(Act kind, const Tensor& x) {
    const auto& src = x.data();
    std::vector<double> out(src.size());
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    switch (kind) {
        case Act::Relu:
            for (std::size_t i = 0; i < src.size(); ++i) out[i] = src[i] > 0.0 ? src[i] : 0.0;
            break;
        case Act::Tanh:
            for (std::size_t i = 0; i < src.size(); ++i) out[i] = std::tanh(src[i]);
            break;
        case Act::Sigmoid:
            for (std::size_t i = 0; i < src.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-src[i]));
            break;
        case Act::Gelu:
            // Exact Gaussian-CDF form: x · Φ(x).
            for (std::size_t i = 0; i < src.size(); ++i) {
                out[i] = src[i] * 0.5 * (1.0 + std::erf(src[i] * kInvSqrt2));
            }
            break;
    }
    auto px = x.impl();
    return make_op(x.shape(), std::move(out), {px}, [px, kind](TensorImpl& self) {
        if (!px->tracked()) return;
        std::vector<double> g(self.grad.size());
        switch (kind) {
            case Act::Relu:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    g[i] = px->data[i] > 0.0 ? self.grad[i] : 0.0;
                }
                break;
            case Act::Tanh:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    g[i] = self.grad[i] * (1.0 - self.data[i] * self.data[i]);
                }
                break;
            case Act::Sigmoid:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    g[i] = self.grad[i] * self.data[i] * (1.0 - self.data[i]);
                }
                break;
            case Act::Gelu:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double x0 = px->data[i];
                    const double cdf = 0.5 * (1.0 + std::erf(x0 * kInvSqrt2));
                    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x0 * x0);
                    g[i] = self.grad[i] * (cdf + x0 * pdf);
                }
                break;
        }
        px->accum_grad(g);
    });
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    auto px = x.impl();
    return make_op({1}, {s}, {px}, [px](TensorImpl& self) {
        if (!px->tracked()) return;
        std::vector<double> g(px->data.size(), self.grad[0]);
        px->accum_grad(g);
    });
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axes(const Tensor& x, std::vector<int> axes) {
    const int r = x.ndim();
    Shape osh = x.shape();
    for (auto& a : axes) {
        a = normalize_axis(a, r, "sum_axes");
        osh[static_cast<std::size_t>(a)] = 1;
    }
    const auto& src = x.data();
    std::vector<double> out(static_cast<std::size_t>(shape_numel(osh)), 0.0);
    const auto st = broadcast_strides(osh, x.shape());
    std::vector<std::int64_t> coord(static_cast<std::size_t>(r), 0);
    std::int64_t io = 0;
    const std::int64_t n = x.numel();
    const Shape xsh = x.shape();
    for (std::int64_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(io)] += src[static_cast<std::size_t>(i)];
        for (int d = r - 1; d >= 0; --d) {
            coord[static_cast<std::size_t>(d)]++;
            io += st[static_cast<std::size_t>(d)];
            if (coord[static_cast<std::size_t>(d)] < xsh[static_cast<std::size_t>(d)]) break;
            io -= st[static_cast<std::size_t>(d)] * xsh[static_cast<std::size_t>(d)];
            coord[static_cast<std::size_t>(d)] = 0;
        }
    }
    auto px = x.impl();
    return make_op(osh, std::move(out), {px}, [px, osh, xsh](TensorImpl& self) {
        if (!px->tracked()) return;
        // Broadcast the reduced grad back over the summed axes.
        auto g = ew_binary(self.grad, osh, self.grad, osh, xsh, [](double a, double) { return a; });
        px->accum_grad(g);
    });
}

Tensor mean_axes(const Tensor& x, std::vector<int> axes) {
    std::int64_t count = 1;
    for (int a : axes) count *= x.dim(a);
    return scale(sum_axes(x, std::move(axes)), 1.0 / static_cast<double>(count));
}

Tensor sqrt_elem(const Tensor& x) {
    const auto& src = x.data();
    std::vector<double> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i] < 0.0) throw NumericError("sqrt_elem: negative input");
        out[i] = std::sqrt(src[i]);
    }
    auto px = x.impl();
    return make_op(x.shape(), std::move(out), {px}, [px](TensorImpl& self) {
        if (!px->tracked()) return;
        std::vector<double> g(self.grad.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            // Subgradient 0 at the origin keeps zero-distance terms finite.
            g[i] = self.data[i] > 0.0 ? self.grad[i] / (2.0 * self.data[i]) : 0.0;
        }
        px->accum_grad(g);
    });
}

Tensor concat_lastdim(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_lastdim: no inputs");
    const Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
    std::int64_t total = 0;
    for (const auto& p : parts) {
        const Shape plead(p.shape().begin(), p.shape().end() - 1);
        if (plead != lead) {
            throw DimensionError("concat_lastdim: leading shapes disagree: " +
                                 shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
        }
        total += p.dim(-1);
    }
    Shape osh = lead;
    osh.push_back(total);
    const std::int64_t rows = shape_numel(lead);
    std::vector<double> out(static_cast<std::size_t>(rows * total));
    std::vector<std::int64_t> offsets;
    std::int64_t off = 0;
    for (const auto& p : parts) {
        const std::int64_t w = p.dim(-1);
        offsets.push_back(off);
        const auto& src = p.data();
        for (std::int64_t r = 0; r < rows; ++r) {
            std::copy(src.begin() + r * w, src.begin() + (r + 1) * w,
                      out.begin() + r * total + off);
        }
        off += w;
    }
    std::vector<ImplPtr> parents;
    parents.reserve(parts.size());
    std::vector<std::int64_t> widths;
    for (const auto& p : parts) {
        parents.push_back(p.impl());
        widths.push_back(p.dim(-1));
    }
    return make_op(osh, std::move(out), parents,
                   [parents, widths, offsets, rows, total](TensorImpl& self) {
                       for (std::size_t k = 0; k < parents.size(); ++k) {
                           if (!parents[k]->tracked()) continue;
                           const std::int64_t w = widths[k];
                           std::vector<double> g(static_cast<std::size_t>(rows * w));
                           for (std::int64_t r = 0; r < rows; ++r) {
                               std::copy(self.grad.begin() + r * total + offsets[k],
                                         self.grad.begin() + r * total + offsets[k] + w,
                                         g.begin() + r * w);
                           }
                           parents[k]->accum_grad(g);
                       }
                   });
}

Tensor slice_axis(const Tensor& x, int axis, std::int64_t start, std::int64_t len) {
    const int a = normalize_axis(axis, x.ndim(), "slice_axis");
    const std::int64_t dim = x.dim(a);
    if (len <= 0 || start < 0 || start + len > dim) {
        throw DimensionError("slice_axis: range [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") invalid for axis size " +
                             std::to_string(dim));
    }
    Shape osh = x.shape();
    osh[static_cast<std::size_t>(a)] = len;
    // View the array as [outer, dim, inner].
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < a; ++i) outer *= x.dim(i);
    for (int i = a + 1; i < x.ndim(); ++i) inner *= x.dim(i);
    const auto& src = x.data();
    std::vector<double> out(static_cast<std::size_t>(outer * len * inner));
    for (std::int64_t o = 0; o < outer; ++o) {
        const double* sp = src.data() + (o * dim + start) * inner;
        std::copy(sp, sp + len * inner, out.begin() + o * len * inner);
    }
    auto px = x.impl();
    return make_op(osh, std::move(out), {px}, [px, outer, inner, dim, start, len](TensorImpl& self) {
        if (!px->tracked()) return;
        std::vector<double> g(px->data.size(), 0.0);
        for (std::int64_t o = 0; o < outer; ++o) {
            std::copy(self.grad.begin() + o * len * inner, self.grad.begin() + (o + 1) * len * inner,
                      g.begin() + (o * dim + start) * inner);
        }
        px->accum_grad(g);
    });
}

}  // namespace mixtg
