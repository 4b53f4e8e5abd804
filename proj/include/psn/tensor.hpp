#pragma once

// Dense row-major tensor with a reverse-mode tape.
//
// A Tensor is a cheap handle onto a shared Node. Operations executed while a
// Tape is recording (see Tape::record) append an Entry holding their input and
// output nodes plus a backward rule; Tape::backward replays the entries in
// exact reverse order. Without an active tape nothing is recorded and no
// gradient state is created, which is how inference mode is realized.
//
// The scalar type is a template parameter: Tensor<float> is the production
// path, Tensor<double> is the high-precision shadow used by gradient checks.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "psn/error.hpp"
#include "psn/memory.hpp"

namespace psn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) noexcept
{
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s)
{
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i)
            out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <class T>
class Tensor;
template <class T>
class Tape;

namespace detail {

inline std::uint64_t next_node_id() noexcept
{
    static std::atomic<std::uint64_t> id{1};
    return id.fetch_add(1);
}

template <class T>
struct Node {
    Shape shape;
    std::shared_ptr<memory::Buffer<T>> storage;
    std::size_t offset = 0;

    // Views alias both the data and the gradient of their base node.
    std::shared_ptr<Node> base;
    std::size_t base_offset = 0;

    memory::Buffer<T> grad;
    bool requires_grad = false;
    bool recorded = false;  // produced by an operation on a tape
    int tape_uses = 0;      // live tape entries referencing this node
    std::uint64_t id = next_node_id();

    std::size_t numel() const noexcept { return shape_numel(shape); }
    T* data() noexcept { return storage->data() + offset; }
    const T* data() const noexcept { return storage->data() + offset; }

    bool has_grad() const noexcept { return base ? base->has_grad() : !grad.empty(); }

    /// Gradient storage, zero-allocated on first request.
    std::span<T> grad_span()
    {
        if (base)
            return base->grad_span().subspan(base_offset, numel());
        if (grad.empty())
            grad.assign(numel(), T(0));
        return {grad.data(), grad.size()};
    }

    std::span<const T> grad_view() const noexcept
    {
        if (base) {
            auto g = base->grad_view();
            return g.empty() ? g : g.subspan(base_offset, numel());
        }
        return {grad.data(), grad.size()};
    }

    void drop_grad() noexcept
    {
        if (!base)
            memory::Buffer<T>{}.swap(grad);
    }
};

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

template <class T>
NodePtr<T> make_node(Shape shape)
{
    auto n = std::make_shared<Node<T>>();
    n->storage = std::make_shared<memory::Buffer<T>>(shape_numel(shape));
    n->shape = std::move(shape);
    return n;
}

} // namespace detail

template <class T>
class Tensor {
public:
    using value_type = T;
    using NodePtr = detail::NodePtr<T>;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0)) : node_(detail::make_node<T>(std::move(shape)))
    {
        std::fill(node_->data(), node_->data() + node_->numel(), fill);
    }

    Tensor(Shape shape, std::span<const T> values) : node_(detail::make_node<T>(std::move(shape)))
    {
        if (values.size() != node_->numel())
            throw DimensionError("tensor of shape " + shape_str(node_->shape) + " needs "
                                 + std::to_string(node_->numel()) + " values, got "
                                 + std::to_string(values.size()));
        std::copy(values.begin(), values.end(), node_->data());
    }

    Tensor(Shape shape, std::initializer_list<T> values)
        : Tensor(std::move(shape), std::span<const T>(values.begin(), values.size()))
    {
    }

    Tensor(Shape shape, const std::vector<T>& values)
        : Tensor(std::move(shape), std::span<const T>(values))
    {
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
    static Tensor scalar(T v) { return Tensor(Shape{}, v); }

    /// Output buffer for kernels; contents are uninitialized.
    static Tensor uninitialized(Shape shape) { return Tensor(detail::make_node<T>(std::move(shape))); }

    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const noexcept { return node_->shape; }
    std::size_t rank() const noexcept { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t numel() const noexcept { return node_->numel(); }
    std::uint64_t node_id() const noexcept { return node_->id; }

    std::span<const T> data() const noexcept { return {node_->data(), node_->numel()}; }

    /// Writable access for leaves (parameters, fresh buffers). Refused while a
    /// tape still references the tensor or if it is an operation output.
    std::span<T> mutable_data()
    {
        if (node_->recorded || node_->tape_uses > 0 || (node_->base && node_->base->tape_uses > 0))
            throw ContractError("tensor participating in a tape cannot be mutated");
        return {node_->data(), node_->numel()};
    }

    T item() const
    {
        if (numel() != 1)
            throw ContractError("item() on tensor of shape " + shape_str(shape()));
        return node_->data()[0];
    }

    T operator[](std::size_t flat) const { return node_->data()[flat]; }

    T at(std::initializer_list<std::size_t> index) const
    {
        if (index.size() != rank())
            throw DimensionError("index rank mismatch for shape " + shape_str(shape()));
        std::size_t flat = 0;
        std::size_t i = 0;
        for (auto v : index) {
            if (v >= node_->shape[i])
                throw DimensionError("index out of range for shape " + shape_str(shape()));
            flat = flat * node_->shape[i] + v;
            ++i;
        }
        return node_->data()[flat];
    }

    std::vector<T> to_vector() const { return {data().begin(), data().end()}; }

    bool requires_grad() const noexcept { return node_->requires_grad; }

    Tensor& set_requires_grad(bool on = true)
    {
        if (node_->recorded)
            throw ContractError("requires_grad can only be set on leaf tensors");
        node_->requires_grad = on;
        if (!on)
            node_->drop_grad();
        return *this;
    }

    bool has_grad() const noexcept { return node_->has_grad(); }

    /// Accumulated gradient; empty span when none was produced yet.
    std::span<const T> grad() const noexcept { return node_->grad_view(); }

    Tensor grad_tensor() const
    {
        auto g = grad();
        if (g.empty())
            return zeros(shape());
        return Tensor(shape(), g);
    }

    void zero_grad() noexcept { node_->drop_grad(); }

    /// Shares storage, never carries gradient.
    Tensor detach() const
    {
        auto n = std::make_shared<detail::Node<T>>();
        n->shape = node_->shape;
        n->storage = node_->storage;
        n->offset = node_->offset;
        return Tensor(std::move(n));
    }

    Tensor clone() const { return Tensor(shape(), data()); }

    template <class U>
    Tensor<U> cast() const
    {
        auto out = Tensor<U>::uninitialized(shape());
        auto dst = out.mutable_data();
        auto src = data();
        for (std::size_t i = 0; i < src.size(); ++i)
            dst[i] = static_cast<U>(src[i]);
        return out;
    }

    const NodePtr& node() const noexcept { return node_; }

private:
    NodePtr node_;
};

/// Ordered record of differentiable operations.
template <class T>
class Tape {
public:
    using NodePtr = detail::NodePtr<T>;
    using BackwardFn = std::function<void(const std::vector<NodePtr>& inputs, detail::Node<T>& output)>;

    struct Entry {
        std::vector<NodePtr> inputs;
        NodePtr output;
        BackwardFn backward;  // may be empty for aliasing views
    };

    /// Makes a tape the recording target for the current thread while alive.
    class Recording {
    public:
        explicit Recording(Tape* t) : prev_(active_) { active_ = t; }
        ~Recording() { active_ = prev_; }
        Recording(const Recording&) = delete;
        Recording& operator=(const Recording&) = delete;

    private:
        Tape* prev_;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    ~Tape() { clear(); }

    [[nodiscard]] Recording record() { return Recording(this); }

    static Tape* active() noexcept { return active_; }

    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    void push(Entry e)
    {
        for (const auto& in : e.inputs) {
            if (in->recorded && !outputs_.contains(in->id))
                throw ContractError("tape entry input was produced on a different tape");
            ++in->tape_uses;
        }
        ++e.output->tape_uses;
        outputs_.insert(e.output->id);
        entries_.push_back(std::move(e));
    }

    void clear() noexcept
    {
        for (auto& e : entries_) {
            for (auto& in : e.inputs)
                --in->tape_uses;
            --e.output->tape_uses;
        }
        entries_.clear();
        outputs_.clear();
    }

    /// Accumulates dloss/dleaf into every requires_grad leaf. Intermediate
    /// gradients are rebuilt from scratch on every call.
    void backward(const Tensor<T>& loss)
    {
        if (!loss.defined() || loss.numel() != 1)
            throw ContractError("backward needs a scalar loss, got shape "
                                + (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
        if (!outputs_.contains(loss.node_id()))
            throw ContractError("loss was not produced on this tape");

        for (auto& e : entries_)
            e.output->drop_grad();
        loss.node()->grad_span()[0] += T(1);

        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            if (it->backward && it->output->has_grad())
                it->backward(it->inputs, *it->output);
        }
    }

private:
    static inline thread_local Tape* active_ = nullptr;
    std::vector<Entry> entries_;
    std::unordered_set<std::uint64_t> outputs_;
};

template <class T>
void backward(Tape<T>& tape, const Tensor<T>& loss)
{
    tape.backward(loss);
}

namespace detail {

template <class T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs)
{
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor<T>* t) { return t->requires_grad(); });
}

/// Attach `out` to the active tape when any input needs a gradient.
template <class T>
void record(Tensor<T>& out, std::initializer_list<const Tensor<T>*> inputs,
            typename Tape<T>::BackwardFn fn)
{
    auto* tape = Tape<T>::active();
    if (!tape || !any_requires_grad(inputs))
        return;
    typename Tape<T>::Entry e;
    e.inputs.reserve(inputs.size());
    for (const auto* in : inputs)
        e.inputs.push_back(in->node());
    out.node()->requires_grad = true;
    out.node()->recorded = true;
    e.output = out.node();
    e.backward = std::move(fn);
    tape->push(std::move(e));
}

template <class T>
void record(Tensor<T>& out, const std::vector<Tensor<T>>& inputs, typename Tape<T>::BackwardFn fn)
{
    auto* tape = Tape<T>::active();
    if (!tape)
        return;
    if (std::none_of(inputs.begin(), inputs.end(), [](const Tensor<T>& t) { return t.requires_grad(); }))
        return;
    typename Tape<T>::Entry e;
    for (const auto& in : inputs)
        e.inputs.push_back(in.node());
    out.node()->requires_grad = true;
    out.node()->recorded = true;
    e.output = out.node();
    e.backward = std::move(fn);
    tape->push(std::move(e));
}

} // namespace detail

} // namespace psn
