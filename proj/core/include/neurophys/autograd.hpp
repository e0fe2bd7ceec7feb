#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "neurophys/tensor.hpp"

namespace neurophys {

// Trainable (or frozen) tensor with a persistent gradient buffer.
class Parameter {
   public:
    Parameter() = default;
    explicit Parameter(Tensor value, bool trainable = true)
        : value(std::move(value)), grad(this->value.shape()), trainable(trainable) {}

    void zero_grad() { grad.fill(0.0); }

    Tensor value;
    Tensor grad;
    bool trainable = true;
};

class Tape;

// Handle to a value recorded on a tape.
class Var {
   public:
    Var() = default;
    Var(Tape* tape, std::size_t idx) : tape_(tape), idx_(idx) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    Tape* tape() const { return tape_; }
    std::size_t index() const { return idx_; }
    bool valid() const { return tape_ != nullptr; }

   private:
    Tape* tape_ = nullptr;
    std::size_t idx_ = 0;
};

// Reverse-mode tape. Operations append nodes in execution order, which is by
// construction a topological order; backward() sweeps the record once in
// reverse. Single-threaded per instance.
class Tape {
   public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf that does not collect gradients.
    Var input(Tensor value);
    // Leaf bound to a Parameter; backward() accumulates into p.grad when
    // p.trainable is set.
    Var param(Parameter& p);

    // Record an operation node. Ops call this.
    Var emplace(Tensor value, const std::vector<Var>& parents, BackwardFn fn);

    // Seeds d(loss)/d(loss) = 1, sweeps the record in reverse exactly once,
    // accumulates into bound Parameter gradients, then clears the tape.
    // Throws UsageError unless loss is scalar.
    void backward(const Var& loss);

    const Tensor& value_of(std::size_t idx) const { return nodes_[idx].value; }
    bool needs_grad(std::size_t idx) const { return nodes_[idx].needs_grad; }
    // Gradient buffer for a node, allocated (zero-filled) on first use.
    Tensor& grad_buffer(std::size_t idx);
    bool has_grad(std::size_t idx) const { return nodes_[idx].grad.size() != 0; }
    const std::vector<std::size_t>& parents_of(std::size_t idx) const {
        return nodes_[idx].parents;
    }

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

   private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until needed
        std::vector<std::size_t> parents;
        BackwardFn backward;
        Parameter* bound = nullptr;
        bool needs_grad = false;
    };
    // Deque keeps references from value_of()/grad_buffer() stable while new
    // nodes are appended mid-expression.
    std::deque<Node> nodes_;
};

}  // namespace neurophys
