#include "neurophys/autograd.hpp"

#include "neurophys/errors.hpp"

namespace neurophys {

const Tensor& Var::value() const {
    if (!tape_) throw UsageError("Var is not bound to a tape");
    return tape_->value_of(idx_);
}

Var Tape::input(Tensor value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
    Node n;
    n.value = p.value;
    n.bound = &p;
    n.needs_grad = p.trainable;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::emplace(Tensor value, const std::vector<Var>& parents, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.parents.reserve(parents.size());
    for (const Var& p : parents) {
        if (p.tape() != this) throw UsageError("operation mixes variables from different tapes");
        n.parents.push_back(p.index());
        n.needs_grad = n.needs_grad || nodes_[p.index()].needs_grad;
    }
    if (n.needs_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t idx) {
    Node& n = nodes_[idx];
    if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void Tape::backward(const Var& loss) {
    if (loss.tape() != this) throw UsageError("backward: loss belongs to a different tape");
    if (loss.value().size() != 1) {
        throw UsageError("backward: loss must be scalar, got shape " +
                         shape_str(loss.value().shape()));
    }
    grad_buffer(loss.index())[0] = 1.0;
    for (std::size_t i = loss.index() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.backward) n.backward(*this, i);
        if (n.bound && n.bound->trainable) {
            Tensor& pg = n.bound->grad;
            for (std::size_t k = 0; k < n.grad.size(); ++k) pg[k] += n.grad[k];
        }
    }
    clear();
}

}  // namespace neurophys
