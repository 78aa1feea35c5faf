#include "mgcot/tensor.hpp"

#include "mgcot/errors.hpp"

namespace mgcot {

Parameter& ParameterStore::add(std::string name, Index rows, Index cols) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = Matrix::Zero(rows, cols);
  p->grad = Matrix::Zero(rows, cols);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return true;
  return false;
}

Parameter& ParameterStore::get(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw ConfigError("unknown parameter: " + name);
}

const Parameter& ParameterStore::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return *p;
  throw ConfigError("unknown parameter: " + name);
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

namespace ad {

const Matrix& Var::value() const { return tape_->value(id_); }
Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::has_grad() const { return tape_->has_grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::leaf(Matrix value) { return record(std::move(value), true, nullptr); }

Var Tape::param(Parameter& p) {
  const int id = static_cast<int>(nodes_.size());
  Parameter* target = &p;
  return record(p.value, true, [this, id, target] {
    if (!nodes_[id]->grad_ready) return;
    target->grad += nodes_[id]->grad;
    if (target->frozen_row >= 0) target->grad.row(target->frozen_row).setZero();
  });
}

Var Tape::record(Matrix value, bool requires_grad, std::function<void()> backward) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad(int id) {
  Node& n = *nodes_[id];
  if (!n.grad_ready) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad_ready = true;
  }
  return n.grad;
}

void Tape::accumulate(const Var& v, const Matrix& delta) {
  if (!nodes_[v.id()]->requires_grad) return;
  grad(v.id()) += delta;
}

Matrix* Tape::grad_target(const Var& v) {
  if (!nodes_[v.id()]->requires_grad) return nullptr;
  return &grad(v.id());
}

void Tape::backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward root must be 1x1");
  grad(root.id())(0, 0) += 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = *nodes_[id];
    if (n.requires_grad && n.grad_ready && n.backward) n.backward();
  }
}

}  // namespace ad
}  // namespace mgcot
