#pragma once

// Minimal tape-based reverse-mode differentiation over dense row-major
// matrices. Every value is a 2-D matrix; scalars are 1x1.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mgcot {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool decay = true;
  // Row kept at zero and excluded from updates (padding embedding).
  int frozen_row = -1;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Owns parameters in registration order; names are unique.
class ParameterStore {
 public:
  Parameter& add(std::string name, Index rows, Index cols);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  Parameter* find(const std::string& name);
  bool contains(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

namespace ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Matrix& grad() const;
  bool has_grad() const;
  bool requires_grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Differentiable leaf whose gradient stays on the tape (used by tests).
  Var leaf(Matrix value);
  // Leaf bound to a parameter: backward() accumulates into param.grad.
  Var param(Parameter& p);

  // Records an interior node. `backward` reads the node's grad and adds
  // into parents' grads via Tape::accumulate.
  Var record(Matrix value, bool requires_grad, std::function<void()> backward);

  const Matrix& value(int id) const { return nodes_[id]->value; }
  Matrix& grad(int id);
  bool has_grad(int id) const { return nodes_[id]->grad_ready; }
  bool requires_grad(int id) const { return nodes_[id]->requires_grad; }

  // Adds `delta` into the gradient of `v` (no-op for constants).
  void accumulate(const Var& v, const Matrix& delta);
  // Mutable access for in-place scatter-style accumulation; nullptr for constants.
  Matrix* grad_target(const Var& v);

  // Seeds d(root)/d(root) = 1 (root must be 1x1) and runs all closures in
  // reverse recording order.
  void backward(const Var& root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool grad_ready = false;
    bool requires_grad = false;
    std::function<void()> backward;
  };
  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace ad
}  // namespace mgcot
