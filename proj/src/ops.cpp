#include "mgcot/ops.hpp"

#include "mgcot/errors.hpp"

#include <cmath>
#include <string>

namespace mgcot::ad {

namespace {

Tape& tape_of(const Var& a) { return *a.tape(); }

template <class F>
Var emit(Tape& t, Matrix value, bool requires_grad, F&& body) {
  if (!requires_grad) return t.record(std::move(value), false, nullptr);
  const int id = static_cast<int>(t.size());
  Tape* tp = &t;
  return t.record(std::move(value), true,
                  [tp, id, body = std::forward<F>(body)]() { body(tp->grad(id)); });
}

void require(bool cond, const char* op, const std::string& what) {
  if (!cond) throw ShapeError(std::string(op) + ": " + what);
}

std::string dims(const Var& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

void check_same(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), op,
          "shape mismatch " + dims(a) + " vs " + dims(b));
}

void check_offsets(const Offsets& off, Index rows, const char* op) {
  require(!off.empty() && off.front() == 0 && off.back() == rows, op, "offsets do not cover rows");
  for (std::size_t s = 0; s + 1 < off.size(); ++s)
    require(off[s] <= off[s + 1], op, "offsets not monotone");
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::atomic<std::atomic<long long>*> g_support_counter{nullptr};

void count_support(const double* p, Index n) {
  std::atomic<long long>* c = g_support_counter.load(std::memory_order_relaxed);
  if (c == nullptr) return;
  long long nz = 0;
  for (Index i = 0; i < n; ++i) nz += p[i] > 0.0 ? 1 : 0;
  c->fetch_add(nz, std::memory_order_relaxed);
}

}  // namespace

void set_support_counter(std::atomic<long long>* counter) { g_support_counter.store(counter); }

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul", dims(a) + " * " + dims(b));
  Tape& t = tape_of(a);
  return emit(t, a.value() * b.value(), a.requires_grad() || b.requires_grad(),
              [&t, a, b](const Matrix& g) {
                if (a.requires_grad()) t.grad(a.id()).noalias() += g * b.value().transpose();
                if (b.requires_grad()) t.grad(b.id()).noalias() += a.value().transpose() * g;
              });
}

Var matmul_nt(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), "matmul_nt", dims(a) + " * " + dims(b) + "^T");
  Tape& t = tape_of(a);
  return emit(t, a.value() * b.value().transpose(), a.requires_grad() || b.requires_grad(),
              [&t, a, b](const Matrix& g) {
                if (a.requires_grad()) t.grad(a.id()).noalias() += g * b.value();
                if (b.requires_grad()) t.grad(b.id()).noalias() += g.transpose() * a.value();
              });
}

Var add(const Var& a, const Var& b) {
  check_same(a, b, "add");
  Tape& t = tape_of(a);
  return emit(t, a.value() + b.value(), a.requires_grad() || b.requires_grad(),
              [&t, a, b](const Matrix& g) {
                t.accumulate(a, g);
                t.accumulate(b, g);
              });
}

Var sub(const Var& a, const Var& b) {
  check_same(a, b, "sub");
  Tape& t = tape_of(a);
  return emit(t, a.value() - b.value(), a.requires_grad() || b.requires_grad(),
              [&t, a, b](const Matrix& g) {
                t.accumulate(a, g);
                if (b.requires_grad()) t.grad(b.id()) -= g;
              });
}

Var mul(const Var& a, const Var& b) {
  check_same(a, b, "mul");
  Tape& t = tape_of(a);
  return emit(t, a.value().cwiseProduct(b.value()), a.requires_grad() || b.requires_grad(),
              [&t, a, b](const Matrix& g) {
                if (a.requires_grad()) t.grad(a.id()) += g.cwiseProduct(b.value());
                if (b.requires_grad()) t.grad(b.id()) += g.cwiseProduct(a.value());
              });
}

Var scale(const Var& a, double s) {
  Tape& t = tape_of(a);
  return emit(t, a.value() * s, a.requires_grad(),
              [&t, a, s](const Matrix& g) { t.grad(a.id()) += g * s; });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row", dims(a) + " + " + dims(row));
  Tape& t = tape_of(a);
  Matrix out = a.value().rowwise() + row.value().row(0);
  return emit(t, std::move(out), a.requires_grad() || row.requires_grad(),
              [&t, a, row](const Matrix& g) {
                t.accumulate(a, g);
                if (row.requires_grad()) t.grad(row.id()) += g.colwise().sum();
              });
}

Var linear(const Var& a, const Var& w, const Var& b) { return add_row(matmul(a, w), b); }

Var relu(const Var& a) {
  Tape& t = tape_of(a);
  return emit(t, a.value().cwiseMax(0.0), a.requires_grad(), [&t, a](const Matrix& g) {
    t.grad(a.id()) += (a.value().array() > 0.0).select(g, 0.0);
  });
}

Var sigmoid(const Var& a) {
  Tape& t = tape_of(a);
  Matrix y = a.value().unaryExpr([](double x) { return sigmoid_scalar(x); });
  const int out_id = static_cast<int>(t.size());
  return emit(t, std::move(y), a.requires_grad(), [&t, a, out_id](const Matrix& g) {
    const Matrix& y = t.value(out_id);
    t.grad(a.id()) += g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
  });
}

Var tanh(const Var& a) {
  Tape& t = tape_of(a);
  Matrix y = a.value().array().tanh().matrix();
  const int out_id = static_cast<int>(t.size());
  return emit(t, std::move(y), a.requires_grad(), [&t, a, out_id](const Matrix& g) {
    const Matrix& y = t.value(out_id);
    t.grad(a.id()) += g.cwiseProduct((1.0 - y.array().square()).matrix());
  });
}

Var log_sigmoid(const Var& a) {
  Tape& t = tape_of(a);
  Matrix y = a.value().unaryExpr(
      [](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); });
  return emit(t, std::move(y), a.requires_grad(), [&t, a](const Matrix& g) {
    t.grad(a.id()) +=
        g.cwiseProduct(a.value().unaryExpr([](double x) { return sigmoid_scalar(-x); }));
  });
}

Var concat_cols(const Var& a, const Var& b) {
  require(a.rows() == b.rows(), "concat_cols", dims(a) + " | " + dims(b));
  Tape& t = tape_of(a);
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Index ca = a.cols(), cb = b.cols();
  return emit(t, std::move(out), a.requires_grad() || b.requires_grad(),
              [&t, a, b, ca, cb](const Matrix& g) {
                if (a.requires_grad()) t.grad(a.id()) += g.leftCols(ca);
                if (b.requires_grad()) t.grad(b.id()) += g.rightCols(cb);
              });
}

Var concat_rows(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), "concat_rows", dims(a) + " / " + dims(b));
  Tape& t = tape_of(a);
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a.value(), b.value();
  const Index ra = a.rows(), rb = b.rows();
  return emit(t, std::move(out), a.requires_grad() || b.requires_grad(),
              [&t, a, b, ra, rb](const Matrix& g) {
                if (a.requires_grad()) t.grad(a.id()) += g.topRows(ra);
                if (b.requires_grad()) t.grad(b.id()) += g.bottomRows(rb);
              });
}

Var slice_cols(const Var& a, Index begin, Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= a.cols(), "slice_cols", "range outside " + dims(a));
  Tape& t = tape_of(a);
  return emit(t, a.value().middleCols(begin, count), a.requires_grad(),
              [&t, a, begin, count](const Matrix& g) {
                t.grad(a.id()).middleCols(begin, count) += g;
              });
}

Var slice_rows(const Var& a, Index begin, Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= a.rows(), "slice_rows", "range outside " + dims(a));
  Tape& t = tape_of(a);
  return emit(t, a.value().middleRows(begin, count), a.requires_grad(),
              [&t, a, begin, count](const Matrix& g) {
                t.grad(a.id()).middleRows(begin, count) += g;
              });
}

Var gather_rows(const Var& a, std::vector<int> idx) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  Matrix out = Matrix::Zero(static_cast<Index>(idx.size()), av.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] < av.rows(), "gather_rows", "index outside " + dims(a));
    if (idx[i] >= 0) out.row(static_cast<Index>(i)) = av.row(idx[i]);
  }
  return emit(t, std::move(out), a.requires_grad(),
              [&t, a, idx = std::move(idx)](const Matrix& g) {
                Matrix& ga = t.grad(a.id());
                for (std::size_t i = 0; i < idx.size(); ++i)
                  if (idx[i] >= 0) ga.row(idx[i]) += g.row(static_cast<Index>(i));
              });
}

Var spmm(std::shared_ptr<const SparseMatrix> s, const Var& a) {
  require(s->cols() == a.rows(), "spmm", "sparse cols differ from " + dims(a));
  Tape& t = tape_of(a);
  Matrix out = (*s) * a.value();
  return emit(t, std::move(out), a.requires_grad(), [&t, a, s](const Matrix& g) {
    t.grad(a.id()).noalias() += s->transpose() * g;
  });
}

Var row_dot(const Var& a, const Var& b) {
  check_same(a, b, "row_dot");
  Tape& t = tape_of(a);
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return emit(t, std::move(out), a.requires_grad() || b.requires_grad(),
              [&t, a, b](const Matrix& g) {
                if (a.requires_grad())
                  t.grad(a.id()).array() += b.value().array().colwise() * g.col(0).array();
                if (b.requires_grad())
                  t.grad(b.id()).array() += a.value().array().colwise() * g.col(0).array();
              });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return emit(t, std::move(out), a.requires_grad(), [&t, a](const Matrix& g) {
    t.grad(a.id()).array() += g(0, 0);
  });
}

Var mean(const Var& a) {
  require(a.value().size() > 0, "mean", "empty input");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mul_const(const Var& a, const Matrix& m) {
  require(a.rows() == m.rows() && a.cols() == m.cols(), "mul_const", "mask shape differs from " + dims(a));
  Tape& t = tape_of(a);
  return emit(t, a.value().cwiseProduct(m), a.requires_grad(),
              [&t, a, m](const Matrix& g) { t.grad(a.id()) += g.cwiseProduct(m); });
}

Var add_const(const Var& a, const Matrix& m) {
  require(a.rows() == m.rows() && a.cols() == m.cols(), "add_const", "offset shape differs from " + dims(a));
  Tape& t = tape_of(a);
  return emit(t, a.value() + m, a.requires_grad(),
              [&t, a](const Matrix& g) { t.grad(a.id()) += g; });
}

Var dropout(const Var& a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv = 1.0 / (1.0 - rate);
  Matrix mask(a.rows(), a.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? inv : 0.0;
  return mul_const(a, mask);
}

Var layer_norm(const Var& a, const Var& gamma, const Var& beta, double eps) {
  require(gamma.rows() == 1 && gamma.cols() == a.cols() && beta.rows() == 1 &&
              beta.cols() == a.cols(),
          "layer_norm", "gain/bias must be 1x" + std::to_string(a.cols()));
  Tape& t = tape_of(a);
  const Index rows = a.rows(), cols = a.cols();
  auto xhat = std::make_shared<Matrix>(rows, cols);
  auto inv_std = std::make_shared<Eigen::VectorXd>(rows);
  const Matrix& x = a.value();
  for (Index r = 0; r < rows; ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = (x.row(r).array() - mu) * (*inv_std)(r);
  }
  Matrix out = (xhat->array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  const bool rg = a.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return emit(t, std::move(out), rg, [&t, a, gamma, beta, xhat, inv_std](const Matrix& g) {
    if (gamma.requires_grad()) t.grad(gamma.id()) += g.cwiseProduct(*xhat).colwise().sum();
    if (beta.requires_grad()) t.grad(beta.id()) += g.colwise().sum();
    if (!a.requires_grad()) return;
    Matrix& ga = t.grad(a.id());
    const auto gam = gamma.value().row(0).array();
    for (Index r = 0; r < g.rows(); ++r) {
      const Eigen::ArrayXd dxhat = (g.row(r).array() * gam).transpose();
      const Eigen::ArrayXd xh = xhat->row(r).array().transpose();
      const double m1 = dxhat.mean();
      const double m2 = (dxhat * xh).mean();
      ga.row(r) += ((dxhat - m1 - xh * m2) * (*inv_std)(r)).matrix().transpose();
    }
  });
}

Var alpha_from_logits(const Var& logits) {
  Tape& t = tape_of(logits);
  Matrix out = logits.value().unaryExpr([](double x) { return alpha_from_logit(x); });
  return emit(t, std::move(out), logits.requires_grad(), [&t, logits](const Matrix& g) {
    t.grad(logits.id()) +=
        g.cwiseProduct(logits.value().unaryExpr([](double x) { return alpha_logit_slope(x); }));
  });
}

Var entmax_segments(const Var& scores, const Var& alpha, const Offsets& offsets,
                    const EntmaxOptions& opts) {
  require(scores.cols() == 1, "entmax_segments", "scores must be a column");
  require(alpha.cols() == 1 && alpha.rows() + 1 == static_cast<Index>(offsets.size()),
          "entmax_segments", "one alpha per segment required");
  check_offsets(offsets, scores.rows(), "entmax_segments");
  Tape& t = tape_of(scores);
  Matrix out(scores.rows(), 1);
  const double* z = scores.value().data();
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const int b = offsets[s], n = offsets[s + 1] - offsets[s];
    if (n == 0) throw DataError("entmax_segments: empty attention row");
    entmax_forward(std::span<const double>(z + b, n), alpha.value()(static_cast<Index>(s), 0),
                   std::span<double>(out.data() + b, n), opts);
  }
  count_support(out.data(), out.size());
  const int out_id = static_cast<int>(t.size());
  return emit(t, std::move(out), scores.requires_grad() || alpha.requires_grad(),
              [&t, scores, alpha, offsets, out_id](const Matrix& g) {
                const Matrix& p = t.value(out_id);
                Matrix dz(p.rows(), 1);
                Matrix da(alpha.rows(), 1);
                for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                  const int b = offsets[s], n = offsets[s + 1] - offsets[s];
                  double dalpha = 0.0;
                  entmax_backward(std::span<const double>(p.data() + b, n),
                                  alpha.value()(static_cast<Index>(s), 0),
                                  std::span<const double>(g.data() + b, n),
                                  std::span<double>(dz.data() + b, n), &dalpha);
                  da(static_cast<Index>(s), 0) = dalpha;
                }
                t.accumulate(scores, dz);
                t.accumulate(alpha, da);
              });
}

Var softmax_segments(const Var& scores, const Offsets& offsets) {
  require(scores.cols() == 1, "softmax_segments", "scores must be a column");
  check_offsets(offsets, scores.rows(), "softmax_segments");
  Tape& t = tape_of(scores);
  Matrix out(scores.rows(), 1);
  const Matrix& z = scores.value();
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const int b = offsets[s], n = offsets[s + 1] - offsets[s];
    if (n == 0) continue;
    const double m = z.col(0).segment(b, n).maxCoeff();
    double total = 0.0;
    for (int i = b; i < b + n; ++i) total += (out(i, 0) = std::exp(z(i, 0) - m));
    for (int i = b; i < b + n; ++i) out(i, 0) /= total;
  }
  const int out_id = static_cast<int>(t.size());
  return emit(t, std::move(out), scores.requires_grad(),
              [&t, scores, offsets, out_id](const Matrix& g) {
                const Matrix& p = t.value(out_id);
                Matrix& gz = t.grad(scores.id());
                for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                  const int b = offsets[s], e = offsets[s + 1];
                  double dot = 0.0;
                  for (int i = b; i < e; ++i) dot += p(i, 0) * g(i, 0);
                  for (int i = b; i < e; ++i) gz(i, 0) += p(i, 0) * (g(i, 0) - dot);
                }
              });
}

Var segment_weighted_sum(const Var& weights, const Var& rows, const Offsets& offsets) {
  require(weights.cols() == 1 && weights.rows() == rows.rows(), "segment_weighted_sum",
          "weights must be a column matching rows");
  check_offsets(offsets, rows.rows(), "segment_weighted_sum");
  Tape& t = tape_of(weights);
  const Index segs = static_cast<Index>(offsets.size()) - 1;
  Matrix out = Matrix::Zero(segs, rows.cols());
  for (Index s = 0; s < segs; ++s)
    for (int r = offsets[s]; r < offsets[s + 1]; ++r)
      out.row(s) += weights.value()(r, 0) * rows.value().row(r);
  return emit(t, std::move(out), weights.requires_grad() || rows.requires_grad(),
              [&t, weights, rows, offsets, segs](const Matrix& g) {
                Matrix* gw = t.grad_target(weights);
                Matrix* gr = t.grad_target(rows);
                for (Index s = 0; s < segs; ++s)
                  for (int r = offsets[s]; r < offsets[s + 1]; ++r) {
                    if (gw) (*gw)(r, 0) += g.row(s).dot(rows.value().row(r));
                    if (gr) gr->row(r) += weights.value()(r, 0) * g.row(s);
                  }
              });
}

Var cross_entropy(const Var& logits, const std::vector<int>& label_cols) {
  require(static_cast<Index>(label_cols.size()) == logits.rows(), "cross_entropy",
          "one label per row required");
  Tape& t = tape_of(logits);
  const Matrix& x = logits.value();
  const Index rows = x.rows();
  auto probs = std::make_shared<Matrix>(x.rows(), x.cols());
  double total = 0.0;
  for (Index r = 0; r < rows; ++r) {
    const int y = label_cols[static_cast<std::size_t>(r)];
    require(y >= 0 && y < x.cols(), "cross_entropy", "label outside logit columns");
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    probs->row(r) = (x.row(r).array() - lse).exp().matrix();
    total += lse - x(r, y);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(rows);
  return emit(t, std::move(out), logits.requires_grad(),
              [&t, logits, label_cols, probs, rows](const Matrix& g) {
                const double s = g(0, 0) / static_cast<double>(rows);
                Matrix& gl = t.grad(logits.id());
                gl += *probs * s;
                for (Index r = 0; r < rows; ++r) gl(r, label_cols[static_cast<std::size_t>(r)]) -= s;
              });
}

Var sparse_self_attention(const Var& q, const Var& k, const Var& v, const Var& alpha,
                          const Offsets& offsets, int heads,
                          std::vector<std::vector<double>>* weights_out,
                          const EntmaxOptions& opts) {
  check_same(q, k, "sparse_self_attention");
  check_same(q, v, "sparse_self_attention");
  require(heads >= 1 && q.cols() % heads == 0, "sparse_self_attention", "width not divisible by heads");
  check_offsets(offsets, q.rows(), "sparse_self_attention");
  const int batch = static_cast<int>(offsets.size()) - 1;
  require(alpha.rows() == batch && alpha.cols() == heads, "sparse_self_attention",
          "alpha must be batch x heads");
  const Index dk = q.cols() / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dk));

  Tape& t = tape_of(q);
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  Matrix out = Matrix::Zero(q.rows(), q.cols());
  auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(batch) * heads);

#pragma omp parallel for schedule(dynamic, 8)
  for (int b = 0; b < batch; ++b) {
    const int off = offsets[b], n = offsets[b + 1] - offsets[b];
    if (n == 0) continue;
    for (int h = 0; h < heads; ++h) {
      Matrix S = Q.block(off, h * dk, n, dk) * K.block(off, h * dk, n, dk).transpose() * scale_factor;
      Matrix& P = (*probs)[static_cast<std::size_t>(b) * heads + h];
      P.resize(n, n);
      const double a = alpha.value()(b, h);
      for (int i = 0; i < n; ++i)
        entmax_forward(std::span<const double>(S.row(i).data(), n), a,
                       std::span<double>(P.row(i).data(), n), opts);
      count_support(P.data(), P.size());
      out.block(off, h * dk, n, dk).noalias() = P * V.block(off, h * dk, n, dk);
    }
  }

  if (weights_out != nullptr) {
    weights_out->clear();
    for (const Matrix& P : *probs)
      weights_out->emplace_back(P.data(), P.data() + P.size());
  }

  const bool rg = q.requires_grad() || k.requires_grad() || v.requires_grad() || alpha.requires_grad();
  return emit(t, std::move(out), rg,
              [&t, q, k, v, alpha, offsets, heads, dk, scale_factor, probs, batch](const Matrix& g) {
                Matrix* gq = t.grad_target(q);
                Matrix* gk = t.grad_target(k);
                Matrix* gv = t.grad_target(v);
                Matrix* ga = t.grad_target(alpha);
                const Matrix& Q = q.value();
                const Matrix& K = k.value();
                const Matrix& V = v.value();
#pragma omp parallel for schedule(dynamic, 8)
                for (int b = 0; b < batch; ++b) {
                  const int off = offsets[b], n = offsets[b + 1] - offsets[b];
                  if (n == 0) continue;
                  for (int h = 0; h < heads; ++h) {
                    const Matrix& P = (*probs)[static_cast<std::size_t>(b) * heads + h];
                    const auto G = g.block(off, h * dk, n, dk);
                    if (gv) gv->block(off, h * dk, n, dk).noalias() += P.transpose() * G;
                    Matrix dP = G * V.block(off, h * dk, n, dk).transpose();
                    Matrix dS(n, n);
                    const double a = alpha.value()(b, h);
                    double dalpha_total = 0.0;
                    for (int i = 0; i < n; ++i) {
                      double dalpha = 0.0;
                      entmax_backward(std::span<const double>(P.row(i).data(), n), a,
                                      std::span<const double>(dP.row(i).data(), n),
                                      std::span<double>(dS.row(i).data(), n), &dalpha);
                      dalpha_total += dalpha;
                    }
                    if (ga) (*ga)(b, h) += dalpha_total;
                    dS *= scale_factor;
                    if (gq) gq->block(off, h * dk, n, dk).noalias() += dS * K.block(off, h * dk, n, dk);
                    if (gk) gk->block(off, h * dk, n, dk).noalias() += dS.transpose() * Q.block(off, h * dk, n, dk);
                  }
                }
              });
}

Matrix sparse_self_attention_serial(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& alpha,
                                    const Offsets& offsets, int heads, const EntmaxOptions& opts) {
  require(heads >= 1 && q.cols() % heads == 0, "sparse_self_attention_serial", "width not divisible by heads");
  check_offsets(offsets, q.rows(), "sparse_self_attention_serial");
  const Index dk = q.cols() / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dk));
  Matrix out = Matrix::Zero(q.rows(), q.cols());
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    const int off = offsets[b], n = offsets[b + 1] - offsets[b];
    for (int h = 0; h < heads && n > 0; ++h) {
      const Matrix S = q.block(off, h * dk, n, dk) * k.block(off, h * dk, n, dk).transpose() * scale_factor;
      Matrix P(n, n);
      for (int i = 0; i < n; ++i)
        entmax_forward(std::span<const double>(S.row(i).data(), n), alpha(static_cast<Index>(b), h),
                       std::span<double>(P.row(i).data(), n), opts);
      out.block(off, h * dk, n, dk).noalias() = P * v.block(off, h * dk, n, dk);
    }
  }
  return out;
}

}  // namespace mgcot::ad
