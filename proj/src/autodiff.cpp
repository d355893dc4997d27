#include "sgt/autodiff.hpp"

#include <cmath>
#include <memory>

#include "sgt/errors.hpp"

namespace sgt::ad {
namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw ArgumentError("vars live on different tapes");
}

void require_shape(bool ok, const char* op) {
  if (!ok) throw ArgumentError(std::string(op) + ": shape mismatch");
}

bool any_grad(const std::vector<Var>& vs) {
  for (Var v : vs)
    if (v.tape->needs_grad(v)) return true;
  return false;
}

template <typename F>
Var unary(Var a, Matrix value, F pullback) {
  Tape* t = a.tape;
  return t->push(std::move(value), t->needs_grad(a), [t, a, pullback](const Matrix& g) {
    t->accumulate(a, pullback(g));
  });
}

}  // namespace

const Matrix& Var::value() const { return tape->value(id); }
const Matrix& Var::grad() const { return tape->grad(id); }

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::variable(Matrix value) {
  nodes_.push_back({std::move(value), Matrix(), true, nullptr});
  return {this, size() - 1};
}

Var Tape::push(Matrix value, bool needs_grad, Pullback pullback) {
  nodes_.push_back({std::move(value), Matrix(), needs_grad, needs_grad ? std::move(pullback) : nullptr});
  return {this, size() - 1};
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id];
  if (!n.needs_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
    throw ArgumentError("gradient shape does not match node " + std::to_string(v.id));
  }
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var out) {
  if (out.value().size() != 1) throw ArgumentError("backward needs a scalar output");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  accumulate(out, Matrix::Ones(1, 1));
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.pullback && n.grad.size() > 0) {
      const Matrix g = n.grad;
      n.pullback(g);
    }
  }
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.cols() == b.rows(), "matmul");
  Tape* t = a.tape;
  return t->push(a.value() * b.value(), any_grad({a, b}), [t, a, b](const Matrix& g) {
    if (t->needs_grad(a)) t->accumulate(a, g * b.value().transpose());
    if (t->needs_grad(b)) t->accumulate(b, a.value().transpose() * g);
  });
}

Var transpose(Var a) {
  return unary(a, a.value().transpose(), [](const Matrix& g) -> Matrix { return g.transpose(); });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Tape* t = a.tape;
  return t->push(a.value() + b.value(), any_grad({a, b}), [t, a, b](const Matrix& g) {
    t->accumulate(a, g);
    t->accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  Tape* t = a.tape;
  return t->push(a.value() - b.value(), any_grad({a, b}), [t, a, b](const Matrix& g) {
    t->accumulate(a, g);
    t->accumulate(b, -g);
  });
}

Var scale(Var a, double s) {
  return unary(a, s * a.value(), [s](const Matrix& g) -> Matrix { return s * g; });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row");
  Tape* t = a.tape;
  Matrix value = a.value().rowwise() + row.value().row(0);
  return t->push(std::move(value), any_grad({a, row}), [t, a, row](const Matrix& g) {
    t->accumulate(a, g);
    t->accumulate(row, g.colwise().sum());
  });
}

Var hadamard(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard");
  Tape* t = a.tape;
  return t->push(a.value().cwiseProduct(b.value()), any_grad({a, b}), [t, a, b](const Matrix& g) {
    if (t->needs_grad(a)) t->accumulate(a, g.cwiseProduct(b.value()));
    if (t->needs_grad(b)) t->accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var mul_row(Var a, Var row) {
  require_same_tape(a, row);
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "mul_row");
  Tape* t = a.tape;
  Matrix value = a.value() * row.value().row(0).asDiagonal();
  return t->push(std::move(value), any_grad({a, row}), [t, a, row](const Matrix& g) {
    if (t->needs_grad(a)) t->accumulate(a, g * row.value().row(0).asDiagonal());
    if (t->needs_grad(row)) t->accumulate(row, g.cwiseProduct(a.value()).colwise().sum());
  });
}

Var sparse_left(const Eigen::SparseMatrix<double>& s, Var a) {
  require_shape(s.cols() == a.rows(), "sparse_left");
  auto sp = std::make_shared<const Eigen::SparseMatrix<double>>(s.transpose());
  return unary(a, s * a.value(), [sp](const Matrix& g) -> Matrix { return *sp * g; });
}

Var dense_left(const Matrix& m, Var a) {
  require_shape(m.cols() == a.rows(), "dense_left");
  auto mt = std::make_shared<const Matrix>(m.transpose());
  return unary(a, m * a.value(), [mt](const Matrix& g) -> Matrix { return *mt * g; });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows");
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return unary(a, a.value().middleRows(start, count), [=](const Matrix& g) -> Matrix {
    Matrix full = Matrix::Zero(rows, cols);
    full.middleRows(start, count) = g;
    return full;
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols");
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return unary(a, a.value().middleCols(start, count), [=](const Matrix& g) -> Matrix {
    Matrix full = Matrix::Zero(rows, cols);
    full.middleCols(start, count) = g;
    return full;
  });
}

Var vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw ArgumentError("vstack of nothing");
  Eigen::Index rows = 0;
  for (Var p : parts) {
    require_same_tape(parts[0], p);
    require_shape(p.cols() == parts[0].cols(), "vstack");
    rows += p.rows();
  }
  Matrix value(rows, parts[0].cols());
  Eigen::Index at = 0;
  for (Var p : parts) {
    value.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  Tape* t = parts[0].tape;
  return t->push(std::move(value), any_grad(parts), [t, parts](const Matrix& g) {
    Eigen::Index at = 0;
    for (Var p : parts) {
      if (t->needs_grad(p)) t->accumulate(p, g.middleRows(at, p.rows()));
      at += p.rows();
    }
  });
}

Var hstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw ArgumentError("hstack of nothing");
  Eigen::Index cols = 0;
  for (Var p : parts) {
    require_same_tape(parts[0], p);
    require_shape(p.rows() == parts[0].rows(), "hstack");
    cols += p.cols();
  }
  Matrix value(parts[0].rows(), cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    value.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  Tape* t = parts[0].tape;
  return t->push(std::move(value), any_grad(parts), [t, parts](const Matrix& g) {
    Eigen::Index at = 0;
    for (Var p : parts) {
      if (t->needs_grad(p)) t->accumulate(p, g.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

Var gather_rows(Var a, const std::vector<int>& index) {
  Matrix value(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    require_shape(index[i] >= 0 && index[i] < a.rows(), "gather_rows");
    value.row(i) = a.value().row(index[i]);
  }
  const Eigen::Index rows = a.rows();
  return unary(a, std::move(value), [index, rows](const Matrix& g) -> Matrix {
    Matrix full = Matrix::Zero(rows, g.cols());
    for (std::size_t i = 0; i < index.size(); ++i) full.row(index[i]) += g.row(i);
    return full;
  });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  require_shape(rows * cols == a.value().size(), "reshape");
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  auto row_major = [](const Matrix& m, Eigen::Index r, Eigen::Index c) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    return Matrix(Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        rm.data(), r, c));
  };
  return unary(a, row_major(a.value(), rows, cols),
               [=](const Matrix& g) -> Matrix { return row_major(g, r0, c0); });
}

Var max_of(const std::vector<Var>& parts) {
  if (parts.empty()) throw ArgumentError("max of nothing");
  const Eigen::Index rows = parts[0].rows(), cols = parts[0].cols();
  Matrix value = parts[0].value();
  Eigen::MatrixXi arg = Eigen::MatrixXi::Zero(rows, cols);
  for (std::size_t p = 1; p < parts.size(); ++p) {
    require_same_tape(parts[0], parts[p]);
    require_shape(parts[p].rows() == rows && parts[p].cols() == cols, "max_of");
    const Matrix& v = parts[p].value();
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i)
        if (v(i, j) > value(i, j)) {
          value(i, j) = v(i, j);
          arg(i, j) = static_cast<int>(p);
        }
  }
  Tape* t = parts[0].tape;
  t->note_branch(pattern_hash(arg));
  return t->push(std::move(value), any_grad(parts), [t, parts, arg](const Matrix& g) {
    for (std::size_t p = 0; p < parts.size(); ++p) {
      if (!t->needs_grad(parts[p])) continue;
      t->accumulate(parts[p], (arg.array() == static_cast<int>(p)).cast<double>().matrix().cwiseProduct(g));
    }
  });
}

Var im2col3x3(Var image, int h, int w) {
  require_shape(image.rows() == static_cast<Eigen::Index>(h) * w && h >= 3 && w >= 3, "im2col3x3");
  const Eigen::Index c = image.cols();
  const int oh = h - 2, ow = w - 2;
  const Matrix& src = image.value();
  Matrix cols(static_cast<Eigen::Index>(oh) * ow, 9 * c);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int dy = 0; dy < 3; ++dy)
        for (int dx = 0; dx < 3; ++dx)
          cols.row(y * ow + x).segment((dy * 3 + dx) * c, c) = src.row((y + dy) * w + (x + dx));
  return unary(image, std::move(cols), [=](const Matrix& g) -> Matrix {
    Matrix full = Matrix::Zero(static_cast<Eigen::Index>(h) * w, c);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        for (int dy = 0; dy < 3; ++dy)
          for (int dx = 0; dx < 3; ++dx)
            full.row((y + dy) * w + (x + dx)) += g.row(y * ow + x).segment((dy * 3 + dx) * c, c);
    return full;
  });
}

Var shift_sum3x3(Var taps, int h, int w) {
  require_shape(taps.rows() == static_cast<Eigen::Index>(h) * w && h >= 3 && w >= 3 && taps.cols() % 9 == 0,
                "shift_sum3x3");
  const Eigen::Index c = taps.cols() / 9;
  const int oh = h - 2, ow = w - 2;
  const Matrix& src = taps.value();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(oh) * ow, c);
  for (int dy = 0; dy < 3; ++dy)
    for (int dx = 0; dx < 3; ++dx)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
          out.row(y * ow + x) += src.row((y + dy) * w + (x + dx)).segment((dy * 3 + dx) * c, c);
  return unary(taps, std::move(out), [=](const Matrix& g) -> Matrix {
    Matrix full = Matrix::Zero(static_cast<Eigen::Index>(h) * w, 9 * c);
    for (int dy = 0; dy < 3; ++dy)
      for (int dx = 0; dx < 3; ++dx)
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x)
            full.row((y + dy) * w + (x + dx)).segment((dy * 3 + dx) * c, c) = g.row(y * ow + x);
    return full;
  });
}

Var relu(Var a) {
  const Matrix mask = (a.value().array() > 0).cast<double>();
  a.tape->note_branch(pattern_hash(mask));
  return unary(a, a.value().cwiseMax(0.0), [mask](const Matrix& g) -> Matrix { return g.cwiseProduct(mask); });
}

Var gelu(Var a) {
  const Matrix& x = a.value();
  Matrix value(x.rows(), x.cols()), slope(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    const double cdf = 0.5 * std::erfc(-v / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
    value.data()[i] = v * cdf;
    slope.data()[i] = cdf + v * pdf;
  }
  return unary(a, std::move(value), [slope](const Matrix& g) -> Matrix { return g.cwiseProduct(slope); });
}

Var exp(Var a) {
  Matrix value = a.value().array().exp();
  return unary(a, value, [value](const Matrix& g) -> Matrix { return g.cwiseProduct(value); });
}

Var softmax_rows(Var a) {
  Matrix s = a.value();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    s.row(i).array() -= s.row(i).maxCoeff();
    s.row(i) = s.row(i).array().exp();
    s.row(i) /= s.row(i).sum();
  }
  return unary(a, s, [s](const Matrix& g) -> Matrix {
    const Eigen::VectorXd dot = (g.cwiseProduct(s)).rowwise().sum();
    return s.cwiseProduct(g.colwise() - dot);
  });
}

Var softmax_cols(Var a) { return transpose(softmax_rows(transpose(a))); }

Var layer_norm(Var a, Var gamma, Var beta, double eps) {
  require_same_tape(a, gamma);
  require_same_tape(a, beta);
  const Eigen::Index d = a.cols();
  require_shape(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 && beta.cols() == d, "layer_norm");
  const Matrix& x = a.value();
  const Eigen::VectorXd mean = x.rowwise().mean();
  const Matrix centered = x.colwise() - mean;
  const Eigen::VectorXd inv_std = ((centered.array().square().rowwise().sum() / d) + eps).rsqrt();
  const Matrix xhat = inv_std.asDiagonal() * centered;
  Matrix value = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  Tape* t = a.tape;
  return t->push(std::move(value), any_grad({a, gamma, beta}), [=](const Matrix& g) {
    t->accumulate(beta, g.colwise().sum());
    t->accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
    if (!t->needs_grad(a)) return;
    const Matrix gx = g.array().rowwise() * gamma.value().row(0).array();
    const Eigen::VectorXd m1 = gx.rowwise().mean();
    const Eigen::VectorXd m2 = gx.cwiseProduct(xhat).rowwise().mean();
    Matrix dx = gx.colwise() - m1;
    dx -= xhat.cwiseProduct(m2.replicate(1, d));
    t->accumulate(a, inv_std.asDiagonal() * dx);
  });
}

Var channel_norm(Var a, Var gamma, Var beta, double eps, Eigen::RowVectorXd* mean_out,
                 Eigen::RowVectorXd* var_out) {
  require_same_tape(a, gamma);
  require_same_tape(a, beta);
  const Eigen::Index c = a.cols();
  const double m = static_cast<double>(a.rows());
  require_shape(gamma.rows() == 1 && gamma.cols() == c && beta.rows() == 1 && beta.cols() == c, "channel_norm");
  const Matrix& x = a.value();
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  const Eigen::RowVectorXd var = centered.array().square().colwise().sum() / m;
  const Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt();
  if (mean_out) *mean_out = mean;
  if (var_out) *var_out = var;
  const Matrix xhat = centered * inv_std.asDiagonal();
  Matrix value = (xhat * gamma.value().row(0).asDiagonal()).rowwise() + beta.value().row(0);
  Tape* t = a.tape;
  return t->push(std::move(value), any_grad({a, gamma, beta}), [=](const Matrix& g) {
    t->accumulate(beta, g.colwise().sum());
    t->accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
    if (!t->needs_grad(a)) return;
    const Matrix gx = g * gamma.value().row(0).asDiagonal();
    const Eigen::RowVectorXd m1 = gx.colwise().mean();
    const Eigen::RowVectorXd m2 = gx.cwiseProduct(xhat).colwise().mean();
    Matrix dx = gx.rowwise() - m1;
    dx -= xhat * m2.asDiagonal();
    t->accumulate(a, dx * inv_std.asDiagonal());
  });
}

Var sum(Var a) {
  const Eigen::Index r = a.rows(), c = a.cols();
  return unary(a, Matrix::Constant(1, 1, a.value().sum()),
               [r, c](const Matrix& g) -> Matrix { return Matrix::Constant(r, c, g(0, 0)); });
}

Var mean_rows(Var a) {
  const Eigen::Index r = a.rows();
  return unary(a, a.value().colwise().mean(),
               [r](const Matrix& g) -> Matrix { return g.replicate(r, 1) / static_cast<double>(r); });
}

}  // namespace sgt::ad
