#include "sgt/losses.hpp"

#include <limits>
#include <string>

#include "sgt/errors.hpp"

namespace sgt::losses {
namespace {

using ad::Matrix;

void same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError(std::string(what) + ": shapes differ");
}

void check_views(Eigen::Index v, const Points2d& gt2d, std::size_t n_cams) {
  if (gt2d.empty() || gt2d.size() != n_cams) throw ArgumentError("need one camera per 2D view");
  for (const auto& g : gt2d) {
    if (g.rows() != v || g.cols() != 2) throw ArgumentError("2D targets must be V x 2 per view");
  }
}

Matrix sign(const Matrix& m) {
  return m.unaryExpr([](double x) { return static_cast<double>((x > 0) - (x < 0)); });
}

// Index of the nearest row of `b` to each row of `a` (ties to the lowest).
std::vector<int> nearest(const Matrix& a, const Matrix& b, Eigen::VectorXd* d2) {
  std::vector<int> idx(a.rows());
  d2->resize(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double d = (a.row(i) - b.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<int>(j);
      }
    }
    idx[i] = arg;
    (*d2)(i) = best;
  }
  return idx;
}

// Value and gradient of the edge loss wrt positions.
double edge_value(const Matrix& p, const std::vector<graph::Edge>& edges, Matrix* grad) {
  if (edges.empty()) throw ArgumentError("edge loss needs at least one edge");
  const std::size_t m = edges.size();
  Eigen::VectorXd sq(m);
  for (std::size_t e = 0; e < m; ++e) sq(e) = (p.row(edges[e].first) - p.row(edges[e].second)).squaredNorm();
  const double mu = sq.mean();
  const Eigen::VectorXd dev = sq.array() - mu;
  if (grad) {
    const Eigen::VectorXd s = sign(dev);
    const Eigen::VectorXd ds = (s.array() - s.mean()) / static_cast<double>(m);
    *grad = Matrix::Zero(p.rows(), p.cols());
    for (std::size_t e = 0; e < m; ++e) {
      const auto [a, b] = edges[e];
      const Eigen::RowVectorXd d = 2.0 * ds(e) * (p.row(a) - p.row(b));
      grad->row(a) += d;
      grad->row(b) -= d;
    }
  }
  return dev.cwiseAbs().mean();
}

}  // namespace

double l1_mesh(const Points& pred, const Points& gt) {
  same_shape(pred, gt, "l1_mesh");
  return (pred - gt).cwiseAbs().mean();
}

Eigen::MatrixXd project(const Points& pts, const CameraParams& cam) {
  if (!(cam.scale > 0)) throw ArgumentError("camera scale must be positive");
  return (cam.scale * pts.leftCols<2>()).rowwise() + cam.translation.transpose();
}

double reproject_2d(const Points& pred, const Points2d& gt2d, const std::vector<CameraParams>& cams) {
  check_views(pred.rows(), gt2d, cams.size());
  double total = 0;
  for (std::size_t n = 0; n < cams.size(); ++n) total += (project(pred, cams[n]) - gt2d[n]).cwiseAbs().sum();
  return total / (static_cast<double>(cams.size()) * pred.rows());
}

ReprojectGradient reproject_2d_gradient(const Points& pred, const Points2d& gt2d,
                                        const std::vector<CameraParams>& cams) {
  check_views(pred.rows(), gt2d, cams.size());
  const double norm = 1.0 / (static_cast<double>(cams.size()) * pred.rows());
  ReprojectGradient g;
  g.pred = Points::Zero(pred.rows(), 3);
  for (std::size_t n = 0; n < cams.size(); ++n) {
    const Matrix s = norm * sign(project(pred, cams[n]) - gt2d[n]);
    g.pred.leftCols<2>() += cams[n].scale * s;
    g.scale.push_back(s.cwiseProduct(pred.leftCols<2>()).sum());
    g.translation.push_back(s.colwise().sum().transpose());
  }
  return g;
}

double edge(const mesh::EdgeSet& edges) {
  if (edges.lengths.empty()) throw ArgumentError("edge loss needs at least one edge");
  const Eigen::ArrayXd sq =
      Eigen::Map<const Eigen::ArrayXd>(edges.lengths.data(), static_cast<Eigen::Index>(edges.lengths.size())).square();
  return (sq - sq.mean()).abs().mean();
}

double edge(const Points& pts, const std::vector<graph::Edge>& edges) { return edge_value(pts, edges, nullptr); }

double chamfer(const Points& a, const Points& b) {
  if (a.rows() == 0 || b.rows() == 0) throw ArgumentError("chamfer needs non-empty point sets");
  Eigen::VectorXd da, db;
  nearest(a, b, &da);
  nearest(b, a, &db);
  return 0.5 * (da.mean() + db.mean());
}

double mse(const Points& pred, const Points& gt) {
  same_shape(pred, gt, "mse");
  return (pred - gt).rowwise().squaredNorm().mean();
}

double mpve(const Points& pred, const Points& gt) {
  same_shape(pred, gt, "mpve");
  return 1000.0 * (pred - gt).rowwise().norm().mean();
}

ad::Var l1_mesh(ad::Var pred, const Points& gt) {
  same_shape(pred.value(), gt, "l1_mesh");
  const Matrix diff = pred.value() - gt;
  const Matrix g = sign(diff) / static_cast<double>(diff.size());
  ad::Tape* t = pred.tape;
  t->note_branch(ad::pattern_hash(sign(diff)));
  return t->push(Matrix::Constant(1, 1, diff.cwiseAbs().mean()), t->needs_grad(pred),
                 [t, pred, g](const Matrix& up) { t->accumulate(pred, up(0, 0) * g); });
}

ad::Var reproject_2d(ad::Var pred, ad::Var cams, const Points2d& gt2d) {
  if (cams.cols() != 3) throw ArgumentError("camera tensor must be N x 3");
  check_views(pred.rows(), gt2d, static_cast<std::size_t>(cams.rows()));
  std::vector<CameraParams> cp(cams.rows());
  for (Eigen::Index n = 0; n < cams.rows(); ++n) {
    cp[n].scale = std::exp(cams.value()(n, 0));
    cp[n].translation = cams.value().row(n).tail<2>().transpose();
  }
  const Points p = pred.value();
  const double value = reproject_2d(p, gt2d, cp);
  const ReprojectGradient g = reproject_2d_gradient(p, gt2d, cp);
  Matrix gc(cams.rows(), 3);
  for (Eigen::Index n = 0; n < cams.rows(); ++n) {
    gc(n, 0) = g.scale[n] * cp[n].scale;  // d/d log s
    gc.row(n).tail<2>() = g.translation[n].transpose();
  }
  ad::Tape* t = pred.tape;
  for (std::size_t n = 0; n < cp.size(); ++n) t->note_branch(ad::pattern_hash(sign(project(p, cp[n]) - gt2d[n])));
  const Matrix gp = g.pred;
  return t->push(Matrix::Constant(1, 1, value), t->needs_grad(pred) || t->needs_grad(cams),
                 [t, pred, cams, gp, gc](const Matrix& up) {
                   t->accumulate(pred, up(0, 0) * gp);
                   t->accumulate(cams, up(0, 0) * gc);
                 });
}

ad::Var edge(ad::Var pred, const std::vector<graph::Edge>& edges) {
  Matrix g;
  const double value = edge_value(pred.value(), edges, &g);
  ad::Tape* t = pred.tape;
  {
    Eigen::VectorXd sq(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      sq(e) = (pred.value().row(edges[e].first) - pred.value().row(edges[e].second)).squaredNorm();
    }
    t->note_branch(ad::pattern_hash(sign((sq.array() - sq.mean()).matrix())));
  }
  return t->push(Matrix::Constant(1, 1, value), t->needs_grad(pred),
                 [t, pred, g](const Matrix& up) { t->accumulate(pred, up(0, 0) * g); });
}

ad::Var chamfer(ad::Var pred, const Points& target) {
  const Matrix& p = pred.value();
  if (p.rows() == 0 || target.rows() == 0) throw ArgumentError("chamfer needs non-empty point sets");
  Eigen::VectorXd dp, dt;
  const std::vector<int> np = nearest(p, target, &dp);
  const std::vector<int> nt = nearest(target, p, &dt);
  Matrix g = Matrix::Zero(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) g.row(i) += (p.row(i) - target.row(np[i])) / static_cast<double>(p.rows());
  for (Eigen::Index j = 0; j < target.rows(); ++j) {
    g.row(nt[j]) += (p.row(nt[j]) - target.row(j)) / static_cast<double>(target.rows());
  }
  ad::Tape* t = pred.tape;
  t->note_branch(ad::pattern_hash(Eigen::Map<const Eigen::VectorXi>(np.data(), static_cast<Eigen::Index>(np.size()))));
  t->note_branch(ad::pattern_hash(Eigen::Map<const Eigen::VectorXi>(nt.data(), static_cast<Eigen::Index>(nt.size()))));
  return t->push(Matrix::Constant(1, 1, 0.5 * (dp.mean() + dt.mean())), t->needs_grad(pred),
                 [t, pred, g](const Matrix& up) { t->accumulate(pred, up(0, 0) * g); });
}

ad::Var mse(ad::Var pred, const Points& gt) {
  same_shape(pred.value(), gt, "mse");
  const Matrix diff = pred.value() - gt;
  const Matrix g = 2.0 * diff / static_cast<double>(diff.rows());
  ad::Tape* t = pred.tape;
  return t->push(Matrix::Constant(1, 1, diff.rowwise().squaredNorm().mean()), t->needs_grad(pred),
                 [t, pred, g](const Matrix& up) { t->accumulate(pred, up(0, 0) * g); });
}

}  // namespace sgt::losses
