#include "sgt/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "sgt/errors.hpp"
#include "sgt/filter.hpp"
#include "sgt/gradcheck.hpp"
#include "sgt/losses.hpp"
#include "sgt/mesh.hpp"
#include "sgt/model.hpp"
#include "sgt/pyramid.hpp"
#include "sgt/random.hpp"
#include "sgt/refine.hpp"
#include "sgt/segment.hpp"
#include "sgt/shapes.hpp"

namespace sgt::cli {

using nlohmann::ordered_json;

int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kParse;
  } catch (const ArgumentError& e) {
    err << "argument error: " << e.what() << "\n";
    return kArgument;
  } catch (const StructuralError& e) {
    err << "argument error: " << e.what() << "\n";
    return kArgument;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumeric;
  } catch (const nlohmann::json::exception& e) {
    err << "parse error: " << e.what() << "\n";
    return kParse;
  }
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot write " + path);
  f << text;
}

void emit(std::ostream& out, bool json, const ordered_json& j, const std::string& human) {
  if (json) {
    out << j.dump() << "\n";
  } else {
    out << human;
  }
}

}  // namespace

int cmd_shape(const ShapeArgs& a, std::ostream& out, bool json) {
  if (a.out.empty()) throw ArgumentError("--out is required");
  if (!(a.size > 0)) throw ArgumentError("--size must be positive");
  const Eigen::RowVector3d at(a.x, a.y, a.z);
  mesh::TriMesh m;
  if (a.kind == "hand") {
    m = shapes::transformed(shapes::hand_template(), Eigen::Matrix3d::Identity(), at);
  } else if (a.kind == "icosphere") {
    if (a.subdivisions < 0 || a.subdivisions > 6) throw ArgumentError("--subdivisions must be in 0..6");
    m = shapes::icosphere(a.subdivisions, a.size, at);
  } else if (a.kind == "cube") {
    m = shapes::cube(a.size, at);
  } else {
    throw ArgumentError("unknown shape '" + a.kind + "'");
  }
  if (a.mirror) m = shapes::mirrored(m);
  mesh::write_obj_file(a.out, m);
  emit(out, json,
       {{"command", "shape"}, {"kind", a.kind}, {"vertices", m.num_vertices()}, {"faces", m.num_faces()}},
       a.kind + ": " + std::to_string(m.num_vertices()) + " vertices, " + std::to_string(m.num_faces()) +
           " faces\n");
  return kOk;
}

int cmd_segment(const SegmentArgs& a, std::ostream& out, bool json) {
  if (a.k < 1) throw ArgumentError("--k must be >= 1");
  const auto m = mesh::load_obj_file(a.mesh);
  const auto result = segment::segment(mesh::to_graph(m), a.k, a.seed);
  if (!a.out.empty()) write_text(a.out, segment::to_json(result) + "\n");
  const auto sizes = result.cluster_sizes();
  std::string human = "clusters:";
  for (int s : sizes) human += " " + std::to_string(s);
  emit(out, json,
       {{"command", "segment"}, {"K", a.k}, {"vertices", m.num_vertices()}, {"cluster_sizes", sizes},
        {"converged", result.converged}},
       human + "\n");
  return kOk;
}

int cmd_pyramid(const PyramidArgs& a, std::ostream& out, bool json) {
  const auto m = mesh::load_obj_file(a.mesh);
  const auto p = pyramid::build_pyramid(mesh::to_graph(m), a.sizes, a.seed);
  if (!a.out.empty()) pyramid::save_pyramid(p, a.out, a.seed);
  const auto sizes = p.level_sizes();
  std::string human = "levels:";
  for (int s : sizes) human += " " + std::to_string(s);
  emit(out, json, {{"command", "pyramid"}, {"level_sizes", sizes}}, human + "\n");
  return kOk;
}

int cmd_overfit(const OverfitArgs& a, std::ostream& out, bool json) {
  if (a.steps < 0) throw ArgumentError("--steps must be >= 0");
  model::ModelConfig config = model::ModelConfig::toy();
  if (!a.config.empty()) {
    std::ifstream f(a.config);
    if (!f) throw ArgumentError("cannot read " + a.config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(a.config + ": " + e.what(), 0);
    }
    config = model::ModelConfig::from_json(j);
  }
  if (a.learning_rate > 0) config.learning_rate = a.learning_rate;
  const model::Context ctx = model::build_context(config);
  const model::Scene scene = model::synth_scene(config, ctx, a.scene_seed);
  model::TrainState state = model::init_train_state(config, ctx);

  std::ofstream log;
  if (!a.out.empty()) {
    log.open(a.out + ".log.jsonl", std::ios::binary);
    if (!log) throw ArgumentError("cannot write " + a.out + ".log.jsonl");
  }
  double first = std::numeric_limits<double>::quiet_NaN(), last = first;
  for (int step = 0; step < a.steps; ++step) {
    const auto l = model::train_step(state, config, ctx, scene, config.learning_rate);
    if (step == 0) first = l.total;
    last = l.total;
    if (log) {
      log << ordered_json{{"step", step},         {"loss_total", l.total}, {"loss_mesh", l.mesh},
                          {"loss_2d", l.reproj2d}, {"loss_edge", l.edge},   {"loss_mse", l.mse},
                          {"loss_chamfer", l.chamfer}}
                 .dump()
          << "\n";
    }
  }
  if (!a.out.empty()) model::save_checkpoint(a.out, config, state);

  ordered_json j{{"command", "overfit"},
                 {"steps", a.steps},
                 {"config_hash", config.hash()},
                 {"parameters", state.params.scalar_count()}};
  if (a.steps > 0) {
    j["initial_loss"] = first;
    j["final_loss"] = last;
    j["reduction"] = 1.0 - last / first;
  }
  std::ostringstream human;
  human << "steps " << a.steps << ", parameters " << state.params.scalar_count();
  if (a.steps > 0) human << ", loss " << first << " -> " << last;
  emit(out, json, j, human.str() + "\n");
  return kOk;
}

int cmd_refine(const RefineArgs& a, std::ostream& out, bool json) {
  const auto source = mesh::load_obj_file(a.source);
  const auto target = mesh::load_obj_file(a.target);
  if (!mesh::is_watertight(target)) throw ArgumentError(a.target + " is not watertight");
  refine::RefineConfig cfg;
  cfg.arap_weight = a.arap_weight;
  cfg.max_iters = a.iters;
  cfg.ray_direction_seed = a.seed;
  cfg.self_collision = a.self_collision;
  const auto r = refine::refine_mesh(source, target, cfg);

  ordered_json report{{"before", r.before.to_json()},
                      {"after", r.after.to_json()},
                      {"iterations", r.iterations},
                      {"initial_loss", r.initial_loss},
                      {"final_loss", r.final_loss},
                      {"converged", r.converged},
                      {"diverged", r.diverged}};
  if (!a.out.empty()) {
    mesh::write_obj_file(a.out, r.mesh);
    write_text(a.report.empty() ? a.out + ".report.json" : a.report, report.dump(2) + "\n");
  } else if (!a.report.empty()) {
    write_text(a.report, report.dump(2) + "\n");
  }
  std::ostringstream human;
  human << "max penetration " << r.before.max_penetration_mm << " mm -> " << r.after.max_penetration_mm
        << " mm, intersection volume " << r.before.intersection_volume_cm3 << " cm3 -> "
        << r.after.intersection_volume_cm3 << " cm3" << (r.diverged ? " (diverged)" : "") << "\n";
  report["command"] = "refine";
  emit(out, json, report, human.str());
  return kOk;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, bool json) {
  const auto results = gradcheck::run_suite(a.module, a.seed);
  bool all = true;
  ordered_json rows = ordered_json::array();
  std::ostringstream human;
  for (const auto& r : results) {
    all = all && r.passed();
    rows.push_back({{"module", r.module},
                    {"op", r.op},
                    {"max_relative_error", r.max_relative_error},
                    {"probed", r.probed},
                    {"skipped", r.skipped},
                    {"passed", r.passed()}});
    human << std::left << std::setw(16) << r.module << std::setw(20) << r.op << std::scientific
          << std::setprecision(3) << r.max_relative_error << std::defaultfloat << (r.passed() ? "  ok" : "  FAIL")
          << "\n";
  }
  emit(out, json, {{"command", "gradcheck"}, {"results", rows}, {"passed", all}}, human.str());
  return all ? kOk : kVerification;
}

namespace {

struct OracleOutcome {
  double discrepancy;
  double tolerance;
  std::string detail;
};

graph::MeshGraph random_graph(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<graph::Edge> edges;
  for (int v = 1; v < n; ++v) edges.emplace_back(uniform_index(rng, v), v);
  for (int e = 0; e < n; ++e) {
    const int a = uniform_index(rng, n), b = uniform_index(rng, n);
    if (a != b) edges.emplace_back(std::min(a, b), std::max(a, b));
  }
  return graph::graph_from_edges(n, edges);
}

OracleOutcome oracle_chebyshev(std::uint64_t seed) {
  const auto g = random_graph(50, seed);
  const auto l = graph::laplacian(g);
  const double lmax = graph::largest_eigenvalue(l);
  Rng rng(seed + 1);
  const filter::Theta theta = filter::init_theta(3, 4, 2, rng);
  Eigen::MatrixXd x(50, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform(rng, -1, 1);
  const Eigen::MatrixXd fast = filter::chebyshev_filter(graph::scaled_laplacian(l, lmax), theta, x);
  const Eigen::MatrixXd dense = filter::dense_spectral_filter(graph::eigendecompose(l, 50),
                                                              filter::FilterSpec::chebyshev(theta, lmax), x);
  return {(fast - dense).cwiseAbs().maxCoeff() / std::max(dense.cwiseAbs().maxCoeff(), 1e-300), 1e-5,
          "50-node graph, order 3, vs U g(L) U^T"};
}

OracleOutcome oracle_clustering(std::uint64_t seed) {
  // Two random connected components joined into one vertex set.
  const auto a = random_graph(30, seed), b = random_graph(25, seed + 7);
  std::vector<graph::Edge> edges = a.edges;
  for (auto [u, v] : b.edges) edges.emplace_back(u + 30, v + 30);
  const auto g = graph::graph_from_edges(55, edges);
  const auto labels = segment::segment(g, 2, seed).labels;
  std::vector<int> truth;
  graph::connected_components(g, &truth);
  int wrong = 0;
  for (int i = 0; i < 55; ++i) wrong += (labels[i] == labels[0]) != (truth[i] == truth[0]);
  return {static_cast<double>(wrong), 0.5, "2-component graph, misassigned vertices"};
}

OracleOutcome oracle_chamfer(std::uint64_t seed) {
  Rng rng(seed);
  Points p(40, 3), q(55, 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = uniform(rng, -1, 1);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = uniform(rng, -1, 1);
  auto one_way = [](const Points& s, const Points& t) {
    double sum = 0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < t.rows(); ++j) {
        double d = 0;
        for (int k = 0; k < 3; ++k) d += (s(i, k) - t(j, k)) * (s(i, k) - t(j, k));
        best = std::min(best, d);
      }
      sum += best;
    }
    return sum / static_cast<double>(s.rows());
  };
  const double loop = 0.5 * (one_way(p, q) + one_way(q, p));
  return {std::abs(losses::chamfer(p, q) - loop), 1e-10, "40 vs 55 points, double loop"};
}

OracleOutcome oracle_collision(std::uint64_t seed) {
  Rng rng(seed);
  const auto src = shapes::icosphere(2, 1.0);
  const Eigen::RowVector3d c(1.2 + uniform(rng, 0, 0.3), uniform(rng, -0.2, 0.2), uniform(rng, -0.2, 0.2));
  const auto tgt = shapes::icosphere(2, 1.0, c);
  const auto mask = refine::collision_mask(src, tgt, seed);
  double loop = 0;
  for (int i = 0; i < src.num_vertices(); ++i) {
    if (!mask.interior[i]) continue;
    int best = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (int j = 0; j < tgt.num_vertices(); ++j) {
      const double d = (src.positions.row(i) - tgt.positions.row(j)).norm();
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    if (src.normals.row(i).dot(tgt.normals.row(best)) < 0) loop += bd;
  }
  return {std::abs(refine::collision_loss(src, mask, tgt) - loop), 1e-10, "overlapping spheres, O(n^2) loop"};
}

}  // namespace

int cmd_oracle(const OracleArgs& a, std::ostream& out, bool json) {
  OracleOutcome r;
  if (a.test == "chebyshev") {
    r = oracle_chebyshev(a.seed);
  } else if (a.test == "clustering") {
    r = oracle_clustering(a.seed);
  } else if (a.test == "chamfer") {
    r = oracle_chamfer(a.seed);
  } else if (a.test == "collision") {
    r = oracle_collision(a.seed);
  } else {
    throw ArgumentError("unknown oracle test '" + a.test + "'");
  }
  const bool ok = r.discrepancy < r.tolerance;
  std::ostringstream human;
  human << a.test << ": " << r.detail << ", discrepancy " << r.discrepancy << (ok ? "  ok" : "  FAIL") << "\n";
  emit(out, json,
       {{"command", "oracle"},
        {"test", a.test},
        {"discrepancy", r.discrepancy},
        {"tolerance", r.tolerance},
        {"passed", ok}},
       human.str());
  return ok ? kOk : kVerification;
}

}  // namespace sgt::cli
