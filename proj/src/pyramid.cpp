#include "sgt/pyramid.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "sgt/errors.hpp"
#include "sgt/random.hpp"
#include "sgt/tensor_file.hpp"

namespace sgt::pyramid {
namespace {

struct WeightedGraph {
  int n = 0;
  std::vector<std::map<int, double>> adj;
  Points positions;
  std::vector<int> mass;  // fine vertices represented, so positions stay true means
};

WeightedGraph from_mesh_graph(const graph::MeshGraph& g) {
  WeightedGraph w;
  w.n = g.num_vertices();
  w.adj.resize(w.n);
  for (const auto& [a, b] : g.edges) {
    w.adj[a][b] = 1.0;
    w.adj[b][a] = 1.0;
  }
  w.positions = g.positions;
  w.mass.assign(w.n, 1);
  return w;
}

// One greedy matching pass. Returns cluster id per vertex (ids ordered by
// the smallest member) and the resulting count; stops merging at `target`.
std::vector<int> matching_round(const WeightedGraph& g, int target, Rng& rng, int* count) {
  std::vector<double> degree(g.n, 0.0);
  for (int v = 0; v < g.n; ++v)
    for (const auto& [u, w] : g.adj[v]) degree[v] += w;

  std::vector<int> order(g.n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = g.n - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);

  std::vector<int> mate(g.n, -1);
  int remaining = g.n;
  for (int v : order) {
    if (remaining <= target) break;
    if (mate[v] >= 0) continue;
    int best = -1;
    double best_score = -1.0;
    for (const auto& [u, w] : g.adj[v]) {
      if (mate[u] >= 0 || u == v) continue;
      const double score = w * (1.0 / degree[v] + 1.0 / degree[u]);
      if (score > best_score) {
        best_score = score;
        best = u;
      }
    }
    if (best < 0) continue;
    mate[v] = best;
    mate[best] = v;
    --remaining;
  }

  std::vector<int> cluster(g.n, -1);
  int next = 0;
  for (int v = 0; v < g.n; ++v) {
    if (cluster[v] >= 0) continue;
    cluster[v] = next;
    if (mate[v] >= 0) cluster[mate[v]] = next;
    ++next;
  }
  *count = next;
  return cluster;
}

WeightedGraph contract(const WeightedGraph& g, const std::vector<int>& cluster, int count) {
  WeightedGraph c;
  c.n = count;
  c.adj.resize(count);
  c.positions = Points::Zero(count, 3);
  c.mass.assign(count, 0);
  const bool has_positions = g.positions.rows() == g.n;
  for (int v = 0; v < g.n; ++v) {
    c.mass[cluster[v]] += g.mass[v];
    if (has_positions) c.positions.row(cluster[v]) += g.mass[v] * g.positions.row(v);
    for (const auto& [u, w] : g.adj[v]) {
      if (cluster[u] != cluster[v]) c.adj[cluster[v]][cluster[u]] += w;
    }
  }
  if (has_positions) {
    for (int k = 0; k < count; ++k) c.positions.row(k) /= c.mass[k];
  } else {
    c.positions.resize(0, 3);
  }
  return c;
}

graph::MeshGraph to_mesh_graph(const WeightedGraph& w) {
  std::vector<graph::Edge> edges;
  for (int v = 0; v < w.n; ++v)
    for (const auto& [u, weight] : w.adj[v])
      if (v < u) edges.emplace_back(v, u);
  return graph::graph_from_edges(w.n, std::move(edges), w.positions);
}

}  // namespace

std::vector<int> GraphPyramid::level_sizes() const {
  std::vector<int> sizes;
  for (const auto& g : levels) sizes.push_back(g.num_vertices());
  return sizes;
}

int GraphPyramid::root_of(int fine_vertex) const {
  int v = fine_vertex;
  for (int l = static_cast<int>(parent_maps.size()) - 1; l >= 0; --l) v = parent_maps[l][v];
  return v;
}

GraphPyramid build_pyramid(const graph::MeshGraph& fine, const std::vector<int>& target_sizes,
                           std::uint64_t seed) {
  if (target_sizes.empty()) throw ArgumentError("no pyramid sizes given");
  if (target_sizes.back() != fine.num_vertices()) {
    throw ArgumentError("last pyramid size " + std::to_string(target_sizes.back()) +
                        " differs from the template size " + std::to_string(fine.num_vertices()));
  }
  for (std::size_t i = 0; i < target_sizes.size(); ++i) {
    if (target_sizes[i] < 1) throw ArgumentError("pyramid sizes must be positive");
    if (i > 0 && target_sizes[i] <= target_sizes[i - 1]) {
      throw ArgumentError("pyramid sizes must be strictly ascending");
    }
  }

  Rng rng(seed);
  const int n_levels = static_cast<int>(target_sizes.size());
  std::vector<graph::MeshGraph> levels(n_levels);
  std::vector<std::vector<int>> parents(n_levels - 1);
  levels[n_levels - 1] = fine;

  WeightedGraph current = from_mesh_graph(fine);
  for (int level = n_levels - 2; level >= 0; --level) {
    const int target = target_sizes[level];
    std::vector<int> to_coarse(current.n);
    std::iota(to_coarse.begin(), to_coarse.end(), 0);
    WeightedGraph working = current;
    while (working.n > target) {
      int count = 0;
      const std::vector<int> cluster = matching_round(working, target, rng, &count);
      if (count == working.n) {
        throw StructuralError("pyramid level " + std::to_string(level) + ": size " +
                              std::to_string(target) + " unreachable, matching stalls at " +
                              std::to_string(working.n));
      }
      for (int& c : to_coarse) c = cluster[c];
      working = contract(working, cluster, count);
    }
    parents[level] = std::move(to_coarse);
    levels[level] = to_mesh_graph(working);
    current = std::move(working);
  }

  GraphPyramid p;
  p.levels = std::move(levels);
  p.parent_maps = std::move(parents);
  return p;
}

UpsampleWeights identity_upsample(int n_fine, int n_coarse, int channels) {
  UpsampleWeights w;
  w.weight = Eigen::MatrixXd::Identity(n_fine, n_coarse);
  w.bias = Eigen::MatrixXd::Zero(n_fine, channels);
  return w;
}

Eigen::MatrixXd upsample(const UpsampleWeights& w, const Eigen::MatrixXd& signal) {
  if (signal.rows() != w.coarse_size()) {
    throw ArgumentError("signal has " + std::to_string(signal.rows()) + " rows, weights expect " +
                        std::to_string(w.coarse_size()));
  }
  if (w.bias.rows() != w.fine_size() || w.bias.cols() != signal.cols()) {
    throw ArgumentError("bias must be " + std::to_string(w.fine_size()) + " x " +
                        std::to_string(signal.cols()));
  }
  return w.weight * signal + w.bias;
}

Eigen::MatrixXd upsample_signal(const GraphPyramid& pyramid, int level, const Eigen::MatrixXd& signal,
                                const UpsampleWeights& w) {
  if (level < 0 || level + 1 >= pyramid.num_levels()) {
    throw ArgumentError("no level above " + std::to_string(level));
  }
  if (signal.rows() != pyramid.levels[level].num_vertices() ||
      w.fine_size() != pyramid.levels[level + 1].num_vertices()) {
    throw ArgumentError("upsample sizes do not match pyramid levels " + std::to_string(level) +
                        " -> " + std::to_string(level + 1));
  }
  return upsample(w, signal);
}

UpsampleGradient upsample_gradient(const UpsampleWeights& w, const Eigen::MatrixXd& signal,
                                   const Eigen::MatrixXd& upstream) {
  return {upstream * signal.transpose(), upstream, w.weight.transpose() * upstream};
}

}  // namespace sgt::pyramid

namespace sgt::pyramid {
namespace {

// Indices travel as float32 payloads; exact below 2^24.
io::TensorFile index_tensor(const std::vector<int>& values, std::uint64_t cols) {
  io::TensorFile t;
  t.dims = {values.size() / cols, cols};
  t.payload.assign(values.begin(), values.end());
  return t;
}

std::vector<int> tensor_indices(const io::TensorFile& t) {
  std::vector<int> out(t.payload.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(t.payload[i]);
  return out;
}

}  // namespace

void save_pyramid(const GraphPyramid& p, const std::string& stem, std::uint64_t seed) {
  std::vector<io::NamedTensor> tensors;
  for (int l = 0; l < p.num_levels(); ++l) {
    const auto& g = p.levels[l];
    std::vector<int> flat;
    for (const auto& [a, b] : g.edges) {
      flat.push_back(a);
      flat.push_back(b);
    }
    tensors.push_back({"level" + std::to_string(l) + ".edges", index_tensor(flat, 2)});
    if (g.positions.rows() == g.num_vertices()) {
      tensors.push_back({"level" + std::to_string(l) + ".positions",
                         io::to_file(FeatureTensor::from_matrix(g.positions))});
    }
    if (l + 1 < p.num_levels()) {
      tensors.push_back({"level" + std::to_string(l) + ".parents", index_tensor(p.parent_maps[l], 1)});
    }
  }
  nlohmann::ordered_json meta;
  meta["kind"] = "graph_pyramid";
  meta["seed"] = seed;
  meta["level_sizes"] = p.level_sizes();
  io::write_bundle(stem, tensors, meta);
}

GraphPyramid load_pyramid(const std::string& stem) {
  const io::Bundle b = io::read_bundle(stem);
  if (b.meta.value("kind", "") != "graph_pyramid") throw ParseError(stem + ": not a pyramid manifest", 0);
  const auto sizes = b.meta.at("level_sizes").get<std::vector<int>>();
  GraphPyramid p;
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    const std::string prefix = "level" + std::to_string(l);
    const std::vector<int> flat = tensor_indices(b.at(prefix + ".edges"));
    std::vector<graph::Edge> edges;
    for (std::size_t i = 0; i + 1 < flat.size(); i += 2) edges.emplace_back(flat[i], flat[i + 1]);
    Points positions;
    for (const auto& nt : b.tensors) {
      if (nt.name == prefix + ".positions") positions = io::from_file(nt.tensor).as_matrix();
    }
    p.levels.push_back(graph::graph_from_edges(sizes[l], std::move(edges), positions));
    if (l + 1 < sizes.size()) p.parent_maps.push_back(tensor_indices(b.at(prefix + ".parents")));
  }
  return p;
}

}  // namespace sgt::pyramid
