#include "sgt/model.hpp"

#include <cmath>
#include <cstdio>

#include "sgt/errors.hpp"
#include "sgt/filter.hpp"
#include "sgt/random.hpp"
#include "sgt/segment.hpp"
#include "sgt/shapes.hpp"
#include "sgt/tensor_file.hpp"

namespace sgt::model {
namespace {

using ad::Matrix;
using ad::Var;

constexpr double kNormEps = 1e-5;
constexpr double kNormMomentum = 0.1;

int ceil_div(int a, int b) { return (a + b - 1) / b; }

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = uniform(rng, -bound, bound);
  return m;
}

void require_finite(Var v, const std::string& name) {
  if (!v.value().allFinite()) throw NumericalError("non-finite values in " + name);
}

std::string layer_prefix(int block, int layer) {
  return "encoder.block" + std::to_string(block) + ".layer" + std::to_string(layer) + ".";
}

std::string hand_prefix(int hand) { return "decoder.hand" + std::to_string(hand) + "."; }

// Linear layer with a row bias: x W + b.
Var linear(const Bound& p, const std::string& name, Var x) {
  return ad::add_row(ad::matmul(x, p[name + ".weight"]), p[name + ".bias"]);
}

Var view_matrix(ad::Tape& tape, const FeatureTensor& f, int view) {
  const std::int64_t hw = f.shape[1] * f.shape[2], c = f.shape[3];
  Matrix m(hw, c);
  const double* base = f.data.data() + view * hw * c;
  for (std::int64_t r = 0; r < hw; ++r)
    for (std::int64_t k = 0; k < c; ++k) m(r, k) = base[r * c + k];
  return tape.constant(std::move(m));
}

// Channel normalization over every view's pixels. Train mode uses the batch
// statistics and folds them into the running buffers.
Var normalize(const Bound& p, const std::string& name, Var x, Mode mode, Parameters* buffers) {
  Var gamma = p[name + ".gamma"], beta = p[name + ".beta"];
  if (mode == Mode::train) {
    Eigen::RowVectorXd mean, var;
    Var y = ad::channel_norm(x, gamma, beta, kNormEps, &mean, &var);
    if (buffers) {
      Matrix& rm = buffers->at(name + ".running_mean");
      Matrix& rv = buffers->at(name + ".running_var");
      rm = (1 - kNormMomentum) * rm + kNormMomentum * mean;
      rv = (1 - kNormMomentum) * rv + kNormMomentum * var;
    }
    return y;
  }
  if (!buffers) throw ArgumentError("eval mode needs running statistics");
  const Eigen::RowVectorXd mean = buffers->at(name + ".running_mean");
  const Eigen::RowVectorXd inv_std = (buffers->at(name + ".running_var").array() + kNormEps).rsqrt();
  ad::Tape& tape = *x.tape;
  Var centered = ad::add_row(x, tape.constant(-mean));
  Var scaled = ad::mul_row(centered, tape.constant(inv_std));
  return ad::add_row(ad::mul_row(scaled, gamma), beta);
}

}  // namespace

// ---------------------------------------------------------------- config

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.learning_rate = 1e-4;
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.channels = 32;
  c.blocks = 2;
  c.decoder_sizes = {41, 81, 162};
  c.template_kind = "icosphere";
  c.icosphere_subdivisions = 2;
  return c;
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ArgumentError("config: " + what);
  };
  need(views >= 1, "views must be >= 1");
  need(clusters >= 1, "clusters must be >= 1");
  need(channels >= 1 && backbone_channels >= 1, "channel counts must be positive");
  need(feature_size >= 2, "feature_size must be >= 2");
  need(blocks >= 1 && layers_per_block >= 0, "bad encoder depth");
  need(heads >= 1 && ffn_multiplier >= 1, "bad attention settings");
  need(!decoder_sizes.empty(), "decoder_sizes is empty");
  for (std::size_t i = 0; i < decoder_sizes.size(); ++i) {
    need(decoder_sizes[i] >= 1, "decoder sizes must be positive");
    need(i == 0 || decoder_sizes[i] > decoder_sizes[i - 1], "decoder_sizes must ascend");
  }
  need(cheb_order >= 1, "cheb_order must be >= 1");
  need(template_kind == "hand" || template_kind == "icosphere", "template must be hand or icosphere");
  need(icosphere_subdivisions >= 0 && icosphere_radius > 0, "bad icosphere settings");
  need(subsample_factor >= 1, "subsample_factor must be >= 1");
  const auto& w = loss_weights;
  need(w.mesh >= 0 && w.reproj2d >= 0 && w.mse >= 0 && w.edge >= 0 && w.chamfer >= 0,
       "loss weights must be non-negative");
  need(learning_rate >= 0, "learning_rate must be non-negative");
}

std::vector<int> ModelConfig::encoder_widths() const {
  std::vector<int> w{channels + 3};
  for (int b = 1; b < blocks; ++b) w.push_back(ceil_div(w.back(), 2));
  return w;
}

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["views"] = views;
  j["clusters"] = clusters;
  j["channels"] = channels;
  j["backbone_channels"] = backbone_channels;
  j["feature_size"] = feature_size;
  j["blocks"] = blocks;
  j["layers_per_block"] = layers_per_block;
  j["heads"] = heads;
  j["ffn_multiplier"] = ffn_multiplier;
  j["decoder_sizes"] = decoder_sizes;
  j["cheb_order"] = cheb_order;
  j["template"] = template_kind;
  j["icosphere_subdivisions"] = icosphere_subdivisions;
  j["icosphere_radius"] = icosphere_radius;
  j["subsample_factor"] = subsample_factor;
  j["loss_weights"] = {{"mesh", loss_weights.mesh},
                       {"reproj2d", loss_weights.reproj2d},
                       {"mse", loss_weights.mse},
                       {"edge", loss_weights.edge},
                       {"chamfer", loss_weights.chamfer}};
  j["learning_rate"] = learning_rate;
  j["seed"] = seed;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (!j.is_object()) throw ParseError("config must be a JSON object", 0);
    auto get = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("views", c.views);
    get("clusters", c.clusters);
    get("channels", c.channels);
    get("backbone_channels", c.backbone_channels);
    get("feature_size", c.feature_size);
    get("blocks", c.blocks);
    get("layers_per_block", c.layers_per_block);
    get("heads", c.heads);
    get("ffn_multiplier", c.ffn_multiplier);
    get("decoder_sizes", c.decoder_sizes);
    get("cheb_order", c.cheb_order);
    get("template", c.template_kind);
    get("icosphere_subdivisions", c.icosphere_subdivisions);
    get("icosphere_radius", c.icosphere_radius);
    get("subsample_factor", c.subsample_factor);
    get("learning_rate", c.learning_rate);
    get("seed", c.seed);
    if (j.contains("loss_weights")) {
      const auto& w = j.at("loss_weights");
      auto weight = [&w](const char* key, double& field) {
        if (w.contains(key)) field = w.at(key).get<double>();
      };
      weight("mesh", c.loss_weights.mesh);
      weight("reproj2d", c.loss_weights.reproj2d);
      weight("mse", c.loss_weights.mse);
      weight("edge", c.loss_weights.edge);
      weight("chamfer", c.loss_weights.chamfer);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what(), 0);
  }
  return c;
}

std::string ModelConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : to_json().dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------- parameters

int Parameters::index(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (names[i] == name) return i;
  return -1;
}

const Eigen::MatrixXd& Parameters::at(const std::string& name) const {
  const int i = index(name);
  if (i < 0) throw ArgumentError("no parameter named " + name);
  return values[i];
}

Eigen::MatrixXd& Parameters::at(const std::string& name) {
  const int i = index(name);
  if (i < 0) throw ArgumentError("no parameter named " + name);
  return values[i];
}

void Parameters::add(const std::string& name, Eigen::MatrixXd value) {
  if (index(name) >= 0) throw ArgumentError("duplicate parameter " + name);
  names.push_back(name);
  values.push_back(std::move(value));
}

void Parameters::quantize() {
  for (auto& v : values) v = v.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
}

std::int64_t Parameters::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& v : values) n += v.size();
  return n;
}

std::string Parameters::first_non_finite() const {
  for (int i = 0; i < size(); ++i)
    if (!values[i].allFinite()) return names[i];
  return {};
}

// ---------------------------------------------------------------- context

Eigen::MatrixXd bilinear_upsample_matrix(int h, int w) {
  auto axis = [](int n) {
    Matrix a = Matrix::Zero(2 * n, n);
    for (int o = 0; o < 2 * n; ++o) {
      const double src = std::clamp((o + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(n - 1));
      const int lo = static_cast<int>(std::floor(src));
      const int hi = std::min(lo + 1, n - 1);
      const double t = src - lo;
      a(o, lo) += 1 - t;
      a(o, hi) += t;
    }
    return a;
  };
  const Matrix ay = axis(h), ax = axis(w);
  Matrix u = Matrix::Zero(4 * h * w, h * w);
  for (int yo = 0; yo < 2 * h; ++yo)
    for (int xo = 0; xo < 2 * w; ++xo)
      for (int yi = 0; yi < h; ++yi) {
        if (ay(yo, yi) == 0) continue;
        for (int xi = 0; xi < w; ++xi) u(yo * 2 * w + xo, yi * w + xi) = ay(yo, yi) * ax(xo, xi);
      }
  return u;
}

Context build_context(const ModelConfig& config) {
  config.validate();
  Context ctx;
  mesh::TriMesh right;
  double offset;
  if (config.template_kind == "hand") {
    right = shapes::hand_template();
    offset = 0.1;
  } else {
    right = shapes::icosphere(config.icosphere_subdivisions, config.icosphere_radius);
    offset = 1.6 * config.icosphere_radius;
  }
  right = shapes::transformed(right, Eigen::Matrix3d::Identity(), Eigen::RowVector3d(offset, 0, 0));
  ctx.hands[0] = right;
  ctx.hands[1] = shapes::mirrored(right);
  ctx.hand_graph = mesh::to_graph(right);
  const int v = ctx.hand_graph.num_vertices();
  if (config.decoder_sizes.back() != v) {
    throw ArgumentError("last decoder size " + std::to_string(config.decoder_sizes.back()) +
                        " must equal the template size " + std::to_string(v));
  }

  ctx.hand_labels = segment::segment(ctx.hand_graph, config.clusters, config.seed).labels;
  const auto kept = mesh::subsample_uniform(right, config.subsample_factor, static_cast<int>(config.seed));
  const int t = kept.size();
  ctx.token_positions.resize(2 * t, 3);
  for (int hand = 0; hand < 2; ++hand) {
    for (int i = 0; i < t; ++i) {
      ctx.token_positions.row(hand * t + i) = ctx.hands[hand].positions.row(kept.kept_indices[i]);
      ctx.token_labels.push_back(ctx.hand_labels[kept.kept_indices[i]]);
    }
  }

  ctx.pyramid = pyramid::build_pyramid(ctx.hand_graph, config.decoder_sizes, config.seed);
  for (int level = 0; level + 1 < ctx.pyramid.num_levels(); ++level) {
    const auto l = graph::laplacian(ctx.pyramid.levels[level]);
    ctx.scaled_laplacians.push_back(graph::scaled_laplacian(l, graph::largest_eigenvalue(l)));
  }
  for (int hand = 0; hand < 2; ++hand)
    for (const auto& [a, b] : ctx.hand_graph.edges) ctx.edges.emplace_back(a + hand * v, b + hand * v);

  const int s = config.feature_size;
  ctx.upsample_small = bilinear_upsample_matrix(s, s);
  ctx.upsample_large = bilinear_upsample_matrix(2 * s - 2, 2 * s - 2);
  return ctx;
}

Parameters init_parameters(const ModelConfig& config, const Context& context, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Parameters p;
  const int c = config.channels, b = config.backbone_channels, k = config.clusters;
  auto dense = [&](const std::string& name, int in, int out) {
    p.add(name + ".weight", uniform_matrix(in, out, 1.0 / std::sqrt(in), rng));
    p.add(name + ".bias", Matrix::Zero(1, out));
  };
  auto norm = [&](const std::string& name, int width) {
    p.add(name + ".gamma", Matrix::Ones(1, width));
    p.add(name + ".beta", Matrix::Zero(1, width));
  };

  // 3x3 kernels stored as in_channels x (9 taps * out_channels), tap-major
  // column blocks. Convolutions feed a normalization, so they carry no bias.
  p.add("fusion.conv1.weight", uniform_matrix(b, 9 * c, 1.0 / std::sqrt(9.0 * b), rng));
  norm("fusion.norm1", c);
  p.add("fusion.conv2.weight", uniform_matrix(c, 9 * c, 1.0 / std::sqrt(9.0 * c), rng));
  norm("fusion.norm2", c);
  dense("fusion.mask", c, k);

  const auto widths = config.encoder_widths();
  for (int blk = 0; blk < config.blocks; ++blk) {
    const int d = widths[blk];
    const int hd = config.heads * ceil_div(d, config.heads);
    for (int l = 0; l < config.layers_per_block; ++l) {
      const std::string pre = layer_prefix(blk, l);
      norm(pre + "ln1", d);
      dense(pre + "attn.q", d, hd);
      dense(pre + "attn.k", d, hd);
      dense(pre + "attn.v", d, hd);
      dense(pre + "attn.out", hd, d);
      norm(pre + "ln2", d);
      dense(pre + "ffn.in", d, config.ffn_multiplier * d);
      dense(pre + "ffn.out", config.ffn_multiplier * d, d);
    }
    const int next = blk + 1 < config.blocks ? widths[blk + 1] : 3;
    dense("encoder.reduce" + std::to_string(blk), d, next);
  }

  for (int hand = 0; hand < 2; ++hand) {
    int prev = context.tokens();
    for (std::size_t i = 0; i < config.decoder_sizes.size(); ++i) {
      const int size = config.decoder_sizes[i];
      const std::string fc = hand_prefix(hand) + "fc" + std::to_string(i);
      p.add(fc + ".weight", uniform_matrix(size, prev, 1.0 / std::sqrt(prev), rng));
      p.add(fc + ".bias", Matrix::Zero(size, 3));
      if (i + 1 < config.decoder_sizes.size()) {
        const auto theta = filter::init_theta(config.cheb_order, 3, 3, rng);
        for (int o = 0; o < config.cheb_order; ++o) {
          p.add(hand_prefix(hand) + "cheb" + std::to_string(i) + ".theta" + std::to_string(o), theta[o]);
        }
      }
      prev = size;
    }
  }

  dense("camera", c, 3 * config.views);
  p.quantize();
  return p;
}

Parameters init_buffers(const ModelConfig& config) {
  Parameters b;
  for (const char* name : {"fusion.norm1", "fusion.norm2"}) {
    b.add(std::string(name) + ".running_mean", Matrix::Zero(1, config.channels));
    b.add(std::string(name) + ".running_var", Matrix::Ones(1, config.channels));
  }
  return b;
}

FeatureTensor synth_backbone_features(std::uint64_t scene_seed, const ModelConfig& config) {
  const std::int64_t s = config.feature_size;
  FeatureTensor f({config.views, s, s, config.backbone_channels});
  Rng rng(scene_seed);
  for (double& x : f.data) x = uniform(rng, -1.0, 1.0);
  return f;
}

// ---------------------------------------------------------------- forward

Var Bound::operator[](const std::string& name) const {
  const auto it = vars.find(name);
  if (it == vars.end()) throw ArgumentError("no parameter named " + name);
  return it->second;
}

Bound bind(ad::Tape& tape, const Parameters& params, bool trainable) {
  Bound b;
  b.tape = &tape;
  for (int i = 0; i < params.size(); ++i) {
    b.vars[params.names[i]] = trainable ? tape.variable(params.values[i]) : tape.constant(params.values[i]);
  }
  return b;
}

FusionOutput fusion_forward(const Bound& p, const ModelConfig& config, const Context& context,
                            const FeatureTensor& features, Mode mode, Parameters* buffers) {
  const std::int64_t s = config.feature_size;
  if (features.shape != std::vector<std::int64_t>{config.views, s, s, config.backbone_channels}) {
    throw ArgumentError("backbone features must be N x s x s x B as configured");
  }
  features.require_valid("backbone features");
  ad::Tape& tape = *p.tape;
  const int n = config.views;

  auto block = [&](const std::vector<Var>& in, const Matrix& up, int side, const std::string& conv,
                   const std::string& norm) {
    std::vector<Var> convolved;
    // Upsampling and the tap sum act on rows, the weights on columns, so the
    // channel reduction runs first on the small grid.
    for (Var x : in) {
      Var taps = ad::dense_left(up, ad::matmul(x, p[conv + ".weight"]));
      convolved.push_back(ad::shift_sum3x3(taps, 2 * side, 2 * side));
    }
    const Eigen::Index rows = convolved[0].rows();
    Var stacked = ad::relu(normalize(p, norm, ad::vstack(convolved), mode, buffers));
    std::vector<Var> out;
    for (int v = 0; v < n; ++v) out.push_back(ad::slice_rows(stacked, v * rows, rows));
    return out;
  };

  std::vector<Var> views;
  for (int v = 0; v < n; ++v) views.push_back(view_matrix(tape, features, v));
  const int side1 = 2 * config.feature_size - 2;
  auto hidden = block(views, context.upsample_small, config.feature_size, "fusion.conv1", "fusion.norm1");
  FusionOutput out;
  out.f_prime = block(hidden, context.upsample_large, side1, "fusion.conv2", "fusion.norm2");
  for (int v = 0; v < n; ++v) {
    require_finite(out.f_prime[v], "f_prime");
    out.mask.push_back(ad::softmax_cols(linear(p, "fusion.mask", out.f_prime[v])));
    require_finite(out.mask[v], "mask");
  }
  return out;
}

Var fuse_views(const std::vector<Var>& f_prime, const std::vector<Var>& mask) {
  if (f_prime.empty() || f_prime.size() != mask.size()) throw ArgumentError("need matching views");
  std::vector<Var> per_view;
  for (std::size_t v = 0; v < f_prime.size(); ++v) {
    if (mask[v].rows() != f_prime[v].rows()) throw ArgumentError("mask and f' disagree on pixels");
    per_view.push_back(ad::matmul(ad::transpose(mask[v]), f_prime[v]));
  }
  return ad::max_of(per_view);
}

Var make_tokens(Var f_r, const Context& context) {
  return ad::hstack({ad::gather_rows(f_r, context.token_labels), f_r.tape->constant(context.token_positions)});
}

Var transformer_forward(const Bound& p, const ModelConfig& config, Var tokens,
                        std::vector<Eigen::MatrixXd>* attention, std::vector<TraceRow>* trace) {
  const auto widths = config.encoder_widths();
  if (tokens.cols() != widths[0]) throw ArgumentError("tokens must be C+3 wide");
  Var x = tokens;
  for (int blk = 0; blk < config.blocks; ++blk) {
    const int d = widths[blk];
    const int dh = ceil_div(d, config.heads);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < config.layers_per_block; ++l) {
      const std::string pre = layer_prefix(blk, l);
      Var h = ad::layer_norm(x, p[pre + "ln1.gamma"], p[pre + "ln1.beta"]);
      Var q = linear(p, pre + "attn.q", h), k = linear(p, pre + "attn.k", h), v = linear(p, pre + "attn.v", h);
      std::vector<Var> heads;
      for (int i = 0; i < config.heads; ++i) {
        Var qi = ad::slice_cols(q, i * dh, dh), ki = ad::slice_cols(k, i * dh, dh), vi = ad::slice_cols(v, i * dh, dh);
        Var a = ad::softmax_rows(ad::scale(ad::matmul(qi, ad::transpose(ki)), inv_sqrt));
        if (attention) attention->push_back(a.value());
        heads.push_back(ad::matmul(a, vi));
      }
      x = ad::add(x, linear(p, pre + "attn.out", ad::hstack(heads)));
      Var h2 = ad::layer_norm(x, p[pre + "ln2.gamma"], p[pre + "ln2.beta"]);
      x = ad::add(x, linear(p, pre + "ffn.out", ad::gelu(linear(p, pre + "ffn.in", h2))));
    }
    if (trace) trace->push_back({"encoder.block" + std::to_string(blk), {x.rows(), x.cols()}});
    x = linear(p, "encoder.reduce" + std::to_string(blk), x);
    if (trace) trace->push_back({"encoder.reduce" + std::to_string(blk), {x.rows(), x.cols()}});
    require_finite(x, "encoder block " + std::to_string(blk));
  }
  return x;
}

Var decoder_forward(const Bound& p, const ModelConfig& config, const Context& context, Var f_c, int hand,
                    std::vector<TraceRow>* trace) {
  if (f_c.cols() != 3 || f_c.rows() != context.tokens()) throw ArgumentError("decoder expects V' x 3 input");
  if (hand != 0 && hand != 1) throw ArgumentError("hand must be 0 or 1");
  Var x = f_c;
  const std::string pre = hand_prefix(hand);
  for (std::size_t i = 0; i < config.decoder_sizes.size(); ++i) {
    const std::string fc = pre + "fc" + std::to_string(i);
    x = ad::add(ad::matmul(p[fc + ".weight"], x), p[fc + ".bias"]);
    if (i + 1 < config.decoder_sizes.size()) {
      std::vector<Var> theta;
      for (int o = 0; o < config.cheb_order; ++o) {
        theta.push_back(p[pre + "cheb" + std::to_string(i) + ".theta" + std::to_string(o)]);
      }
      x = filter::chebyshev_filter(context.scaled_laplacians[i], theta, x);
    }
    if (trace) trace->push_back({pre + "level" + std::to_string(i), {x.rows(), x.cols()}});
  }
  require_finite(x, "decoder hand " + std::to_string(hand));
  return x;
}

Var camera_forward(const Bound& p, const ModelConfig& config, Var f_r) {
  return ad::reshape(linear(p, "camera", ad::mean_rows(f_r)), config.views, 3);
}

std::vector<losses::CameraParams> cameras_from_raw(const Eigen::MatrixXd& raw) {
  std::vector<losses::CameraParams> cams(raw.rows());
  for (Eigen::Index n = 0; n < raw.rows(); ++n) {
    cams[n].scale = std::exp(raw(n, 0));
    cams[n].translation = raw.row(n).tail<2>().transpose();
  }
  return cams;
}

ForwardResult forward(const Bound& p, const ModelConfig& config, const Context& context,
                      const FeatureTensor& features, Mode mode, Parameters* buffers,
                      std::vector<Eigen::MatrixXd>* attention) {
  ForwardResult r;
  const std::int64_t n = config.views, hw = config.fused_size(), side = hw;
  r.trace.push_back({"f", features.shape});
  r.fusion = fusion_forward(p, config, context, features, mode, buffers);
  r.trace.push_back({"f_prime", {n, side, side, r.fusion.f_prime[0].cols()}});
  r.trace.push_back({"mask", {n, side, side, r.fusion.mask[0].cols()}});
  r.f_r = fuse_views(r.fusion.f_prime, r.fusion.mask);
  r.trace.push_back({"f_double_prime", {n, r.f_r.rows(), r.f_r.cols()}});
  r.trace.push_back({"f_r", {r.f_r.rows(), r.f_r.cols()}});
  r.tokens = make_tokens(r.f_r, context);
  r.trace.push_back({"tokens", {r.tokens.rows(), r.tokens.cols()}});
  r.f_c = transformer_forward(p, config, r.tokens, attention, &r.trace);
  r.trace.push_back({"f_c", {r.f_c.rows(), r.f_c.cols()}});
  for (int hand = 0; hand < 2; ++hand) r.hands[hand] = decoder_forward(p, config, context, r.f_c, hand, &r.trace);
  r.vertices = ad::vstack({r.hands[0], r.hands[1]});
  r.trace.push_back({"output", {r.vertices.rows(), r.vertices.cols()}});
  r.cams = camera_forward(p, config, r.f_r);
  require_finite(r.cams, "camera");
  return r;
}

// ---------------------------------------------------------------- training

ad::Var total_loss(const ModelConfig& config, const Context& context, const ForwardResult& out,
                   const Scene& scene, LossBreakdown* breakdown) {
  const LossWeights& w = config.loss_weights;
  ad::Tape& tape = *out.vertices.tape;
  Var total = tape.constant(Matrix::Zero(1, 1));
  LossBreakdown b;
  auto term = [&](double weight, double* slot, auto make) {
    if (weight == 0) return;
    Var l = make();
    *slot = l.scalar();
    total = ad::add(total, ad::scale(l, weight));
  };
  term(w.mesh, &b.mesh, [&] { return losses::l1_mesh(out.vertices, scene.vertices); });
  term(w.reproj2d, &b.reproj2d, [&] { return losses::reproject_2d(out.vertices, out.cams, scene.points2d); });
  term(w.edge, &b.edge, [&] { return losses::edge(out.vertices, context.edges); });
  term(w.mse, &b.mse, [&] { return losses::mse(out.vertices, scene.vertices); });
  term(w.chamfer, &b.chamfer, [&] { return losses::chamfer(out.vertices, scene.vertices); });
  b.total = total.scalar();
  if (breakdown) *breakdown = b;
  return total;
}

TrainState init_train_state(const ModelConfig& config, const Context& context) {
  TrainState s;
  s.params = init_parameters(config, context, config.seed);
  s.buffers = init_buffers(config);
  for (const auto& v : s.params.values) {
    s.adam.m.push_back(Matrix::Zero(v.rows(), v.cols()));
    s.adam.v.push_back(Matrix::Zero(v.rows(), v.cols()));
  }
  return s;
}

LossBreakdown train_step(TrainState& state, const ModelConfig& config, const Context& context,
                         const Scene& scene, double learning_rate) {
  if (const std::string bad = state.params.first_non_finite(); !bad.empty()) {
    throw NumericalError("non-finite parameter " + bad);
  }
  ad::Tape tape;
  const Bound p = bind(tape, state.params);
  Parameters buffers = state.buffers;
  const ForwardResult out = forward(p, config, context, scene.features, Mode::train, &buffers);
  LossBreakdown losses;
  const Var loss = total_loss(config, context, out, scene, &losses);
  if (!std::isfinite(losses.total)) throw NumericalError("non-finite loss");
  tape.backward(loss);

  AdamState& adam = state.adam;
  ++adam.step;
  const double c1 = 1 - std::pow(adam.beta1, adam.step), c2 = 1 - std::pow(adam.beta2, adam.step);
  std::vector<Matrix> grads(state.params.size());
  for (int i = 0; i < state.params.size(); ++i) {
    const Var v = p[state.params.names[i]];
    grads[i] = v.grad().size() ? v.grad() : Matrix::Zero(v.rows(), v.cols());
    if (!grads[i].allFinite()) throw NumericalError("non-finite gradient for " + state.params.names[i]);
  }
  for (int i = 0; i < state.params.size(); ++i) {
    adam.m[i] = adam.beta1 * adam.m[i] + (1 - adam.beta1) * grads[i];
    adam.v[i] = adam.beta2 * adam.v[i] + (1 - adam.beta2) * grads[i].cwiseAbs2();
    const Matrix step = (adam.m[i] / c1).array() / ((adam.v[i] / c2).array().sqrt() + adam.eps);
    state.params.values[i] -= learning_rate * step;
  }
  state.params.quantize();
  buffers.quantize();
  state.buffers = std::move(buffers);
  return losses;
}

// ---------------------------------------------------------------- checkpoint

void save_checkpoint(const std::string& stem, const ModelConfig& config, const TrainState& state) {
  std::vector<io::NamedTensor> tensors;
  auto put = [&tensors](const std::string& prefix, const Parameters& ps) {
    for (int i = 0; i < ps.size(); ++i) {
      tensors.push_back({prefix + ps.names[i], io::to_file(FeatureTensor::from_matrix(ps.values[i]))});
    }
  };
  put("param/", state.params);
  put("buffer/", state.buffers);
  nlohmann::ordered_json meta;
  meta["kind"] = "checkpoint";
  meta["config"] = config.to_json();
  meta["config_hash"] = config.hash();
  meta["step"] = state.adam.step;
  io::write_bundle(stem, tensors, meta);
}

Checkpoint load_checkpoint(const std::string& stem) {
  const io::Bundle b = io::read_bundle(stem);
  if (b.meta.value("kind", "") != "checkpoint") throw ParseError(stem + ": not a checkpoint", 0);
  Checkpoint c;
  c.config = ModelConfig::from_json(b.meta.at("config"));
  if (c.config.hash() != b.meta.value("config_hash", "")) throw ParseError(stem + ": config hash mismatch", 0);
  c.step = b.meta.value("step", 0);
  for (const auto& nt : b.tensors) {
    const Matrix m = io::from_file(nt.tensor).as_matrix();
    if (nt.name.rfind("param/", 0) == 0) {
      c.params.add(nt.name.substr(6), m);
    } else if (nt.name.rfind("buffer/", 0) == 0) {
      c.buffers.add(nt.name.substr(7), m);
    } else {
      throw ParseError("unexpected tensor " + nt.name, 0);
    }
  }
  return c;
}

}  // namespace sgt::model
