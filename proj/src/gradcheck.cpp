#include "sgt/gradcheck.hpp"

#include <algorithm>
#include <numeric>

#include "sgt/errors.hpp"
#include "sgt/filter.hpp"
#include "sgt/losses.hpp"
#include "sgt/model.hpp"
#include "sgt/random.hpp"

namespace sgt::gradcheck {
namespace {

struct Evaluation {
  double value;
  std::uint64_t branches;
};

Evaluation evaluate(const Builder& build, const std::vector<ad::Matrix>& inputs, const ad::Matrix& weights) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.constant(m));
  const ad::Var out = build(tape, vars);
  return {out.value().cwiseProduct(weights).sum(), tape.branch_signature()};
}

}  // namespace

Report check_report(const Builder& build, const std::vector<ad::Matrix>& inputs, const Options& options) {
  Rng rng(options.seed);
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.variable(m));
  const ad::Var out = build(tape, vars);
  const std::uint64_t base_branches = tape.branch_signature();
  ad::Matrix weights(out.rows(), out.cols());
  for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = uniform(rng, -1.0, 1.0);
  const ad::Var loss = ad::sum(ad::hadamard(out, tape.constant(weights)));
  tape.backward(loss);

  Report report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Eigen::Index n = inputs[k].size();
    ad::Matrix analytic = vars[k].grad();
    if (analytic.size() == 0) analytic = ad::Matrix::Zero(inputs[k].rows(), inputs[k].cols());

    std::vector<Eigen::Index> probe(n);
    std::iota(probe.begin(), probe.end(), 0);
    if (n > options.max_entries) {
      for (Eigen::Index i = n - 1; i > 0; --i) {
        std::swap(probe[i], probe[uniform_index(rng, static_cast<int>(i + 1))]);
      }
      probe.resize(options.max_entries);
    }

    double max_diff = 0.0, max_a = 0.0, max_n = 0.0;
    std::vector<ad::Matrix> shifted = inputs;
    for (Eigen::Index idx : probe) {
      const double orig = inputs[k].data()[idx];
      shifted[k].data()[idx] = orig + options.h;
      const Evaluation plus = evaluate(build, shifted, weights);
      shifted[k].data()[idx] = orig - options.h;
      const Evaluation minus = evaluate(build, shifted, weights);
      shifted[k].data()[idx] = orig;
      if (plus.branches != base_branches || minus.branches != base_branches) {
        ++report.skipped;
        continue;
      }
      ++report.probed;
      const double numeric = (plus.value - minus.value) / (2 * options.h);
      const double a = analytic.data()[idx];
      max_diff = std::max(max_diff, std::abs(a - numeric));
      max_a = std::max(max_a, std::abs(a));
      max_n = std::max(max_n, std::abs(numeric));
    }
    report.max_relative_error =
        std::max(report.max_relative_error, max_diff / std::max({max_a, max_n, options.floor}));
  }
  return report;
}

double check(const Builder& build, const std::vector<ad::Matrix>& inputs, const Options& options) {
  return check_report(build, inputs, options).max_relative_error;
}

namespace {

using ad::Matrix;
using ad::Var;

// Small configuration exercising every layer kind in well under a second.
model::ModelConfig tiny_config(std::uint64_t seed) {
  model::ModelConfig c;
  c.views = 2;
  c.clusters = 3;
  c.channels = 4;
  c.backbone_channels = 5;
  c.feature_size = 3;
  c.blocks = 2;
  c.layers_per_block = 1;
  c.heads = 3;
  c.decoder_sizes = {11, 21, 42};
  c.template_kind = "icosphere";
  c.icosphere_subdivisions = 1;
  c.seed = seed;
  return c;
}

struct Harness {
  model::ModelConfig config;
  model::Context context;
  model::Parameters params;
  FeatureTensor features;
  Options options;
  std::vector<Result>* results;
  std::string module;

  // Builder that swaps the named parameters for the checked inputs.
  template <typename F>
  void params_op(const std::string& op, const std::vector<std::string>& names, F body,
                 std::vector<Matrix> extra = {}) {
    std::vector<Matrix> inputs;
    for (const auto& n : names) inputs.push_back(params.at(n));
    const std::size_t n_params = inputs.size();
    for (auto& e : extra) inputs.push_back(std::move(e));
    Builder b = [&, names, n_params](ad::Tape& tape, const std::vector<Var>& v) {
      model::Bound p = model::bind(tape, params, false);
      for (std::size_t i = 0; i < n_params; ++i) p.vars[names[i]] = v[i];
      std::vector<Var> rest(v.begin() + static_cast<std::ptrdiff_t>(n_params), v.end());
      return body(p, rest);
    };
    plain_op(op, b, inputs);
  }

  void plain_op(const std::string& op, const Builder& b, const std::vector<Matrix>& inputs) {
    const Report r = check_report(b, inputs, options);
    results->push_back({module, op, r.max_relative_error, r.probed, r.skipped, 1e-4});
  }
};

Matrix rand(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -scale, scale);
  return m;
}

void fusion_suite(Harness& h) {
  auto f_prime = [&h](const model::Bound& p, const std::vector<Var>&) {
    model::Parameters buffers = model::init_buffers(h.config);
    auto out = model::fusion_forward(p, h.config, h.context, h.features, model::Mode::train, &buffers);
    return ad::vstack(out.f_prime);
  };
  h.params_op("conv1", {"fusion.conv1.weight"}, f_prime);
  h.params_op("norm1", {"fusion.norm1.gamma", "fusion.norm1.beta"}, f_prime);
  h.params_op("conv2+norm2", {"fusion.conv2.weight", "fusion.norm2.gamma", "fusion.norm2.beta"}, f_prime);
  h.params_op("mask_softmax", {"fusion.mask.weight", "fusion.mask.bias"},
              [&h](const model::Bound& p, const std::vector<Var>&) {
                model::Parameters buffers = model::init_buffers(h.config);
                auto out = model::fusion_forward(p, h.config, h.context, h.features, model::Mode::train, &buffers);
                return ad::vstack(out.mask);
              });
  Rng rng(h.options.seed + 1);
  const int hw = h.config.fused_size() * h.config.fused_size();
  h.plain_op("fuse_views",
             [](ad::Tape&, const std::vector<Var>& v) {
               return model::fuse_views({v[0], v[1]}, {ad::softmax_cols(v[2]), ad::softmax_cols(v[3])});
             },
             {rand(hw, 4, rng), rand(hw, 4, rng), rand(hw, 3, rng), rand(hw, 3, rng)});
}

void transformer_suite(Harness& h) {
  Rng rng(h.options.seed + 2);
  const int width = h.config.channels + 3;
  const Matrix tokens = rand(h.context.tokens(), width, rng);
  auto encode = [&h](const model::Bound& p, const std::vector<Var>& v) {
    return model::transformer_forward(p, h.config, v[0]);
  };
  const std::string l0 = "encoder.block0.layer0.";
  h.params_op("attention",
              {l0 + "attn.q.weight", l0 + "attn.q.bias", l0 + "attn.k.weight", l0 + "attn.k.bias",
               l0 + "attn.v.weight", l0 + "attn.v.bias", l0 + "attn.out.weight", l0 + "attn.out.bias"},
              encode, {tokens});
  h.params_op("layer_norm+ffn",
              {l0 + "ln1.gamma", l0 + "ln1.beta", l0 + "ln2.gamma", l0 + "ln2.beta", l0 + "ffn.in.weight",
               l0 + "ffn.in.bias", l0 + "ffn.out.weight", l0 + "ffn.out.bias"},
              encode, {tokens});
  h.params_op("width_reducers",
              {"encoder.reduce0.weight", "encoder.reduce0.bias", "encoder.reduce1.weight", "encoder.reduce1.bias"},
              encode, {tokens});
}

void decoder_suite(Harness& h) {
  Rng rng(h.options.seed + 3);
  const Matrix f_c = rand(h.context.tokens(), 3, rng);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < h.config.decoder_sizes.size(); ++i) {
    names.push_back("decoder.hand0.fc" + std::to_string(i) + ".weight");
    names.push_back("decoder.hand0.fc" + std::to_string(i) + ".bias");
  }
  h.params_op("upsample_fc", names,
              [&h](const model::Bound& p, const std::vector<Var>& v) {
                return model::decoder_forward(p, h.config, h.context, v[0], 0);
              },
              {f_c});
}

void filter_suite(Harness& h) {
  Rng rng(h.options.seed + 4);
  const Matrix f_c = rand(h.context.tokens(), 3, rng);
  std::vector<std::string> names;
  for (std::size_t i = 0; i + 1 < h.config.decoder_sizes.size(); ++i)
    for (int o = 0; o < h.config.cheb_order; ++o)
      names.push_back("decoder.hand1.cheb" + std::to_string(i) + ".theta" + std::to_string(o));
  h.params_op("chebyshev_theta", names, [&h](const model::Bound& p, const std::vector<Var>& v) {
    return model::decoder_forward(p, h.config, h.context, v[0], 1);
  }, {f_c});
  const auto& l = h.context.scaled_laplacians[1];
  filter::Theta theta = filter::init_theta(h.config.cheb_order, 3, 3, rng);
  std::vector<Matrix> inputs{rand(l.size(), 3, rng)};
  for (auto& t : theta) inputs.push_back(t);
  h.plain_op("chebyshev_signal",
             [l](ad::Tape&, const std::vector<Var>& v) {
               return filter::chebyshev_filter(l, std::vector<Var>(v.begin() + 1, v.end()), v[0]);
             },
             inputs);
}

void losses_suite(Harness& h) {
  Rng rng(h.options.seed + 5);
  const int n = 2 * h.context.vertices_per_hand();
  Points gt = rand(n, 3, rng, 0.1);
  const Matrix pred = gt + rand(n, 3, rng, 0.02);
  losses::Points2d gt2d{rand(n, 2, rng, 0.1), rand(n, 2, rng, 0.1)};
  const auto edges = h.context.edges;
  h.plain_op("l1_mesh", [gt](ad::Tape&, const std::vector<Var>& v) { return losses::l1_mesh(v[0], gt); }, {pred});
  h.plain_op("reproject_2d",
             [gt2d](ad::Tape&, const std::vector<Var>& v) { return losses::reproject_2d(v[0], v[1], gt2d); },
             {pred, rand(2, 3, rng, 0.2)});
  h.plain_op("edge", [edges](ad::Tape&, const std::vector<Var>& v) { return losses::edge(v[0], edges); },
             {pred});
  h.plain_op("mse", [gt](ad::Tape&, const std::vector<Var>& v) { return losses::mse(v[0], gt); }, {pred});
  h.plain_op("chamfer", [gt](ad::Tape&, const std::vector<Var>& v) { return losses::chamfer(v[0], gt); }, {pred});
}

void camera_suite(Harness& h) {
  Rng rng(h.options.seed + 6);
  h.params_op("camera_head", {"camera.weight", "camera.bias"},
              [&h](const model::Bound& p, const std::vector<Var>& v) {
                return ad::exp(model::camera_forward(p, h.config, v[0]));
              },
              {rand(h.config.clusters, h.config.channels, rng)});
}

}  // namespace

std::vector<std::string> module_names() {
  return {"fusion", "transformer", "decoder", "spectral_filter", "losses", "camera"};
}

std::vector<Result> run_suite(const std::string& module, std::uint64_t seed) {
  const auto names = module_names();
  if (!module.empty() && std::find(names.begin(), names.end(), module) == names.end()) {
    throw ArgumentError("unknown gradcheck module " + module);
  }
  std::vector<Result> results;
  Harness h;
  h.config = tiny_config(seed);
  h.context = model::build_context(h.config);
  h.params = model::init_parameters(h.config, h.context, seed);
  // Nonzero biases and norm affine terms so their paths are exercised.
  Rng rng(seed ^ 0xb1a5ull);
  for (int i = 0; i < h.params.size(); ++i) {
    Matrix& v = h.params.values[i];
    if (h.params.names[i].find("bias") != std::string::npos || h.params.names[i].find("beta") != std::string::npos) {
      v = rand(v.rows(), v.cols(), rng, 0.1);
    }
  }
  h.features = model::synth_backbone_features(seed, h.config);
  h.options.seed = seed;
  h.results = &results;

  using Suite = void (*)(Harness&);
  const std::vector<std::pair<std::string, Suite>> suites{
      {"fusion", fusion_suite},   {"transformer", transformer_suite}, {"decoder", decoder_suite},
      {"spectral_filter", filter_suite}, {"losses", losses_suite}, {"camera", camera_suite}};
  for (const auto& [name, suite] : suites) {
    if (!module.empty() && module != name) continue;
    h.module = name;
    suite(h);
  }
  return results;
}

}  // namespace sgt::gradcheck
