#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgt/autodiff.hpp"
#include "sgt/graph.hpp"
#include "sgt/losses.hpp"
#include "sgt/mesh.hpp"
#include "sgt/pyramid.hpp"
#include "sgt/tensor.hpp"

namespace sgt::model {

struct LossWeights {
  double mesh = 1.0;
  double reproj2d = 1.0;
  double mse = 0.0;
  double edge = 1.0;
  double chamfer = 0.0;
};

struct ModelConfig {
  int views = 2;                  // N
  int clusters = 7;               // K
  int channels = 256;             // C
  int backbone_channels = 2048;
  int feature_size = 7;           // backbone grid is feature_size^2
  int blocks = 3;                 // encoder blocks, each followed by a width reducer
  int layers_per_block = 4;
  int heads = 3;
  int ffn_multiplier = 2;
  std::vector<int> decoder_sizes{617, 1234, 2468, 4023};
  int cheb_order = 3;
  /// "hand" (procedural 4023-vertex template) or "icosphere".
  std::string template_kind = "hand";
  int icosphere_subdivisions = 2;
  double icosphere_radius = 0.05;
  int subsample_factor = 10;
  LossWeights loss_weights;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  /// Paper-scale settings (C=256, K=7, 3 blocks, hand template).
  static ModelConfig full();
  /// Desk-scale overfit settings: 162-vertex icosphere hands, C=32, 2 blocks.
  static ModelConfig toy();

  /// Throws ArgumentError on inconsistent settings.
  void validate() const;
  /// Token widths entering each block: C+3 then ceiling halving.
  std::vector<int> encoder_widths() const;
  /// Spatial side of f' after the two upsample + valid-conv blocks.
  int fused_size() const { return 4 * feature_size - 6; }

  nlohmann::ordered_json to_json() const;
  /// Missing keys keep their defaults; throws ParseError on bad types.
  static ModelConfig from_json(const nlohmann::json& j);
  /// FNV-1a over the canonical JSON dump, as 16 hex digits.
  std::string hash() const;
};

/// Ordered named tensors. Values are kept representable in float32 so that
/// checkpoints round-trip exactly.
struct Parameters {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> values;

  int size() const { return static_cast<int>(names.size()); }
  int index(const std::string& name) const;  // -1 if absent
  const Eigen::MatrixXd& at(const std::string& name) const;
  Eigen::MatrixXd& at(const std::string& name);
  void add(const std::string& name, Eigen::MatrixXd value);
  void quantize();
  std::int64_t scalar_count() const;
  /// Name of the first tensor holding a NaN or infinity, empty if none.
  std::string first_non_finite() const;
};

/// Template meshes and everything precomputed from them.
struct Context {
  mesh::TriMesh hands[2];                 // right, left
  graph::MeshGraph hand_graph;            // connectivity shared by both hands
  Points token_positions;                 // V' x 3, right tokens first
  std::vector<int> token_labels;          // cluster per token
  std::vector<int> hand_labels;           // cluster per full-resolution vertex
  pyramid::GraphPyramid pyramid;          // levels sized by decoder_sizes
  std::vector<graph::Laplacian> scaled_laplacians;  // one per filtered level
  std::vector<graph::Edge> edges;         // both hands, left offset by V
  Eigen::MatrixXd upsample_small;         // bilinear x2 on the backbone grid
  Eigen::MatrixXd upsample_large;         // bilinear x2 on the first conv output

  int vertices_per_hand() const { return hand_graph.num_vertices(); }
  int tokens() const { return static_cast<int>(token_positions.rows()); }
};

Context build_context(const ModelConfig& config);

/// Bilinear x2 resampling of an h x w grid with half-pixel centers, as a
/// (2h*2w) x (h*w) matrix acting on row-major pixels.
Eigen::MatrixXd bilinear_upsample_matrix(int h, int w);

Parameters init_parameters(const ModelConfig& config, const Context& context, std::uint64_t seed);
/// Normalization running statistics (mean 0, variance 1).
Parameters init_buffers(const ModelConfig& config);

/// Deterministic pseudo-random N x s x s x B features in [-1, 1].
FeatureTensor synth_backbone_features(std::uint64_t scene_seed, const ModelConfig& config);

enum class Mode { train, eval };

/// Named shape recorded by a forward pass.
struct TraceRow {
  std::string name;
  std::vector<std::int64_t> shape;
};

/// Parameters placed on a tape.
struct Bound {
  ad::Tape* tape = nullptr;
  std::map<std::string, ad::Var> vars;
  ad::Var operator[](const std::string& name) const;
};

/// Every parameter becomes a tape variable when `trainable`, else a constant.
Bound bind(ad::Tape& tape, const Parameters& params, bool trainable = true);

struct FusionOutput {
  std::vector<ad::Var> f_prime;  // per view, (H W) x C
  std::vector<ad::Var> mask;     // per view, (H W) x K
};

/// Two (bilinear x2, 3x3 valid conv, channel norm, ReLU) blocks over all
/// views, then K 1x1 filters and a spatial softmax. In train mode the batch
/// statistics update `buffers` with momentum 0.1 when given.
FusionOutput fusion_forward(const Bound& p, const ModelConfig& config, const Context& context,
                            const FeatureTensor& features, Mode mode, Parameters* buffers);

/// f''_n = M_nᵀ f'_n, then the elementwise max over views.
ad::Var fuse_views(const std::vector<ad::Var>& f_prime, const std::vector<ad::Var>& mask);

/// Region features broadcast to tokens and concatenated with positions.
ad::Var make_tokens(ad::Var f_r, const Context& context);

/// Encoder blocks with width reducers; ends with the projection to 3.
/// Attention maps are appended to `attention` when non-null.
ad::Var transformer_forward(const Bound& p, const ModelConfig& config, ad::Var tokens,
                            std::vector<Eigen::MatrixXd>* attention = nullptr,
                            std::vector<TraceRow>* trace = nullptr);

/// Fully-connected upsampling and Chebyshev filtering for hand 0 or 1.
ad::Var decoder_forward(const Bound& p, const ModelConfig& config, const Context& context, ad::Var f_c,
                        int hand, std::vector<TraceRow>* trace = nullptr);

/// N x 3 raw camera rows (log scale, tx, ty) from the pooled region features.
ad::Var camera_forward(const Bound& p, const ModelConfig& config, ad::Var f_r);
std::vector<losses::CameraParams> cameras_from_raw(const Eigen::MatrixXd& raw);

struct ForwardResult {
  FusionOutput fusion;
  ad::Var f_r, tokens, f_c, cams;
  ad::Var hands[2];
  ad::Var vertices;  // both hands stacked, 2V x 3
  std::vector<TraceRow> trace;
};

ForwardResult forward(const Bound& p, const ModelConfig& config, const Context& context,
                      const FeatureTensor& features, Mode mode, Parameters* buffers,
                      std::vector<Eigen::MatrixXd>* attention = nullptr);

/// Synthetic ground truth: rigidly moved template hands seen by random weak
/// perspective cameras.
struct Scene {
  FeatureTensor features;
  Points vertices;
  losses::Points2d points2d;
  std::vector<losses::CameraParams> cameras;
};

Scene synth_scene(const ModelConfig& config, const Context& context, std::uint64_t scene_seed,
                  double noise = 0.0);

struct LossBreakdown {
  double total = 0, mesh = 0, reproj2d = 0, edge = 0, mse = 0, chamfer = 0;
};

/// Weighted sum of the enabled losses on the tape.
ad::Var total_loss(const ModelConfig& config, const Context& context, const ForwardResult& out,
                   const Scene& scene, LossBreakdown* breakdown);

struct AdamState {
  std::vector<Eigen::MatrixXd> m, v;
  int step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct TrainState {
  Parameters params;
  Parameters buffers;
  AdamState adam;
};

TrainState init_train_state(const ModelConfig& config, const Context& context);

/// One Adam step on the weighted loss. Returns the losses before the update.
/// Throws NumericalError naming the first non-finite tensor.
LossBreakdown train_step(TrainState& state, const ModelConfig& config, const Context& context,
                         const Scene& scene, double learning_rate);

/// `<stem>.json` (config, hash, step) plus `<stem>.sgtf`.
void save_checkpoint(const std::string& stem, const ModelConfig& config, const TrainState& state);
struct Checkpoint {
  ModelConfig config;
  Parameters params;
  Parameters buffers;
  int step = 0;
};
/// Throws ParseError if the stored hash does not match the stored config.
Checkpoint load_checkpoint(const std::string& stem);

}  // namespace sgt::model
