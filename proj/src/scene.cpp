#include <cmath>

#include <Eigen/Geometry>

#include "sgt/errors.hpp"
#include "sgt/model.hpp"
#include "sgt/random.hpp"

namespace sgt::model {

Scene synth_scene(const ModelConfig& config, const Context& context, std::uint64_t scene_seed, double noise) {
  if (noise < 0) throw ArgumentError("noise must be non-negative");
  Scene scene;
  scene.features = synth_backbone_features(scene_seed, config);
  // A separate stream so the pose does not depend on the feature size.
  Rng rng(scene_seed ^ 0x9e3779b97f4a7c15ull);
  const int v = context.vertices_per_hand();
  scene.vertices.resize(2 * v, 3);
  for (int hand = 0; hand < 2; ++hand) {
    const Points& tpl = context.hands[hand].positions;
    const Eigen::RowVector3d center = tpl.colwise().mean();
    Eigen::Vector3d axis(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    if (axis.norm() < 1e-9) axis = Eigen::Vector3d::UnitZ();
    const Eigen::Matrix3d r = Eigen::AngleAxisd(uniform(rng, -0.25, 0.25), axis.normalized()).toRotationMatrix();
    const Eigen::RowVector3d shift(uniform(rng, -0.01, 0.01), uniform(rng, -0.01, 0.01), uniform(rng, -0.01, 0.01));
    Points moved = ((tpl.rowwise() - center) * r.transpose()).rowwise() + (center + shift);
    if (noise > 0) {
      for (Eigen::Index i = 0; i < moved.size(); ++i) moved.data()[i] += uniform(rng, -noise, noise);
    }
    scene.vertices.middleRows(hand * v, v) = moved;
  }
  for (int n = 0; n < config.views; ++n) {
    losses::CameraParams cam;
    cam.scale = uniform(rng, 0.8, 1.2);
    cam.translation = Eigen::Vector2d(uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05));
    scene.cameras.push_back(cam);
    scene.points2d.push_back(losses::project(scene.vertices, cam));
  }
  return scene;
}

}  // namespace sgt::model
