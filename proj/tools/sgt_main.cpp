#include <iostream>

#include <CLI11.hpp>

#include "sgt/commands.hpp"

int main(int argc, char** argv) {
  using namespace sgt::cli;
  CLI::App app{"Spectral graph hand-mesh toolkit"};
  app.require_subcommand(1);
  bool json = false;
  app.add_flag("--json", json, "Machine-readable JSON on stdout");

  ShapeArgs shp;
  auto* shape = app.add_subcommand("shape", "Write a procedural mesh (hand template, icosphere, cube)");
  shape->add_option("kind", shp.kind, "hand|icosphere|cube")->capture_default_str();
  shape->add_option("--subdivisions", shp.subdivisions, "Icosphere subdivisions")->capture_default_str();
  shape->add_option("--size", shp.size, "Icosphere radius or cube side (m)")->capture_default_str();
  shape->add_option("--x", shp.x, "Translation x (m)");
  shape->add_option("--y", shp.y, "Translation y (m)");
  shape->add_option("--z", shp.z, "Translation z (m)");
  shape->add_flag("--mirror", shp.mirror, "Reflect through x = 0 (right -> left hand)");
  shape->add_option("--out", shp.out, "Output OBJ")->required();
  shape->add_flag("--json", json);

  SegmentArgs seg;
  auto* segment = app.add_subcommand("segment", "Spectral segmentation of an OBJ mesh");
  segment->add_option("mesh", seg.mesh, "Input OBJ")->required();
  segment->add_option("--k", seg.k, "Cluster count")->capture_default_str();
  segment->add_option("--seed", seg.seed, "k-means seed")->capture_default_str();
  segment->add_option("--out", seg.out, "Cluster assignment JSON");
  segment->add_flag("--json", json);

  PyramidArgs pyr;
  auto* pyramid = app.add_subcommand("pyramid", "Coarsening hierarchy of an OBJ mesh");
  pyramid->add_option("mesh", pyr.mesh, "Input OBJ")->required();
  pyramid->add_option("--sizes", pyr.sizes, "Ascending level sizes ending at |V|")->delimiter(',')->required();
  pyramid->add_option("--seed", pyr.seed, "Matching-order seed")->capture_default_str();
  pyramid->add_option("--out", pyr.out, "Output stem (.json + .sgtf)");
  pyramid->add_flag("--json", json);

  OverfitArgs fit;
  auto* overfit = app.add_subcommand("overfit", "Train on one synthetic scene");
  overfit->add_option("--config", fit.config, "Model config JSON (default: toy)");
  overfit->add_option("--scene-seed", fit.scene_seed, "Synthetic scene seed")->capture_default_str();
  overfit->add_option("--steps", fit.steps, "Optimizer steps")->capture_default_str();
  overfit->add_option("--lr", fit.learning_rate, "Learning rate override");
  overfit->add_option("--out", fit.out, "Checkpoint stem; log at <stem>.log.jsonl");
  overfit->add_flag("--json", json);

  RefineArgs ref;
  auto* refine = app.add_subcommand("refine", "Collision refinement of source against target");
  refine->add_option("source", ref.source, "Source OBJ (moved)")->required();
  refine->add_option("target", ref.target, "Target OBJ (fixed, watertight)")->required();
  refine->add_option("--arap-weight", ref.arap_weight, "ARAP regularization weight")->capture_default_str();
  refine->add_option("--iters", ref.iters, "Maximum iterations")->capture_default_str();
  refine->add_option("--seed", ref.seed, "Ray direction seed")->capture_default_str();
  refine->add_flag("--self", ref.self_collision, "Also penalize source self-penetration");
  refine->add_option("--out", ref.out, "Refined OBJ");
  refine->add_option("--report", ref.report, "Report JSON (default <out>.report.json)");
  refine->add_flag("--json", json);

  GradcheckArgs gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--module", gc.module, "fusion|transformer|decoder|spectral_filter|losses|camera");
  gradcheck->add_option("--seed", gc.seed, "Instance seed")->capture_default_str();
  gradcheck->add_flag("--json", json);

  OracleArgs orc;
  auto* oracle = app.add_subcommand("oracle", "Brute-force oracle comparisons");
  oracle->add_option("--test", orc.test, "chebyshev|clustering|chamfer|collision")->required();
  oracle->add_option("--seed", orc.seed, "Instance seed")->capture_default_str();
  oracle->add_flag("--json", json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kArgument;
  }

  return guarded(
      [&]() -> int {
        if (*shape) return cmd_shape(shp, std::cout, json);
        if (*segment) return cmd_segment(seg, std::cout, json);
        if (*pyramid) return cmd_pyramid(pyr, std::cout, json);
        if (*overfit) return cmd_overfit(fit, std::cout, json);
        if (*refine) return cmd_refine(ref, std::cout, json);
        if (*gradcheck) return cmd_gradcheck(gc, std::cout, json);
        return cmd_oracle(orc, std::cout, json);
      },
      std::cerr);
}
