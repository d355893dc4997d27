#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace sgt::cli {

enum ExitCode : int { kOk = 0, kParse = 2, kArgument = 3, kNumeric = 4, kVerification = 5 };

/// Runs `body` and maps library exceptions to exit codes, printing the
/// message on `err`. Structural errors count as argument errors.
int guarded(const std::function<int()>& body, std::ostream& err);

struct ShapeArgs {
  std::string kind = "hand";  // hand | icosphere | cube
  int subdivisions = 3;
  double size = 0.05;  // icosphere radius or cube side, meters
  double x = 0, y = 0, z = 0;
  bool mirror = false;
  std::string out;
};
/// Writes a procedural mesh as OBJ.
int cmd_shape(const ShapeArgs& a, std::ostream& out, bool json);

struct SegmentArgs {
  std::string mesh;
  int k = 7;
  std::uint64_t seed = 0;
  std::string out;
};
int cmd_segment(const SegmentArgs& a, std::ostream& out, bool json);

struct PyramidArgs {
  std::string mesh;
  std::vector<int> sizes;
  std::uint64_t seed = 0;
  std::string out;  // stem
};
int cmd_pyramid(const PyramidArgs& a, std::ostream& out, bool json);

struct OverfitArgs {
  /// Model config JSON; the toy config when empty.
  std::string config;
  std::uint64_t scene_seed = 0;
  int steps = 500;
  std::string out;  // checkpoint stem; the log goes to <out>.log.jsonl
  /// Overrides the config's learning rate when positive.
  double learning_rate = 0.0;
};
int cmd_overfit(const OverfitArgs& a, std::ostream& out, bool json);

struct RefineArgs {
  std::string source, target;
  double arap_weight = 1.0;
  int iters = 200;
  std::uint64_t seed = 0;
  bool self_collision = false;
  std::string out;     // refined OBJ
  std::string report;  // defaults to <out>.report.json
};
int cmd_refine(const RefineArgs& a, std::ostream& out, bool json);

struct GradcheckArgs {
  std::string module;  // empty = all
  std::uint64_t seed = 0;
};
int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, bool json);

struct OracleArgs {
  std::string test;  // chebyshev | clustering | chamfer | collision
  std::uint64_t seed = 0;
};
int cmd_oracle(const OracleArgs& a, std::ostream& out, bool json);

}  // namespace sgt::cli
