#pragma once

// Run configuration: flat `key = value` text with `#` comments. A `[section]`
// line prefixes the following keys with `section.`; dotted keys may also be
// written directly.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hdmix/contact.hpp"
#include "hdmix/errors.hpp"
#include "hdmix/mesh.hpp"
#include "hdmix/optimize.hpp"
#include "hdmix/saddle.hpp"

namespace hdmix {

enum class Command { Solve, StudyConvergence, Optimize, Verify, DemoContact };

const char* command_name(Command c);
std::optional<Command> parse_command(const std::string& s);

struct RunConfig {
  Command command = Command::Solve;

  // Mesh: a file, or the rectangle generator.
  std::optional<std::filesystem::path> mesh_file;
  int nx = 8, ny = 8;
  double width = 1.0, height = 1.0;
  RectBoundary sides;

  Material material;
  Eigen::Vector2d body{0.0, -1.0};
  Eigen::Vector2d traction{1.0, 0.0};
  std::string theta = "ramp";  // constant | ramp (t / T) | sine (sin(pi t / 2T))
  std::string zeta = "ramp";
  double g = 0.1;

  double T = 1.0;
  int N = 20;

  UzawaOptions uzawa;

  // study-convergence
  std::vector<int> schedule{1, 2, 4, 8, 16, 32};
  std::vector<double> probe_times;  // empty: {T/2, T}
  std::string perturb = "all";      // all | g | none

  // optimize
  std::string cost = "tracking";  // tracking | misfit
  double c1 = 1.0, c2 = 1.0, c3 = 0.0;
  ParameterPoint target{1.2, 0.6, 1.5, 1.0, 0.8, 0.12};
  ParameterBox box{ParameterPoint{0.5, 0.25, 0.5, 0.5, 0.5, 0.05}, ParameterPoint{2.0, 1.0, 2.0, 1.5, 1.5, 0.2}, 1e-3};
  int budget = 300;
  int scan_points = 4;
  std::optional<double> cost_time;  // unset: T

  // verify
  int samples = 100;

  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 1;

  /// Normalized `key = value` lines, in key order, for the manifest.
  std::vector<std::pair<std::string, std::string>> echo;

  TimeGrid grid() const { return TimeGrid::from_horizon(T, N); }
  Mesh build_mesh() const;
  ContactModel model() const;
  ModelTemplate model_template() const;
};

/// Carries every problem found in the text, each prefixed by its line.
class ConfigError : public ValidationError {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

/// Relative mesh paths resolve against base_dir. Throws ConfigError.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

}  // namespace hdmix
