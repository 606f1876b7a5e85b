#pragma once

// Config-driven front end for the decompose, correct and benchmark commands.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpmagnus/model_spec.hpp"
#include "cpmagnus/operator_algebra.hpp"

namespace cpmagnus {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitCorrectionImpossible = 3,
  kExitBasisInsufficient = 4,
  kExitIntegrator = 5,
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ToleranceConfig {
  double integrator = 1e-11;
  /// Oscillator only: compare V(T) on the deviation subspace at levels and
  /// levels + 4; a larger change is reported as a truncation warning.
  double truncation = 1e-6;
  bool check_truncation = false;
};

struct ExperimentConfig {
  DrivenModel model;
  std::optional<std::string> preset;
  std::vector<std::string> assumptions;
  std::vector<int> orders;
  int n_periods = 20;
  int samples_per_period = 1;
  std::string initial_state = "ground";
  Matrix rho0;
  std::optional<std::size_t> subspace;
  ToleranceConfig tolerances;
  bool compose = true;
  std::string source;  // raw config text, echoed in metadata
};

/// Parses TOML text. Relative file references resolve against base_dir.
ExperimentConfig parse_config(const std::string& text,
                              const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

struct OmegaSweep {
  double lo = 1.0;
  double hi = 1.0;
  int steps = 1;

  /// "lo:hi:steps".
  static OmegaSweep parse(const std::string& text);
  /// Linearly spaced values from lo to hi inclusive.
  std::vector<double> values() const;
};

nlohmann::json matrix_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json model_json(const ExperimentConfig& cfg);

/// Reports; throw BasisInsufficient / IntegratorFailure on failure.
nlohmann::json decompose_report(const ExperimentConfig& cfg);

struct CorrectReport {
  nlohmann::json report;
  bool impossible = false;  // some order raised CorrectionImpossible
};
CorrectReport correct_report(const ExperimentConfig& cfg);

struct BenchmarkReport {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  nlohmann::json metadata;
};
BenchmarkReport benchmark_report(const ExperimentConfig& cfg);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows);

struct RunRequest {
  std::string command;  // decompose | correct | benchmark
  std::filesystem::path config;
  std::filesystem::path out;
  std::vector<int> orders;  // overrides the config when nonempty
  std::optional<std::string> omega_sweep;
};

/// Runs one command, writes its files under request.out and returns the
/// process exit code. Diagnostics go to err.
int run_command(const RunRequest& request, std::ostream& err);

}  // namespace cpmagnus
