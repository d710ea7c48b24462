#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tmdstat/calibration.hpp"
#include "tmdstat/errors.hpp"
#include "tmdstat/inversion.hpp"
#include "tmdstat/montecarlo.hpp"
#include "tmdstat/nonclassicality.hpp"
#include "tmdstat/serialization.hpp"

namespace tmdstat {

struct AnalysisOptions {
  EmOptions em{};
  double sigma_threshold = kDefaultSigmaThreshold;
  std::optional<int> target_fock;  ///< defaults to the trigger label
  double max_condition = kDefaultMaxCondition;
  bool direct_diagnostic = true;
};

struct PipelineConfig {
  ExperimentConfig experiment;
  AnalysisOptions analysis;
};

/// A stage failed. `stage` is one of simulate, calibrate, invert, analyze.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct Warning {
  std::string code;  ///< empty_herald, inconsistent_efficiency, negativity, not_converged, ...
  std::string message;
  bool strict = false;  ///< counts toward the strict-mode exit code
};

struct PipelineResult {
  SimulationOutput simulation;
  std::optional<CalibrationReport> calibration;
  std::optional<InversionResult> em;
  std::optional<InversionResult> direct;
  std::string direct_error;
  int target_fock = 1;
  std::optional<double> fidelity;
  std::optional<NonclassicalityReport> nonclassicality;
  std::vector<Warning> warnings;

  bool has_strict_warning() const;
};

/// The experiment fields at the top level plus an optional "analysis" object.
PipelineConfig pipeline_config_from_json(const io::json& j);
io::json to_json(const AnalysisOptions& a);
io::json to_json(const PipelineConfig& c);

/// Analysis options taken from the "analysis" object only (`ptr` is its pointer).
AnalysisOptions analysis_options_from_json(const io::json& j, const std::string& ptr = "/analysis");

/// Warnings derived from a calibration report (inconsistency, negative resolved statistics).
std::vector<Warning> calibration_warnings(const CalibrationReport& r);

/// Simulate, calibrate, invert with the calibrated efficiency, analyze.
/// Throws StageError naming the failing stage.
PipelineResult run_pipeline(const PipelineConfig& config, int threads = 1);

/// Report document. `timestamp` goes into provenance.generated_at only.
io::json pipeline_report(const PipelineConfig& config, const PipelineResult& r, const std::string& timestamp);

/// Provenance block shared by every file the tools write.
io::json provenance(std::uint64_t seed, const std::string& timestamp);

/// Current UTC time, ISO 8601.
std::string utc_timestamp();

const char* tool_version();

}  // namespace tmdstat
