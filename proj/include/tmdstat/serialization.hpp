#pragma once

#include <iosfwd>
#include <json.hpp>
#include <string>
#include <vector>

#include "tmdstat/calibration.hpp"
#include "tmdstat/detector_model.hpp"
#include "tmdstat/distributions.hpp"
#include "tmdstat/inversion.hpp"
#include "tmdstat/montecarlo.hpp"
#include "tmdstat/nonclassicality.hpp"
#include "tmdstat/statistics.hpp"

namespace tmdstat::io {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// Distributions: a bare JSON array, or an object with a "rho" array.
json to_json(const PhotonDistribution& p);
PhotonDistribution distribution_from_json(const json& j);
/// CSV with a single `rho_n` column.
void write_distribution_column_csv(std::ostream& os, const PhotonDistribution& p);
/// CSV with header `n,rho`.
void write_distribution_csv(std::ostream& os, std::span<const double> rho);
/// Reads either CSV layout. Negative entries yield a quasi-distribution.
PhotonDistribution read_distribution_csv(std::istream& is);

json to_json(const LossMatrix& l);
json to_json(const ConvolutionMatrix& c);
json to_json(const TransferMatrix& t);
void write_matrix_csv(std::ostream& os, const Matrix& m);

json to_json(const CountHistogram& h);
CountHistogram histogram_from_json(const json& j);
/// CSV with header `clicks,count`.
void write_histogram_csv(std::ostream& os, const CountHistogram& h);
CountHistogram read_histogram_csv(std::istream& is, TriggerLabel trigger = kUnconditioned);

json to_json(const EfficiencyEstimate& e);
json to_json(const CalibrationReport& r);
json to_json(const InversionResult& r);
json to_json(const NonclassicalityReport& r);
void write_b_sweep_csv(std::ostream& os, const std::vector<double>& b);

json to_json(const ExperimentConfig& c);
/// Validates field by field; throws ConfigError naming the JSON pointer.
/// `base` is prefixed to every pointer (e.g. "" for a bare experiment config).
ExperimentConfig experiment_config_from_json(const json& j, const std::string& base = "");
json to_json(const SimulationOutput& s);

/// Reads a whole file; throws Error with the path on failure.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace tmdstat::io
