#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "dnnopt/device_world.hpp"
#include "dnnopt/learn_to_optimize.hpp"
#include "dnnopt/mlp.hpp"
#include "dnnopt/surrogate.hpp"

namespace dnnopt {

// JSON text for trained models and fleets. Doubles are written with enough
// digits to reload bit-identically. Parse failures throw Error(kIo).
std::string to_json(const Mlp& net);
std::string to_json(const MlpRegressor& model);
std::string to_json(const PerformancePredictors& p);
std::string to_json(const OptimizerNetwork& net);
std::string to_json(const DeviceFeatures& d);
std::string to_json(const Fleet& fleet);

Mlp mlp_from_json(std::string_view text);
MlpRegressor regressor_from_json(std::string_view text);
PerformancePredictors predictors_from_json(std::string_view text);
OptimizerNetwork optimizer_from_json(std::string_view text);
DeviceFeatures device_from_json(std::string_view text);
Fleet fleet_from_json(std::string_view text);

std::string read_text(const std::filesystem::path& path);
// Creates parent directories as needed.
void write_text(const std::filesystem::path& path, std::string_view text);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// Comma-separated, LF-terminated rows with a fixed header.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

  void row(const std::vector<std::string>& fields);
  std::size_t columns() const noexcept { return header_.size(); }

 private:
  std::ofstream out_;
  std::vector<std::string> header_;
};

std::string csv_escape(std::string_view field);

}  // namespace dnnopt
