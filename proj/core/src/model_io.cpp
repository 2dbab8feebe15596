#include "dnnopt/model_io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "dnnopt/error.hpp"

namespace dnnopt {

using nlohmann::json;

namespace {

constexpr const char* kMlpFormat = "dnnopt.mlp/1";
constexpr const char* kOptimizerFormat = "dnnopt.optimizer/1";

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json parse(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("malformed JSON: ") + e.what());
  }
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("invalid ") + what + ": " + e.what());
  }
}

json mlp_json(const Mlp& net) {
  json j;
  j["format"] = kMlpFormat;
  j["layer_sizes"] = net.layer_sizes();
  j["hidden_activation"] = to_string(net.hidden_activation());
  j["output_activation"] = to_string(net.output_activation());
  j["parameters"] = net.parameters();
  return j;
}

Mlp mlp_from(const json& j) {
  if (j.at("format").get<std::string>() != kMlpFormat) {
    throw Error(ErrorCode::kIo, "unsupported network format");
  }
  const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
  Mlp net = Mlp::zeros(sizes, activation_from_string(j.at("hidden_activation").get<std::string>()),
                       activation_from_string(j.at("output_activation").get<std::string>()));
  const auto params = j.at("parameters").get<std::vector<double>>();
  if (params.size() != net.parameter_count()) {
    throw Error(ErrorCode::kIo, "parameter count does not match layer sizes");
  }
  net.set_parameters(params);
  return net;
}

json regressor_json(const MlpRegressor& m) {
  json j;
  j["network"] = mlp_json(m.network());
  j["input_mean"] = vector_json(m.input_mean());
  j["input_scale"] = vector_json(m.input_scale());
  j["output_mean"] = m.output_mean();
  j["output_scale"] = m.output_scale();
  j["label_transform"] = to_string(m.label_transform());
  return j;
}

MlpRegressor regressor_from(const json& j) {
  return MlpRegressor(mlp_from(j.at("network")), vector_from(j.at("input_mean")),
                      vector_from(j.at("input_scale")), j.at("output_mean").get<double>(),
                      j.at("output_scale").get<double>(),
                      label_transform_from_string(j.at("label_transform").get<std::string>()));
}

json device_json(const DeviceFeatures& d) {
  json qs = json::object();
  for (const auto& [bits, s] : d.quant_speedup) qs[std::to_string(bits)] = s;
  return {{"id", d.id},
          {"throughput", d.throughput},
          {"bandwidth", d.bandwidth},
          {"overhead", d.overhead},
          {"quant_speedup", qs},
          {"power_dynamic", d.power_dynamic},
          {"power_static", d.power_static},
          {"gamma", d.gamma}};
}

DeviceFeatures device_from(const json& j) {
  DeviceFeatures d;
  d.id = j.at("id").get<std::string>();
  d.throughput = j.at("throughput").get<double>();
  d.bandwidth = j.at("bandwidth").get<double>();
  d.overhead = j.at("overhead").get<double>();
  d.quant_speedup.clear();
  for (const auto& [bits, s] : j.at("quant_speedup").items()) {
    d.quant_speedup[std::stoi(bits)] = s.get<double>();
  }
  d.power_dynamic = j.at("power_dynamic").get<double>();
  d.power_static = j.at("power_static").get<double>();
  d.gamma = j.at("gamma").get<double>();
  return d;
}

json device_list(const std::vector<DeviceFeatures>& ds) {
  json a = json::array();
  for (const auto& d : ds) a.push_back(device_json(d));
  return a;
}

std::vector<DeviceFeatures> device_list_from(const json& j) {
  std::vector<DeviceFeatures> out;
  for (const auto& e : j) out.push_back(device_from(e));
  return out;
}

}  // namespace

std::string to_json(const Mlp& net) { return mlp_json(net).dump(); }
std::string to_json(const MlpRegressor& model) { return regressor_json(model).dump(); }

std::string to_json(const PerformancePredictors& p) {
  json j;
  j["accuracy"] = regressor_json(p.accuracy);
  j["latency"] = regressor_json(p.latency);
  j["energy"] = regressor_json(p.energy);
  j["device_aware"] = p.device_aware;
  j["device_id"] = p.device_id;
  j["scale"] = {{"latency", p.scale.latency}, {"energy", p.scale.energy}};
  return j.dump(1);
}

std::string to_json(const OptimizerNetwork& net) {
  json j;
  j["format"] = kOptimizerFormat;
  std::vector<std::string> layout{"log_throughput", "log_bandwidth", "log_overhead"};
  const auto n_features = static_cast<std::size_t>(net.input_mean().size());
  for (std::size_t i = 3; i + 5 < n_features; ++i) {
    layout.push_back("log_quant_speedup_" + std::to_string(i - 3));
  }
  layout.insert(layout.end(), {"log_power_dynamic", "log_power_static", "log_gamma",
                               "log_lambda1_plus_offset", "log_lambda2_plus_offset"});
  j["input_layout"] = layout;
  j["lambda_offset"] = OptimizerNetwork::kLambdaOffset;
  j["input_mean"] = vector_json(net.input_mean());
  j["input_scale"] = vector_json(net.input_scale());
  j["network"] = mlp_json(net.network());
  return j.dump(1);
}

std::string to_json(const DeviceFeatures& d) { return device_json(d).dump(); }

std::string to_json(const Fleet& fleet) {
  json j;
  j["proxy"] = device_json(fleet.proxy);
  j["training_real"] = device_list(fleet.training_real);
  j["synthetic"] = device_list(fleet.synthetic);
  j["holdout_monotone"] = device_list(fleet.holdout_monotone);
  j["holdout_adversarial"] = device_list(fleet.holdout_adversarial);
  return j.dump(1);
}

Mlp mlp_from_json(std::string_view text) {
  const json j = parse(text);
  return guarded("network", [&] { return mlp_from(j); });
}

MlpRegressor regressor_from_json(std::string_view text) {
  const json j = parse(text);
  return guarded("regressor", [&] { return regressor_from(j); });
}

PerformancePredictors predictors_from_json(std::string_view text) {
  const json j = parse(text);
  return guarded("predictors", [&] {
    PerformancePredictors p;
    p.accuracy = regressor_from(j.at("accuracy"));
    p.latency = regressor_from(j.at("latency"));
    p.energy = regressor_from(j.at("energy"));
    p.device_aware = j.at("device_aware").get<bool>();
    p.device_id = j.at("device_id").get<std::string>();
    p.scale.latency = j.at("scale").at("latency").get<double>();
    p.scale.energy = j.at("scale").at("energy").get<double>();
    return p;
  });
}

OptimizerNetwork optimizer_from_json(std::string_view text) {
  const json j = parse(text);
  return guarded("optimizer network", [&] {
    if (j.at("format").get<std::string>() != kOptimizerFormat) {
      throw Error(ErrorCode::kIo, "unsupported optimizer format");
    }
    if (j.at("lambda_offset").get<double>() != OptimizerNetwork::kLambdaOffset) {
      throw Error(ErrorCode::kIo, "optimizer lambda offset differs from this build");
    }
    return OptimizerNetwork(mlp_from(j.at("network")), vector_from(j.at("input_mean")),
                            vector_from(j.at("input_scale")));
  });
}

DeviceFeatures device_from_json(std::string_view text) {
  const json j = parse(text);
  return guarded("device", [&] { return device_from(j); });
}

Fleet fleet_from_json(std::string_view text) {
  const json j = parse(text);
  return guarded("fleet", [&] {
    Fleet f;
    f.proxy = device_from(j.at("proxy"));
    f.training_real = device_list_from(j.at("training_real"));
    f.synthetic = device_list_from(j.at("synthetic"));
    f.holdout_monotone = device_list_from(j.at("holdout_monotone"));
    f.holdout_adversarial = device_list_from(j.at("holdout_adversarial"));
    return f;
  });
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::vector<std::string> header)
    : header_(std::move(header)) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  row(header_);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != header_.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "CSV row width differs from header");
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << csv_escape(fields[i]);
  }
  out_ << '\n';
  if (!out_) throw Error(ErrorCode::kIo, "CSV write failed");
}

}  // namespace dnnopt
