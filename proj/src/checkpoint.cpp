#include "mpctc/checkpoint.hpp"

#include <fstream>

#include "json.hpp"

namespace mpctc {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json tensor_to_json(const Tensor& t) {
  return json{{"shape", {t.rows, t.cols}}, {"data", t.data}};
}

Tensor tensor_from_json(const json& j) {
  Tensor t(j.at("shape").at(0).get<int>(), j.at("shape").at(1).get<int>());
  const auto& data = j.at("data");
  if (data.size() != t.size()) {
    throw ShapeError("checkpoint tensor entry count does not match its shape");
  }
  for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = data[i].get<double>();
  return t;
}

json params_to_json(const ParameterSet& params) {
  json entries = json::object();
  for (const auto& p : params.items()) {
    entries[p.name] = tensor_to_json(p.value.tensor());
  }
  return json{{"format_version", kFormatVersion}, {"params", entries}};
}

void params_from_json(ParameterSet& params, const json& j) {
  if (j.at("format_version").get<int>() != kFormatVersion) {
    throw ConfigError("unsupported checkpoint format version");
  }
  const json& entries = j.at("params");
  for (const auto& p : params.items()) {
    if (!entries.contains(p.name)) {
      throw ConfigError("checkpoint is missing parameter " + p.name);
    }
    Tensor loaded = tensor_from_json(entries.at(p.name));
    Tensor& dst = p.value.mutable_tensor();
    if (!dst.same_shape(loaded)) {
      throw ShapeError("checkpoint shape mismatch for parameter " + p.name);
    }
    dst = std::move(loaded);
  }
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open checkpoint for write: " + path);
  out << j.dump();
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint: " + path);
  return json::parse(in);
}

}  // namespace

void save_parameters(const ParameterSet& params, const std::string& path) {
  write_json(params_to_json(params), path);
}

void load_parameters(ParameterSet& params, const std::string& path) {
  params_from_json(params, read_json(path));
}

void save_snapshot(const ParameterSet& params, const TrainSnapshot& snap,
                   const std::string& path) {
  json j = params_to_json(params);
  j["step"] = snap.step;
  j["rng_state"] = snap.rng_state;
  j["learning_rate"] = snap.optimizer.learning_rate;
  j["momentum"] = snap.optimizer.momentum;
  json vel = json::object();
  for (const auto& [name, t] : snap.optimizer.velocity) {
    vel[name] = tensor_to_json(t);
  }
  j["velocity"] = vel;
  write_json(j, path);
}

TrainSnapshot load_snapshot(ParameterSet& params, const std::string& path) {
  json j = read_json(path);
  params_from_json(params, j);
  TrainSnapshot snap;
  snap.step = j.at("step").get<int>();
  snap.rng_state = j.at("rng_state").get<std::string>();
  snap.optimizer.learning_rate = j.at("learning_rate").get<double>();
  snap.optimizer.momentum = j.at("momentum").get<double>();
  for (const auto& [name, tj] : j.at("velocity").items()) {
    snap.optimizer.velocity[name] = tensor_from_json(tj);
  }
  return snap;
}

}  // namespace mpctc
