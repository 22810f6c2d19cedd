#pragma once

#include <map>
#include <string>
#include <vector>

#include "lnd/io.hpp"
#include "lnd/nn.hpp"

#include <nlohmann/json.hpp>

namespace lnd {

// Checkpoints are a JSON bundle of named networks plus a free-form metadata
// object. Parameters round-trip exactly (shortest-representation doubles).

inline nlohmann::ordered_json net_to_json(const DenseNet& net) {
  nlohmann::ordered_json j;
  j["dims"] = net.dims();
  j["head"] = head_name(net.head());
  j["params"] = net.params();
  return j;
}

inline DenseNet net_from_json(const nlohmann::ordered_json& j) {
  std::vector<int> dims;
  std::string head;
  std::vector<double> params;
  try {
    dims = j.at("dims").get<std::vector<int>>();
    head = j.at("head").get<std::string>();
    params = j.at("params").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint net: ") + e.what());
  }
  DenseNet net(dims, head_from_name(head));
  if (params.size() != net.param_count())
    throw ParseError("checkpoint net: parameter count " +
                     std::to_string(params.size()) + " does not match dims");
  net.params() = std::move(params);
  return net;
}

struct Checkpoint {
  std::map<std::string, DenseNet> nets;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();

  const DenseNet& require(const std::string& name) const {
    auto it = nets.find(name);
    if (it == nets.end())
      throw InputError("checkpoint: missing net '" + name + "'");
    return it->second;
  }
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::ordered_json j;
  j["kind"] = "model-checkpoint";
  j["version"] = 1;
  nlohmann::ordered_json nets = nlohmann::ordered_json::object();
  for (const auto& [name, net] : ck.nets) nets[name] = net_to_json(net);
  j["nets"] = nets;
  j["meta"] = ck.meta;
  atomic_write_text(path, j.dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  if (j.value("kind", "") != "model-checkpoint")
    throw ParseError("checkpoint: not a model-checkpoint file");
  Checkpoint ck;
  try {
    for (const auto& [name, nj] : j.at("nets").items())
      ck.nets.emplace(name, net_from_json(nj));
    if (j.contains("meta")) ck.meta = j.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  return ck;
}

}  // namespace lnd
