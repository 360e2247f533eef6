#include "cacto/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace cacto {

nlohmann::json to_json(const Checkpoint& ckpt) {
  std::ostringstream hash;
  hash << std::hex << ckpt.config_hash;
  return {{"format", "cacto-checkpoint"},
          {"version", 1},
          {"model", ckpt.model},
          {"n", ckpt.n},
          {"m", ckpt.m},
          {"config_hash", hash.str()},
          {"iter", ckpt.iter},
          {"episodes", ckpt.episodes},
          {"actor", to_json(ckpt.actor)},
          {"critic", to_json(ckpt.critic)},
          {"std_critic", to_json(ckpt.std_critic)}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "cacto-checkpoint") {
      throw CheckpointError("not a checkpoint");
    }
    if (j.at("version").get<int>() != 1) {
      throw CheckpointError("unsupported checkpoint version");
    }
    Checkpoint c;
    c.model = j.at("model").get<std::string>();
    c.n = j.at("n").get<int>();
    c.m = j.at("m").get<int>();
    c.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    c.iter = j.at("iter").get<int>();
    c.episodes = j.at("episodes").get<int>();
    c.actor = mlp_from_json(j.at("actor"));
    c.critic = mlp_from_json(j.at("critic"));
    c.std_critic = mlp_from_json(j.at("std_critic"));
    return c;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw CheckpointError("cannot write '" + tmp + "'");
    out << to_json(ckpt).dump() << '\n';
    if (!out) throw CheckpointError("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw CheckpointError("cannot rename '" + tmp + "' to '" + path + "'");
  }
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot read '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw CheckpointError("'" + path + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

void check_compatible(const Checkpoint& ckpt, const ModelSpec& model) {
  const std::string name(to_string(model.kind));
  if (ckpt.model != name || ckpt.n != model.n || ckpt.m != model.m) {
    throw CheckpointError("checkpoint is for " + ckpt.model + " (n=" +
                          std::to_string(ckpt.n) + ", m=" + std::to_string(ckpt.m) +
                          "), config is " + name);
  }
  const int in = model.n + 1;
  if (ckpt.actor.input_dim() != in || ckpt.actor.output_dim() != model.m ||
      ckpt.critic.input_dim() != in || ckpt.critic.output_dim() != 1 ||
      ckpt.std_critic.input_dim() != in || ckpt.std_critic.output_dim() != 1) {
    throw CheckpointError("network shapes do not match the model");
  }
}

}  // namespace cacto
