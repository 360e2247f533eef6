#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "cacto/nets.hpp"

namespace cacto {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The three networks of a run plus enough metadata to refuse a mismatched
// model on reload.
struct Checkpoint {
  std::string model;
  int n = 0;
  int m = 0;
  std::uint64_t config_hash = 0;
  int iter = 0;
  int episodes = 0;
  MlpParams actor, critic, std_critic;
};

nlohmann::json to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

// Writes to a temporary file and renames, so a crash never leaves a torn file.
void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

// Throws CheckpointError unless the networks fit `model`.
void check_compatible(const Checkpoint& ckpt, const ModelSpec& model);

}  // namespace cacto
