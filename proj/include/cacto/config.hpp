#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "cacto/trainer.hpp"

namespace cacto {

// Message is already formatted as "path:line: what".
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  TrainConfig train;
  std::string text;        // file contents as read
  std::uint64_t hash = 0;  // FNV-1a of text
};

// Sections: model, cost, solver, nets, trainer, cli. `key = value`, '#'
// comments, vectors as whitespace-separated numbers. `obstacle` may repeat
// and takes "cx cy a b angle".
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text, const std::string& origin);

std::uint64_t fnv1a(std::string_view bytes);

}  // namespace cacto
