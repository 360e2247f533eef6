#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cacto/envs.hpp"
#include "cacto/sample.hpp"

namespace cacto {

// Fixed-capacity FIFO store of solver samples.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = std::size_t{1} << 20);

  std::size_t size() const { return store_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return store_.empty(); }

  // i-th oldest sample currently held.
  const TOSample& at(std::size_t i) const;

  std::size_t push_many(std::span<const TOSample> samples);

  // Uniform with replacement.
  std::vector<TOSample> sample_minibatch(std::size_t batch_size,
                                         std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;  // slot of the oldest sample once full
  std::vector<TOSample> store_;
};

struct BufferHeader {
  std::string model;
  std::uint32_t n = 0;
  std::uint32_t m = 0;
  std::uint32_t K = 0;
  std::uint64_t count = 0;
};

// Little-endian fixed-width records; see README for the layout.
void dump_buffer(const ReplayBuffer& buffer, const std::string& path,
                 std::string_view model, int n, int m, int K);
ReplayBuffer restore_buffer(const std::string& path, BufferHeader* header,
                            std::size_t capacity = std::size_t{1} << 20);

}  // namespace cacto
