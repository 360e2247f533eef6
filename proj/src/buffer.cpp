#include "cacto/buffer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cacto {
namespace {

constexpr char kMagic[8] = {'C', 'A', 'C', 'T', 'O', 'B', 'U', 'F'};
constexpr std::size_t kNameWidth = 16;

template <typename U>
void put_le(std::ostream& os, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  }
  os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw std::runtime_error("truncated buffer file");
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(bytes[i]) << (8 * i);
  }
  return value;
}

void put_f64(std::ostream& os, double v) {
  put_le(os, std::bit_cast<std::uint64_t>(v));
}
double get_f64(std::istream& is) {
  return std::bit_cast<double>(get_le<std::uint64_t>(is));
}

void put_vec(std::ostream& os, const VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(os, v[i]);
}
VectorXd get_vec(std::istream& is, int n) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = get_f64(is);
  return v;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("buffer capacity must be > 0");
}

const TOSample& ReplayBuffer::at(std::size_t i) const {
  if (i >= store_.size()) throw std::out_of_range("buffer index");
  return store_[(cursor_ + i) % store_.size()];
}

std::size_t ReplayBuffer::push_many(std::span<const TOSample> samples) {
  for (const TOSample& s : samples) {
    if (!std::isfinite(s.V_bar)) {
      throw std::invalid_argument("sample with non-finite V_bar");
    }
    if (store_.size() < capacity_) {
      store_.push_back(s);
    } else {
      store_[cursor_] = s;
      cursor_ = (cursor_ + 1) % capacity_;
    }
  }
  return samples.size();
}

std::vector<TOSample> ReplayBuffer::sample_minibatch(std::size_t batch_size,
                                                     std::mt19937_64& rng) const {
  if (store_.empty()) throw std::invalid_argument("sampling from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, store_.size() - 1);
  std::vector<TOSample> out;
  out.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) out.push_back(store_[pick(rng)]);
  return out;
}

void dump_buffer(const ReplayBuffer& buffer, const std::string& path,
                 std::string_view model, int n, int m, int K) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  char name[kNameWidth] = {};
  std::memcpy(name, model.data(), std::min(model.size(), kNameWidth));
  os.write(name, kNameWidth);
  put_le<std::uint32_t>(os, n);
  put_le<std::uint32_t>(os, m);
  put_le<std::uint32_t>(os, K);
  put_le<std::uint64_t>(os, buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const TOSample& s = buffer.at(i);
    if (s.state.x.size() != n || s.u.size() != m || s.V_bar_x.size() != n ||
        s.state_plus_K.x.size() != n) {
      throw std::invalid_argument("sample dimensions do not match header");
    }
    put_vec(os, s.state.x);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.state.t));
    put_vec(os, s.u);
    put_f64(os, s.V_bar);
    put_vec(os, s.V_bar_x);
    put_vec(os, s.state_plus_K.x);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.state_plus_K.t));
  }
}

ReplayBuffer restore_buffer(const std::string& path, BufferHeader* header,
                            std::size_t capacity) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("'" + path + "' is not a buffer file");
  }
  char name[kNameWidth];
  if (!is.read(name, kNameWidth)) throw std::runtime_error("truncated buffer file");
  BufferHeader h;
  h.model.assign(name, strnlen(name, kNameWidth));
  h.n = get_le<std::uint32_t>(is);
  h.m = get_le<std::uint32_t>(is);
  h.K = get_le<std::uint32_t>(is);
  h.count = get_le<std::uint64_t>(is);
  if (h.n == 0 || h.n > 64 || h.m == 0 || h.m > 64) {
    throw std::runtime_error("'" + path + "' has implausible dimensions");
  }

  ReplayBuffer buffer(capacity);
  std::vector<TOSample> records;
  records.reserve(std::min<std::uint64_t>(h.count, capacity));
  for (std::uint64_t i = 0; i < h.count; ++i) {
    TOSample s;
    s.state.x = get_vec(is, h.n);
    s.state.t = static_cast<int>(get_le<std::uint32_t>(is));
    s.u = get_vec(is, h.m);
    s.V_bar = get_f64(is);
    s.V_bar_x = get_vec(is, h.n);
    s.state_plus_K.x = get_vec(is, h.n);
    s.state_plus_K.t = static_cast<int>(get_le<std::uint32_t>(is));
    records.push_back(std::move(s));
  }
  buffer.push_many(records);
  if (header != nullptr) *header = h;
  return buffer;
}

}  // namespace cacto
