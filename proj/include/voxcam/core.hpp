#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace voxcam {

// Error codes mirror the failure modes of the public operations.
enum class Errc {
  bad_magic,
  unsupported_datatype,
  dim_mismatch,
  truncated_data,
  unknown_label_in_volume,
  malformed_label_row,
  malformed_grammar,
  shape_mismatch,
  shape_underflow,
  degenerate_batch,
  invalid_drop_probability,
  disconnected_tensor,
  class_too_small,
  non_finite_loss,
  empty_split,
  applied_to_eval_split,
  derivation_overrun,
  no_conv_layer,
  not_eval_mode,
  mode_rank_mismatch,
  empty_heatmap,
  blob_outside_mask,
  zero_mask,
  config_error,
  io_error,
  internal,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::bad_magic: return "BadMagic";
    case Errc::unsupported_datatype: return "UnsupportedDatatype";
    case Errc::dim_mismatch: return "DimMismatch";
    case Errc::truncated_data: return "TruncatedData";
    case Errc::unknown_label_in_volume: return "UnknownLabelInVolume";
    case Errc::malformed_label_row: return "MalformedLabelRow";
    case Errc::malformed_grammar: return "MalformedGrammar";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::shape_underflow: return "ShapeUnderflow";
    case Errc::degenerate_batch: return "DegenerateBatch";
    case Errc::invalid_drop_probability: return "InvalidDropProbability";
    case Errc::disconnected_tensor: return "DisconnectedTensor";
    case Errc::class_too_small: return "ClassTooSmall";
    case Errc::non_finite_loss: return "NonFiniteLoss";
    case Errc::empty_split: return "EmptySplit";
    case Errc::applied_to_eval_split: return "AppliedToEvalSplit";
    case Errc::derivation_overrun: return "DerivationOverrun";
    case Errc::no_conv_layer: return "NoConvLayer";
    case Errc::not_eval_mode: return "NotEvalMode";
    case Errc::mode_rank_mismatch: return "ModeRankMismatch";
    case Errc::empty_heatmap: return "EmptyHeatmap";
    case Errc::blob_outside_mask: return "BlobOutsideMask";
    case Errc::zero_mask: return "ZeroMask";
    case Errc::config_error: return "ConfigError";
    case Errc::io_error: return "IoError";
    case Errc::internal: return "Internal";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) raise(code, what);
}

// ---------------------------------------------------------------------------
// Hashing / seed derivation
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ull));
}

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Deterministic random stream (xoshiro256++ seeded by splitmix64).
// std::mt19937 distributions are implementation-defined, so normal/uniform
// sampling is spelled out here to keep every run bit-reproducible.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& lane : state_) lane = x = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) raise(Errc::internal, "Rng::below(0)");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v > limit);
    return v % n;
  }

  // Standard normal via Box-Muller; second value cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Independent child stream; safe to call repeatedly with distinct ids.
  Rng fork(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

  std::uint64_t seed() const { return seed_; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
  std::uint64_t seed_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Little-endian byte packing for the binary file formats
// ---------------------------------------------------------------------------

namespace le {

template <typename T>
void put(std::vector<std::uint8_t>& buf, std::size_t offset, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if (offset + sizeof(T) > buf.size()) raise(Errc::internal, "le::put out of range");
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

template <typename T>
void append(std::vector<std::uint8_t>& buf, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  const std::size_t offset = buf.size();
  buf.resize(offset + sizeof(T));
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> buf, std::size_t offset) {
  static_assert(std::is_trivially_copyable_v<T>);
  if (offset + sizeof(T) > buf.size()) raise(Errc::truncated_data, "field past end of stream");
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

template <typename T>
T byteswap(T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace le

// ---------------------------------------------------------------------------
// Small string helpers shared by the text-format parsers
// ---------------------------------------------------------------------------

inline std::string trim(std::string_view s) {
  const char* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace voxcam
