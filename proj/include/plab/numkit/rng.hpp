#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

namespace plab::numkit {

/// Counter-based random stream (Philox4x32-10).
///
/// The 64-bit seed is the Philox key; the 128-bit counter is split into a
/// 64-bit block index and the 64-bit stream id, so streams that differ only in
/// stream id never share a block. Every scalar draw consumes exactly one block,
/// whatever the distribution.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  /// Number of blocks consumed so far.
  std::uint64_t position() const noexcept { return counter_; }
  void seek(std::uint64_t position) noexcept { counter_ = position; }

  std::array<std::uint32_t, 4> next_block() noexcept;
  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1).
  double uniform01() noexcept;
  double uniform(double a, double b) noexcept;
  double normal(double mean, double stddev) noexcept;
  /// Uniform integer on [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// A new stream sharing this seed, with stream id derived from (stream_id, label).
  RngStream derive(std::string_view label) const noexcept;

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t counter_ = 0;
};

/// Philox4x32 with 10 rounds on an explicit counter and key.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) noexcept;

/// Stable 64-bit hash of a label (FNV-1a followed by a splitmix finalizer).
std::uint64_t label_hash(std::string_view label) noexcept;

struct UniformDist {
  double a = 0.0;
  double b = 1.0;
};
struct NormalDist {
  double mean = 0.0;
  double stddev = 1.0;
};
using Distribution = std::variant<UniformDist, NormalDist>;

/// Draws n values, advancing the stream by exactly n blocks.
std::vector<double> rng_draw(RngStream& stream, const Distribution& dist, std::size_t n);

}  // namespace plab::numkit
