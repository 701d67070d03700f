#include "plab/numkit/rng.hpp"

#include <cmath>
#include <numbers>

#include "plab/error.hpp"

namespace plab::numkit {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline std::uint64_t splitmix_finalize(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

std::uint64_t label_hash(std::string_view label) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return splitmix_finalize(h);
}

std::array<std::uint32_t, 4> RngStream::next_block() noexcept {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
      static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                            static_cast<std::uint32_t>(seed_ >> 32)};
  ++counter_;
  return philox4x32_10(ctr, key);
}

std::uint64_t RngStream::next_u64() noexcept {
  const auto b = next_block();
  return (static_cast<std::uint64_t>(b[1]) << 32) | b[0];
}

double RngStream::uniform01() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double a, double b) noexcept { return a + (b - a) * uniform01(); }

double RngStream::normal(double mean, double stddev) noexcept {
  const auto b = next_block();
  const std::uint64_t x = (static_cast<std::uint64_t>(b[1]) << 32) | b[0];
  const std::uint64_t y = (static_cast<std::uint64_t>(b[3]) << 32) | b[2];
  const double u1 = static_cast<double>((x >> 11) + 1) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(y >> 11) * 0x1.0p-53;
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return mean + stddev * z;
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept {
  // High 64 bits of the 128-bit product next_u64() * n.
  const std::uint64_t x = next_u64();
  const std::uint64_t x_lo = x & 0xffffffffu, x_hi = x >> 32;
  const std::uint64_t n_lo = n & 0xffffffffu, n_hi = n >> 32;
  const std::uint64_t lo_lo = x_lo * n_lo;
  const std::uint64_t hi_lo = x_hi * n_lo;
  const std::uint64_t lo_hi = x_lo * n_hi;
  const std::uint64_t cross = (lo_lo >> 32) + (hi_lo & 0xffffffffu) + lo_hi;
  return x_hi * n_hi + (hi_lo >> 32) + (cross >> 32);
}

RngStream RngStream::derive(std::string_view label) const noexcept {
  return RngStream(seed_, splitmix_finalize(stream_id_ ^ label_hash(label)));
}

std::vector<double> rng_draw(RngStream& stream, const Distribution& dist, std::size_t n) {
  if (n == 0) throw InvalidInput("rng_draw: n must be at least 1");
  std::vector<double> out;
  out.reserve(n);
  if (const auto* u = std::get_if<UniformDist>(&dist)) {
    if (!(u->a <= u->b)) throw InvalidInput("rng_draw: uniform requires a <= b");
    for (std::size_t i = 0; i < n; ++i) out.push_back(stream.uniform(u->a, u->b));
  } else {
    const auto& g = std::get<NormalDist>(dist);
    if (!(g.stddev >= 0.0)) throw InvalidInput("rng_draw: normal requires stddev >= 0");
    for (std::size_t i = 0; i < n; ++i) out.push_back(stream.normal(g.mean, g.stddev));
  }
  return out;
}

}  // namespace plab::numkit
