#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace vperturb::gauss {

// SplitMix64 output finalizer (Stafford variant 13).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Order-dependent combination of identifiers into one 64-bit stream id.
constexpr std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ull;
  for (auto p : parts) h = mix64(h ^ mix64(p + 0x9e3779b97f4a7c15ull));
  return h;
}

//---------------------------------------------------------------------------//
/*!
 * Counter-based random stream.
 *
 * Draw number n of stream (seed, id) is a pure function of the triple
 * (seed, id, n), so streams with distinct ids can be consumed from any thread
 * in any order without coordination. Satisfies UniformRandomBitGenerator.
 */
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::uint64_t id, std::uint64_t counter = 0) noexcept
      : seed_(seed), id_(id), key_(mix64(seed ^ 0x243f6a8885a308d3ull) ^ mix64(id + 0x13198a2e03707344ull)),
        counter_(counter) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return at(counter_++); }

  // Value of draw `n` without advancing.
  result_type at(std::uint64_t n) const noexcept {
    return mix64(mix64(key_ + (n + 1) * 0x9e3779b97f4a7c15ull) ^ key_);
  }

  // Uniform on the open interval (0, 1), 53 bits of resolution.
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() noexcept;

  // Uniform integer in [0, n) by rejection (n > 0).
  std::uint64_t below(std::uint64_t n) noexcept;

  // Independent child stream, reproducible from (seed, id, child).
  RandomStream split(std::uint64_t child) const noexcept {
    return RandomStream(seed_, stream_id({id_, child}));
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t id() const noexcept { return id_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t id_;
  std::uint64_t key_;
  std::uint64_t counter_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace vperturb::gauss
