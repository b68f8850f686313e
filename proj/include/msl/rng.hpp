#pragma once

#include <array>
#include <cstdint>

namespace msl {

// Sampler stages. Part of the stream address, so every update kernel and
// every auxiliary chain draws from its own independent stream family.
enum class RngStage : std::uint32_t {
  kInit = 0,
  kDepth = 1,
  kLabel = 2,
  kAbundance = 3,
  kAnomaly = 4,
  kGammaAux = 5,
  kAuxDepth = 6,
  kAuxLabel = 7,
  kAuxAbundance = 8,
  kAuxGamma = 9,
  kSceneGen = 10,
  kSimulate = 11,
  kThin = 12,
  kGeneric = 13,
};

// Address of one random stream: (seed, sweep, stage, site). Distinct
// addresses give statistically independent streams; the same address
// reproduces the same draws on any machine, thread count or schedule.
struct RngAddress {
  std::uint64_t seed = 0;
  std::uint32_t sweep = 0;
  RngStage stage = RngStage::kGeneric;
  std::uint64_t site = 0;  // linear site id, must fit in 48 bits

  RngAddress() = default;
  RngAddress(std::uint64_t seed_, std::uint32_t sweep_, RngStage stage_, std::uint64_t site_)
      : seed(seed_), sweep(sweep_), stage(stage_), site(site_) {}
};

// Counter-based random stream (Philox 4x32-10, Salmon et al. 2011).
// Draws are a pure function of (address, draw index); no global state.
class RngStream {
 public:
  explicit RngStream(const RngAddress& addr);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform on [0,1) with 53 random bits.
  double next_double();
  // Uniform on the open interval (0,1); safe under log().
  double next_open();
  // Standard normal via Box-Muller (second value cached).
  double next_normal();
  // Gamma(shape, scale), Marsaglia-Tsang; shape<1 via boost trick.
  double next_gamma(double shape, double scale);
  // InverseGamma(shape, scale): reciprocal of Gamma(shape, 1/scale).
  double next_inverse_gamma(double shape, double scale);
  // Poisson(mean): Knuth below 30, PTRS transformed rejection above.
  std::uint64_t next_poisson(double mean);
  // Bernoulli(p)
  bool next_bernoulli(double p) { return next_double() < p; }

 private:
  void refill();

  std::array<std::uint32_t, 4> counter_{};
  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> buffer_{};
  int buffer_pos_ = 4;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace msl
