#include "msl/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace msl {

namespace {

constexpr std::uint32_t kPhiloxW32A = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW32B = 0xBB67AE85u;
constexpr std::uint32_t kPhiloxM4x32A = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM4x32B = 0xCD9E8D57u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(p);
  hi = static_cast<std::uint32_t>(p >> 32);
}

inline void philox_round(std::array<std::uint32_t, 4>& c, const std::array<std::uint32_t, 2>& k) {
  std::uint32_t lo0, hi0, lo1, hi1;
  mulhilo(kPhiloxM4x32A, c[0], lo0, hi0);
  mulhilo(kPhiloxM4x32B, c[2], lo1, hi1);
  c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

inline std::array<std::uint32_t, 4> philox10(std::array<std::uint32_t, 4> c,
                                             std::array<std::uint32_t, 2> k) {
  for (int r = 0;; ++r) {
    philox_round(c, k);
    if (r == 9) break;
    k[0] += kPhiloxW32A;
    k[1] += kPhiloxW32B;
  }
  return c;
}

}  // namespace

RngStream::RngStream(const RngAddress& addr) {
  // Field layout keeps distinct addresses in disjoint counter blocks:
  //   counter = (block index, site lo32, site hi16 | stage<<16, sweep)
  key_ = {static_cast<std::uint32_t>(addr.seed), static_cast<std::uint32_t>(addr.seed >> 32)};
  if (addr.site >> 48 != 0) throw std::invalid_argument("RngAddress: site id exceeds 48 bits");
  counter_[0] = 0;
  counter_[1] = static_cast<std::uint32_t>(addr.site);
  counter_[2] = static_cast<std::uint32_t>((addr.site >> 32) & 0xFFFFu) |
                (static_cast<std::uint32_t>(addr.stage) << 16);
  counter_[3] = addr.sweep;
}

void RngStream::refill() {
  buffer_ = philox10(counter_, key_);
  ++counter_[0];  // next block in this stream
  buffer_pos_ = 0;
}

std::uint32_t RngStream::next_u32() {
  if (buffer_pos_ >= 4) refill();
  return buffer_[buffer_pos_++];
}

std::uint64_t RngStream::next_u64() {
  std::uint64_t hi = next_u32();
  return (hi << 32) | next_u32();
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_open() {
  return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
}

double RngStream::next_normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  double u1 = next_open();
  double u2 = next_double();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 6.283185307179586476925286766559 * u2;
  spare_normal_ = r * std::sin(theta);
  has_spare_normal_ = true;
  return r * std::cos(theta);
}

double RngStream::next_gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw std::invalid_argument("next_gamma: shape and scale must be positive");
  if (shape < 1.0) {
    // Boost: G(a) = G(a+1) * U^(1/a)
    double u = next_open();
    return next_gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = next_normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    double u = next_open();
    double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v * scale;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v * scale;
  }
}

double RngStream::next_inverse_gamma(double shape, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("next_inverse_gamma: scale must be positive");
  return 1.0 / next_gamma(shape, 1.0 / scale);
}

std::uint64_t RngStream::next_poisson(double mean) {
  if (mean < 0.0 || !std::isfinite(mean)) throw std::invalid_argument("next_poisson: bad mean");
  if (mean == 0.0) return 0;
  if (mean < 30.0) {
    // Knuth
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= next_double();
    } while (p > limit);
    return k - 1;
  }
  // PTRS transformed rejection (Hoermann 1993).
  const double slam = std::sqrt(mean);
  const double llam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    double u = next_double() - 0.5;
    double v = next_open();
    double us = 0.5 - std::fabs(u);
    double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        kf * llam - mean - std::lgamma(kf + 1.0))
      return static_cast<std::uint64_t>(kf);
  }
}

}  // namespace msl
