#pragma once

#include <span>
#include <vector>

#include "msl/likelihood.hpp"
#include "msl/sampler.hpp"

namespace msl {

// Display floor for log anomaly intensity at empty anomaly vectors.
inline constexpr double kAnomalyLogFloor = -12.0;

// Point estimates and uncertainty maps derived from one chain.
struct EstimateBundle {
  int n_row = 0, n_col = 0, n_band = 0, n_endmember = 0;
  int ref_bin = 0;
  double mm_per_bin = 0.0;
  std::vector<int> depth_bins;            // per pixel
  std::vector<double> depth_mm;           // per pixel, relative to ref_bin
  std::vector<double> confidence;         // per pixel, in [0,1]
  std::vector<double> abundance;          // per (pixel, r)
  std::vector<std::uint8_t> labels;       // per (pixel, band)
  std::vector<double> anomaly_values;     // per (pixel, band), z-masked means
  std::vector<double> anomaly_log_intensity;  // per pixel, log(||r||^2 / L)
};

// Posterior mean of the abundances over the stored samples.
std::vector<double> mmse_abundances(const ChainOutput& chain);

// Marginal posterior mode of each label; ties at 1/2 resolve to 0.
std::vector<std::uint8_t> mmap_labels(const ChainOutput& chain);

// Mean of x over the sweeps that had z=1, masked by the label estimate.
std::vector<double> mmse_anomaly_values(const ChainOutput& chain,
                                        std::span<const std::uint8_t> labels);

// Per-pixel histogram mode (smallest bin on ties) and the fraction of
// samples in that bin.
void mmap_depth_and_confidence(const ChainOutput& chain, std::vector<int>& depth_out,
                               std::vector<double>& confidence_out);

std::vector<double> anomaly_log_intensity(std::span<const double> anomaly_values, int n_band);

EstimateBundle make_estimates(const ChainOutput& chain, int ref_bin);

enum class MlDepthMode { kJoint, kSingleBand };

// Pixel-wise maximum-likelihood depth with per-band analytic amplitude
// profiling; empty pixels are filled by nearest-neighbour interpolation.
std::vector<int> ml_depth_baseline(const PhotonCube& cube, const ImpulseResponseSet& irf,
                                   const SuffStats& stats, MlDepthMode mode, int band = -1);

// Depth point estimate conditioned on the plugged-in abundance, label and
// anomaly estimates: per pixel the conditional log-posterior over the
// support is re-maximized at the estimated spectrum. Zero-photon pixels,
// whose conditional is flat, take the same nearest-neighbour fill as the
// ML baseline.
std::vector<int> plugin_depth_reopt(const SuffStats& stats, const EndmemberLibrary& lib,
                                    const EstimateBundle& est);

// Marginal posterior mass of each pixel's histogram at a given depth map.
std::vector<double> confidence_at(const ChainOutput& chain, std::span<const int> depth);

// Fill entries marked -1 from the nearest estimated pixel.
std::vector<int> nearest_neighbour_fill(std::span<const int> depth, int n_row, int n_col);

// Root mean squared depth error in millimetres.
double rmse_mm(std::span<const int> est, std::span<const int> ref, double mm_per_bin);

// F1 score of binary label maps.
double label_f1(std::span<const std::uint8_t> est, std::span<const std::uint8_t> ref);

}  // namespace msl
