#pragma once

#include <cstdint>
#include <vector>

#include "msl/core.hpp"

namespace msl {

// Knobs for the synthetic test scenes: piecewise-constant shapes on a
// backboard plane, one dominant endmember per region, a few contiguous
// anomaly strips in the upper bands.
struct SceneSpec {
  int n_row = 64, n_col = 64;
  int n_band = 8, n_bin = 128;
  double bin_ps = 2.0;
  int n_endmember = 4;
  std::uint64_t seed = 1;

  int n_shapes = 6;
  int board_depth_from_tmin = 7;   // backboard plane, bins above t_min
  int object_relief_lo = 5;        // object depth above the board, bins
  int object_relief_hi = 24;
  double board_level = 0.7;        // backboard reflectivity scale
  double object_level = 1.5;       // object reflectivity scale
  int mixing_band_px = 0;          // smooth material transition half-width

  int n_anomaly_strips = 2;
  double anomaly_amplitude = 0.8;  // per-site mean of the weaker strips
  double anomaly_band_lo_frac = 0.75;

  double fwhm_lo_ps = 8.0, fwhm_hi_ps = 12.0;
  double amp_lo = 0.8, amp_hi = 1.2;
  int max_delay_bins = 2;
  double collinear_corr = 0.97;    // cosine of the two closest endmembers
};

struct SyntheticScene {
  GridDims dims;
  DepthSupport support;
  EndmemberLibrary lib;
  ImpulseResponseSet irf;
  std::vector<int> true_depth;        // per pixel, bins
  std::vector<double> true_abundance; // per (pixel, r)
  std::vector<std::uint8_t> true_z;   // per (pixel, band)
  std::vector<double> true_x;         // per (pixel, band), 0 where z=0
  std::vector<int> region_map;        // 0 = backboard, k = shape k
  std::vector<int> strip_map;         // -1 = none, else strip index (0 strongest)
};

// Smooth positive spectra; the last two columns are nearly collinear to
// stress the joint abundance updates.
EndmemberLibrary make_endmember_library(int n_band, int n_endmember, double collinear_corr,
                                        std::uint64_t seed);

// Gaussian responses with wavelength-dependent width, amplitude and small
// integer delays.
ImpulseResponseSet make_irf_set(int n_band, double fwhm_lo_ps, double fwhm_hi_ps, double bin_ps,
                                double amp_lo, double amp_hi, int max_delay_bins,
                                std::uint64_t seed);

SyntheticScene make_scene(const SceneSpec& spec);

// Global gain such that the expected mean photon count per pixel per band
// equals the budget within 2% (solved by bisection).
double calibrate_gain(const SyntheticScene& scene, double budget);

// y[i,j,l,t] ~ Poisson(gain * lambda_ijl * g_l(t - t_ij)).
PhotonCube simulate_cube(const SyntheticScene& scene, double budget, std::uint64_t seed,
                         double* gain_out = nullptr);

// Same forward draw at an explicit gain (no budget calibration).
PhotonCube simulate_cube_at_gain(const SyntheticScene& scene, double gain, std::uint64_t seed);

// Keeps each recorded photon independently with probability keep_prob.
PhotonCube binomial_thin(const PhotonCube& cube, double keep_prob, std::uint64_t seed);

// Fraction of (pixel, band) cells with zero detections.
double empty_cell_fraction(const PhotonCube& cube);

}  // namespace msl
