#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "msl/core.hpp"
#include "msl/estimators.hpp"
#include "msl/sampler.hpp"

namespace msl {

// Shortest decimal that round-trips the exact double (%.17g).
std::string format_double(double v);

// ---- photon cubes: "MSLCUBE 1" ------------------------------------------------
// Header line `MSLCUBE 1 <n_row> <n_col> <L> <T> <bin_ps>`, then one line
// `<i> <j> <l> <t> <count>` per nonzero entry, 1-based, ascending
// lexicographic order.
void write_cube(const PhotonCube& cube, const std::string& path);
PhotonCube read_cube(const std::string& path);

// ---- endmember libraries: CSV with a wavelength column -------------------------
void write_endmembers(const EndmemberLibrary& lib, const std::string& path);
EndmemberLibrary read_endmembers(const std::string& path);

// ---- impulse responses ----------------------------------------------------------
// Parametric sets: `IRFGAUSS 1 <L>` + L rows `<eta> <mu> <sigma> <delay>`.
// Dense sets: `IRF 1 <L> <T>` + L rows of T reals at offsets 0..T-1.
void write_irf(const ImpulseResponseSet& irf, const std::string& path);
ImpulseResponseSet read_irf(const std::string& path);

// ---- CSV matrices / PGM quicklooks -----------------------------------------------
void write_matrix_csv(const std::string& path, std::span<const double> values, int n_row,
                      int n_col);
std::vector<double> read_matrix_csv(const std::string& path, int& n_row, int& n_col);

// 16-bit ASCII PGM with values clamped to [lo, hi] and scaled to 0..65535.
void write_pgm16(const std::string& path, std::span<const double> values, int n_row, int n_col,
                 double lo, double hi);

// ---- key=value metadata and config files -------------------------------------------
void write_key_values(const std::string& path,
                      const std::vector<std::pair<std::string, std::string>>& kv);
// Rejects keys outside `allowed` when non-empty.
std::map<std::string, std::string> read_key_values(const std::string& path,
                                                   const std::set<std::string>& allowed = {});

// ---- estimate maps -------------------------------------------------------------------
// One CSV matrix per product plus 16-bit PGM quicklooks. Abundances are
// displayed on the fixed [0, 1.3] dynamic; anomaly intensity on [-12, 2].
void write_maps(const EstimateBundle& est, const std::string& dir);
// Truth maps from the simulator, in the same formats.
struct TruthMaps {
  GridDims dims;
  DepthSupport support;
  int n_endmember = 0;
  int ref_bin = 0;
  std::vector<int> depth_bins;
  std::vector<double> abundance;
  std::vector<std::uint8_t> labels;
  std::vector<double> anomaly_values;
};
void write_truth_maps(const TruthMaps& truth, const std::string& dir);

// Reads whatever maps a directory holds; missing products come back empty.
struct MapSet {
  std::map<std::string, std::string> meta;
  std::vector<int> depth_bins;
  std::vector<std::uint8_t> labels;
  int n_row = 0, n_col = 0, n_band = 0;
  double bin_ps = 0.0;
};
MapSet read_maps(const std::string& dir);

// ---- sampler checkpoints ----------------------------------------------------------
void write_checkpoint(const SamplerCheckpoint& ckpt,
                      const std::vector<std::pair<std::string, std::string>>& run_config,
                      const std::string& path);
SamplerCheckpoint read_checkpoint(const std::string& path,
                                  std::map<std::string, std::string>* run_config = nullptr);

}  // namespace msl
