#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace msl {

// Thrown on malformed inputs and files; the CLI maps it to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// One-way free-space range per picosecond, in millimetres.
inline constexpr double kMmPerPs = 0.299792458;

// Histogram cube geometry. All indices in this codebase are 0-based;
// the text file formats are 1-based and convert at the boundary.
struct GridDims {
  int n_row = 0;
  int n_col = 0;
  int n_band = 0;  // L
  int n_bin = 0;   // T
  double bin_ps = 2.0;

  int n_pixels() const { return n_row * n_col; }
  int n_sites() const { return n_row * n_col * n_band; }
  // Two-way range resolution of one bin.
  double depth_per_bin_mm() const { return bin_ps * kMmPerPs / 2.0; }
  int pixel_index(int i, int j) const { return i * n_col + j; }
  int cell_index(int i, int j, int l) const { return (i * n_col + j) * n_band + l; }

  std::vector<std::string> violations() const;
  void validate() const;
};

// Bin range t in [0, n_bin-1] -> range in mm relative to ref_bin.
double depth_bins_to_mm(int t, const GridDims& dims, int ref_bin = 0);

struct BinCount {
  std::int32_t bin = 0;
  std::uint32_t count = 0;
};

// Sparse 4-D photon-count array y[i,j,l,t] with cached per-cell totals.
// Cells are stored as sorted (bin,count) runs; absent bins are zero.
class PhotonCube {
 public:
  PhotonCube() = default;
  explicit PhotonCube(const GridDims& dims);

  const GridDims& dims() const { return dims_; }

  // Accumulates into (i,j,l,t); call finalize() before reading.
  void add_count(int i, int j, int l, int t, std::uint32_t count);
  void finalize();

  std::uint32_t count_at(int i, int j, int l, int t) const;
  std::uint64_t y_tilde(int i, int j, int l) const { return y_tilde_[dims_.cell_index(i, j, l)]; }
  std::span<const BinCount> cell(int i, int j, int l) const {
    const auto& c = cells_[dims_.cell_index(i, j, l)];
    return {c.data(), c.size()};
  }
  std::uint64_t total_count() const;

  std::vector<std::uint32_t> to_dense() const;  // row-major (i,j,l,t)
  static PhotonCube from_dense(const GridDims& dims, std::span<const std::uint32_t> values);

 private:
  GridDims dims_{};
  std::vector<std::vector<BinCount>> cells_;
  std::vector<std::uint64_t> y_tilde_;
  bool finalized_ = true;
};

// L x R nonnegative endmember matrix plus labels.
struct EndmemberLibrary {
  int n_band = 0;
  int n_endmember = 0;
  std::vector<double> m;  // row-major, m[l * n_endmember + r]
  std::vector<std::string> names;
  std::vector<double> wavelengths_nm;

  double at(int l, int r) const { return m[l * n_endmember + r]; }
  // out[l] = (M a)[l]
  void mix(std::span<const double> abundance, std::span<double> out) const;

  std::vector<std::string> violations() const;
};

struct GaussianIrfParams {
  double eta = 1.0;      // peak amplitude
  double mu_bins = 0.0;  // centre offset relative to the depth bin
  double sigma_bins = 1.0;
  int delay_bins = 0;  // per-wavelength calibration delay
};

// Per-wavelength temporal response kernels over integer offsets
// [first_offset, first_offset + size), with optional per-pixel integer
// delays from system calibration.
class ImpulseResponseSet {
 public:
  ImpulseResponseSet() = default;

  // Dense kernels; row k holds g_l at offsets first_offset..first_offset+len-1.
  static ImpulseResponseSet from_dense(int n_band, int length,
                                       std::span<const double> values, int first_offset = 0);
  // Gaussian kernels eta*exp(-(tau-c)^2/(2 sigma^2)), c = mu + delay,
  // truncated at |tau - c| > 6 sigma.
  static ImpulseResponseSet from_gaussian(const std::vector<GaussianIrfParams>& params);

  int n_band() const { return static_cast<int>(kernels_.size()); }
  double g(int l, int offset) const {
    const Kernel& k = kernels_[l];
    int idx = offset - k.first_offset;
    if (idx < 0 || idx >= static_cast<int>(k.values.size())) return 0.0;
    return k.values[idx];
  }
  // log g, -inf where the kernel is zero.
  double log_g(int l, int offset) const {
    const Kernel& k = kernels_[l];
    int idx = offset - k.first_offset;
    if (idx < 0 || idx >= static_cast<int>(k.values.size())) return -kInf;
    return k.log_values[idx];
  }
  int support_lo(int l) const { return kernels_[l].first_offset; }
  int support_hi(int l) const {
    return kernels_[l].first_offset + static_cast<int>(kernels_[l].values.size()) - 1;
  }

  // Same kernels with every amplitude multiplied by `factor`; exposure and
  // optical gain live in the response, keeping reflectivities unit-stable.
  ImpulseResponseSet scaled(double factor) const;

  bool has_pixel_delays() const { return !pixel_delays_.empty(); }
  void set_pixel_delays(std::vector<int> delays) { pixel_delays_ = std::move(delays); }
  int pixel_delay(int pixel_index) const {
    return pixel_delays_.empty() ? 0 : pixel_delays_[pixel_index];
  }
  const std::vector<int>& pixel_delays() const { return pixel_delays_; }

  const std::optional<std::vector<GaussianIrfParams>>& gaussian_params() const { return params_; }

  std::vector<std::string> violations() const;

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();
  struct Kernel {
    int first_offset = 0;
    std::vector<double> values;
    std::vector<double> log_values;
  };
  std::vector<Kernel> kernels_;
  std::optional<std::vector<GaussianIrfParams>> params_;
  std::vector<int> pixel_delays_;
};

// Admissible depth-bin window (0-based, inclusive).
struct DepthSupport {
  int t_min = 0;
  int t_max = 0;

  int width() const { return t_max - t_min + 1; }
  bool contains(int t) const { return t >= t_min && t <= t_max; }
  std::vector<std::string> violations(int n_bin) const;
};

// Proportional margin rule: one tenth of the histogram on each side
// (300 bins at T = 3000).
DepthSupport default_depth_support(int n_bin);
// Margin from the kernels themselves: widest 6-sigma extent plus delays.
DepthSupport depth_support_for_irf(int n_bin, const ImpulseResponseSet& irf);

// One MCMC state of the scene unknowns.
struct SceneState {
  int n_row = 0, n_col = 0, n_band = 0, n_endmember = 0;
  std::vector<int> t;          // depth bin per pixel
  std::vector<double> a;       // abundances, (i,j) major, r minor
  std::vector<std::uint8_t> z; // anomaly labels per (i,j,l)
  std::vector<double> x;       // anomaly values per (i,j,l), > 0
  std::vector<double> gamma;   // R fields of (n_row+1)*(n_col+1) auxiliaries

  static SceneState zeros(int n_row, int n_col, int n_band, int n_endmember);

  int pixel_index(int i, int j) const { return i * n_col + j; }
  double* abundance(int pix) { return a.data() + static_cast<std::size_t>(pix) * n_endmember; }
  const double* abundance(int pix) const {
    return a.data() + static_cast<std::size_t>(pix) * n_endmember;
  }
  int gamma_cols() const { return n_col + 1; }
  double& gamma_at(int r, int u, int v) {
    return gamma[(static_cast<std::size_t>(r) * (n_row + 1) + u) * (n_col + 1) + v];
  }
  double gamma_at(int r, int u, int v) const {
    return gamma[(static_cast<std::size_t>(r) * (n_row + 1) + u) * (n_col + 1) + v];
  }
  // lambda[l] = (M a)_l + z*x for one pixel
  void spectrum(const EndmemberLibrary& lib, int pix, std::span<double> out) const;
};

// Fixed hyperparameters Phi.
struct FixedHyper {
  double alpha = 1.0;
  double nu = 0.05;
};

// Adapted hyperparameters theta.
struct AdaptedHyper {
  double eps = 0.3;     // depth TV coupling
  double beta_n = 0.4;  // Ising spatial coupling
  double beta_l = 0.4;  // Ising spectral coupling
  double beta0 = 0.8;   // label sparsity bias in [0,1]
  std::vector<double> c;  // gamma-MRF shapes, one per endmember, > 1

  static AdaptedHyper defaults(int n_endmember);
};

// Admissible box for theta; projection keeps every update inside. The
// coupling cap keeps the 3-D Ising prior below its percolation regime so
// the label field cannot run away during adaptation.
struct HyperBox {
  double eps_max = 10.0;
  double beta_min = 1e-3;
  double beta_max = 0.45;
  double c_min = 1.0 + 1e-3;  // log-concavity requires c > 1
  double c_max = 50.0;

  void project(AdaptedHyper& h) const;
};

// Validated bundle of problem inputs (non-owning).
struct ProblemInstance {
  const PhotonCube* cube = nullptr;
  const EndmemberLibrary* lib = nullptr;
  const ImpulseResponseSet* irf = nullptr;
  DepthSupport support;
};

// Collects every violation across the four inputs; empty means valid.
std::vector<std::string> validate_inputs(const PhotonCube& cube, const EndmemberLibrary& lib,
                                         const ImpulseResponseSet& irf, const DepthSupport& sup);

// Throwing wrapper around validate_inputs.
ProblemInstance make_instance(const PhotonCube& cube, const EndmemberLibrary& lib,
                              const ImpulseResponseSet& irf, const DepthSupport& sup);

}  // namespace msl
