#include "msl/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace msl {

namespace {

[[noreturn]] void fail(const std::string& path, int line, const std::string& what) {
  throw ValidationError(path + ":" + std::to_string(line) + ": " + what);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open for reading: " + path);
  return in;
}

double parse_double(const std::string& tok, const std::string& path, int line) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') fail(path, line, "non-numeric value '" + tok + "'");
  return v;
}

long parse_long(const std::string& tok, const std::string& path, int line) {
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0') fail(path, line, "non-integer value '" + tok + "'");
  return v;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---- cube ---------------------------------------------------------------------

void write_cube(const PhotonCube& cube, const std::string& path) {
  auto out = open_out(path);
  const GridDims& d = cube.dims();
  out << "MSLCUBE 1 " << d.n_row << " " << d.n_col << " " << d.n_band << " " << d.n_bin << " "
      << format_double(d.bin_ps) << "\n";
  for (int i = 0; i < d.n_row; ++i)
    for (int j = 0; j < d.n_col; ++j)
      for (int l = 0; l < d.n_band; ++l)
        for (const BinCount& bc : cube.cell(i, j, l))
          out << i + 1 << " " << j + 1 << " " << l + 1 << " " << bc.bin + 1 << " " << bc.count
              << "\n";
}

PhotonCube read_cube(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) fail(path, 1, "missing header");
  auto head = split_ws(line);
  if (head.size() != 7 || head[0] != "MSLCUBE" || head[1] != "1")
    fail(path, 1, "bad header, expected 'MSLCUBE 1 <n_row> <n_col> <L> <T> <bin_ps>'");
  GridDims dims;
  dims.n_row = static_cast<int>(parse_long(head[2], path, 1));
  dims.n_col = static_cast<int>(parse_long(head[3], path, 1));
  dims.n_band = static_cast<int>(parse_long(head[4], path, 1));
  dims.n_bin = static_cast<int>(parse_long(head[5], path, 1));
  dims.bin_ps = parse_double(head[6], path, 1);
  auto viol = dims.violations();
  if (!viol.empty()) fail(path, 1, viol.front());
  PhotonCube cube(dims);
  long prev[4] = {0, 0, 0, 0};
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto toks = split_ws(line);
    if (toks.size() != 5) fail(path, line_no, "expected '<i> <j> <l> <t> <count>'");
    long v[5];
    for (int k = 0; k < 5; ++k) v[k] = parse_long(toks[k], path, line_no);
    if (v[0] < 1 || v[0] > dims.n_row || v[1] < 1 || v[1] > dims.n_col || v[2] < 1 ||
        v[2] > dims.n_band || v[3] < 1 || v[3] > dims.n_bin)
      fail(path, line_no, "index outside the declared grid");
    if (v[4] < 1) fail(path, line_no, "count must be a positive integer");
    bool increasing = false;
    for (int k = 0; k < 4; ++k) {
      if (v[k] > prev[k]) {
        increasing = true;
        break;
      }
      if (v[k] < prev[k]) break;
    }
    if (!increasing) fail(path, line_no, "entries not in ascending lexicographic order");
    std::copy(v, v + 4, prev);
    cube.add_count(static_cast<int>(v[0]) - 1, static_cast<int>(v[1]) - 1,
                   static_cast<int>(v[2]) - 1, static_cast<int>(v[3]) - 1,
                   static_cast<std::uint32_t>(v[4]));
  }
  cube.finalize();
  return cube;
}

// ---- endmembers ------------------------------------------------------------------

void write_endmembers(const EndmemberLibrary& lib, const std::string& path) {
  auto out = open_out(path);
  out << "wavelength_nm";
  for (int r = 0; r < lib.n_endmember; ++r)
    out << ","
        << (static_cast<int>(lib.names.size()) == lib.n_endmember
                ? lib.names[r]
                : "endmember_" + std::to_string(r + 1));
  out << "\n";
  for (int l = 0; l < lib.n_band; ++l) {
    out << format_double(static_cast<int>(lib.wavelengths_nm.size()) == lib.n_band
                             ? lib.wavelengths_nm[l]
                             : static_cast<double>(l + 1));
    for (int r = 0; r < lib.n_endmember; ++r) out << "," << format_double(lib.at(l, r));
    out << "\n";
  }
}

EndmemberLibrary read_endmembers(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) fail(path, 1, "missing CSV header");
  auto head = split_csv(line);
  if (head.size() < 2 || head[0] != "wavelength_nm")
    fail(path, 1, "expected header 'wavelength_nm,<name>,...'");
  EndmemberLibrary lib;
  lib.n_endmember = static_cast<int>(head.size()) - 1;
  lib.names.assign(head.begin() + 1, head.end());
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto toks = split_csv(line);
    if (static_cast<int>(toks.size()) != lib.n_endmember + 1)
      fail(path, line_no, "wrong column count");
    lib.wavelengths_nm.push_back(parse_double(toks[0], path, line_no));
    for (int r = 0; r < lib.n_endmember; ++r)
      lib.m.push_back(parse_double(toks[r + 1], path, line_no));
  }
  lib.n_band = static_cast<int>(lib.wavelengths_nm.size());
  if (lib.n_band == 0) fail(path, line_no, "no data rows");
  auto v = lib.violations();
  if (!v.empty()) throw ValidationError(path + ": " + v.front());
  return lib;
}

// ---- impulse responses ---------------------------------------------------------------

void write_irf(const ImpulseResponseSet& irf, const std::string& path) {
  auto out = open_out(path);
  if (irf.gaussian_params()) {
    const auto& ps = *irf.gaussian_params();
    out << "IRFGAUSS 1 " << ps.size() << "\n";
    for (const auto& p : ps)
      out << format_double(p.eta) << " " << format_double(p.mu_bins) << " "
          << format_double(p.sigma_bins) << " " << p.delay_bins << "\n";
    return;
  }
  int hi = 0;
  for (int l = 0; l < irf.n_band(); ++l) {
    if (irf.support_lo(l) < 0)
      throw ValidationError(
          "dense IRF format stores offsets 0..T-1; this set has negative offsets, "
          "write the parametric form instead");
    hi = std::max(hi, irf.support_hi(l));
  }
  const int len = hi + 1;
  out << "IRF 1 " << irf.n_band() << " " << len << "\n";
  for (int l = 0; l < irf.n_band(); ++l) {
    for (int tau = 0; tau < len; ++tau) out << (tau ? " " : "") << format_double(irf.g(l, tau));
    out << "\n";
  }
}

ImpulseResponseSet read_irf(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) fail(path, 1, "missing header");
  auto head = split_ws(line);
  if (head.size() >= 3 && head[0] == "IRFGAUSS" && head[1] == "1") {
    const int n_band = static_cast<int>(parse_long(head[2], path, 1));
    std::vector<GaussianIrfParams> params;
    int line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto toks = split_ws(line);
      if (toks.size() != 4) fail(path, line_no, "expected '<eta> <mu> <sigma> <delay>'");
      GaussianIrfParams p;
      p.eta = parse_double(toks[0], path, line_no);
      p.mu_bins = parse_double(toks[1], path, line_no);
      p.sigma_bins = parse_double(toks[2], path, line_no);
      p.delay_bins = static_cast<int>(parse_long(toks[3], path, line_no));
      params.push_back(p);
    }
    if (static_cast<int>(params.size()) != n_band)
      fail(path, line_no, "row count does not match the declared band count");
    return ImpulseResponseSet::from_gaussian(params);
  }
  if (head.size() == 4 && head[0] == "IRF" && head[1] == "1") {
    const int n_band = static_cast<int>(parse_long(head[2], path, 1));
    const int len = static_cast<int>(parse_long(head[3], path, 1));
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(n_band) * len);
    int line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto toks = split_ws(line);
      if (static_cast<int>(toks.size()) != len) fail(path, line_no, "wrong value count in row");
      for (const auto& t : toks) values.push_back(parse_double(t, path, line_no));
    }
    if (values.size() != static_cast<std::size_t>(n_band) * len)
      fail(path, line_no, "row count does not match the declared band count");
    return ImpulseResponseSet::from_dense(n_band, len, values, 0);
  }
  fail(path, 1, "unknown impulse-response header");
}

// ---- matrices / PGM -------------------------------------------------------------------

void write_matrix_csv(const std::string& path, std::span<const double> values, int n_row,
                      int n_col) {
  if (values.size() != static_cast<std::size_t>(n_row) * n_col)
    throw ValidationError("write_matrix_csv: size does not match shape");
  auto out = open_out(path);
  for (int i = 0; i < n_row; ++i) {
    for (int j = 0; j < n_col; ++j)
      out << (j ? "," : "") << format_double(values[static_cast<std::size_t>(i) * n_col + j]);
    out << "\n";
  }
}

std::vector<double> read_matrix_csv(const std::string& path, int& n_row, int& n_col) {
  auto in = open_in(path);
  std::vector<double> values;
  std::string line;
  n_row = 0;
  n_col = 0;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto toks = split_csv(line);
    if (n_col == 0)
      n_col = static_cast<int>(toks.size());
    else if (static_cast<int>(toks.size()) != n_col)
      fail(path, line_no, "ragged row");
    for (const auto& t : toks) values.push_back(parse_double(t, path, line_no));
    ++n_row;
  }
  if (n_row == 0) fail(path, 1, "empty matrix");
  return values;
}

void write_pgm16(const std::string& path, std::span<const double> values, int n_row, int n_col,
                 double lo, double hi) {
  if (!(hi > lo)) throw ValidationError("write_pgm16: need hi > lo");
  auto out = open_out(path);
  out << "P2\n" << n_col << " " << n_row << "\n65535\n";
  for (int i = 0; i < n_row; ++i) {
    for (int j = 0; j < n_col; ++j) {
      const double v = std::clamp(values[static_cast<std::size_t>(i) * n_col + j], lo, hi);
      const int pix = static_cast<int>(std::lround((v - lo) / (hi - lo) * 65535.0));
      out << (j ? " " : "") << pix;
    }
    out << "\n";
  }
}

// ---- key=value files --------------------------------------------------------------------

void write_key_values(const std::string& path,
                      const std::vector<std::pair<std::string, std::string>>& kv) {
  auto out = open_out(path);
  for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

std::map<std::string, std::string> read_key_values(const std::string& path,
                                                   const std::set<std::string>& allowed) {
  auto in = open_in(path);
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto pos = line.find('=');
    if (pos == std::string::npos) fail(path, line_no, "expected key=value");
    const std::string key = line.substr(0, pos);
    if (!allowed.empty() && !allowed.count(key)) fail(path, line_no, "unknown key '" + key + "'");
    kv[key] = line.substr(pos + 1);
  }
  return kv;
}

// ---- estimate maps ------------------------------------------------------------------------

namespace {

std::vector<double> to_doubles(std::span<const int> v) {
  return {v.begin(), v.end()};
}

std::vector<double> to_doubles(std::span<const std::uint8_t> v) {
  return {v.begin(), v.end()};
}

void write_meta(const std::string& dir, const GridDims& dims, int n_endmember, int t_min,
                int t_max, int ref_bin) {
  write_key_values(dir + "/meta.txt",
                   {{"n_row", std::to_string(dims.n_row)},
                    {"n_col", std::to_string(dims.n_col)},
                    {"n_band", std::to_string(dims.n_band)},
                    {"n_bin", std::to_string(dims.n_bin)},
                    {"bin_ps", format_double(dims.bin_ps)},
                    {"n_endmember", std::to_string(n_endmember)},
                    {"t_min", std::to_string(t_min + 1)},
                    {"t_max", std::to_string(t_max + 1)},
                    {"ref_bin", std::to_string(ref_bin + 1)}});
}

}  // namespace

void write_maps(const EstimateBundle& est, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (double p : est.confidence)
    if (p < 0.0 || p > 1.0)
      throw ValidationError("write_maps: confidence value outside [0,1] refused");
  const int n_row = est.n_row, n_col = est.n_col, L = est.n_band, R = est.n_endmember;
  GridDims dims{n_row, n_col, L, 1, est.mm_per_bin / kMmPerPs * 2.0};
  write_meta(dir, dims, R, 0, 0, est.ref_bin);

  write_matrix_csv(dir + "/depth_mm.csv", est.depth_mm, n_row, n_col);
  write_matrix_csv(dir + "/depth_bins.csv", to_doubles(est.depth_bins), n_row, n_col);
  write_matrix_csv(dir + "/confidence.csv", est.confidence, n_row, n_col);
  for (int r = 0; r < R; ++r) {
    std::vector<double> ar(static_cast<std::size_t>(n_row) * n_col);
    for (int p = 0; p < n_row * n_col; ++p)
      ar[p] = est.abundance[static_cast<std::size_t>(p) * R + r];
    const std::string base = dir + "/abundance_" + std::to_string(r + 1);
    write_matrix_csv(base + ".csv", ar, n_row, n_col);
    write_pgm16(base + ".pgm", ar, n_row, n_col, 0.0, 1.3);
  }
  write_matrix_csv(dir + "/anomaly_log_intensity.csv", est.anomaly_log_intensity, n_row, n_col);
  // labels: one row per pixel (row-major), one column per band
  write_matrix_csv(dir + "/labels.csv", to_doubles(est.labels), n_row * n_col, L);
  write_matrix_csv(dir + "/anomaly_values.csv", est.anomaly_values, n_row * n_col, L);

  double depth_hi = 1.0;
  for (double v : est.depth_mm) depth_hi = std::max(depth_hi, v);
  write_pgm16(dir + "/depth_mm.pgm", est.depth_mm, n_row, n_col, 0.0, depth_hi);
  write_pgm16(dir + "/confidence.pgm", est.confidence, n_row, n_col, 0.0, 1.0);
  write_pgm16(dir + "/anomaly_log_intensity.pgm", est.anomaly_log_intensity, n_row, n_col,
              kAnomalyLogFloor, 2.0);
  std::vector<double> label_count(static_cast<std::size_t>(n_row) * n_col, 0.0);
  for (int p = 0; p < n_row * n_col; ++p)
    for (int l = 0; l < L; ++l) label_count[p] += est.labels[static_cast<std::size_t>(p) * L + l];
  write_pgm16(dir + "/labels.pgm", label_count, n_row, n_col, 0.0, static_cast<double>(L));
}

void write_truth_maps(const TruthMaps& truth, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const GridDims& dims = truth.dims;
  const int n_pix = dims.n_pixels();
  write_meta(dir, dims, truth.n_endmember, truth.support.t_min, truth.support.t_max,
             truth.ref_bin);
  std::vector<double> mm(n_pix);
  for (int p = 0; p < n_pix; ++p)
    mm[p] = (truth.depth_bins[p] - truth.ref_bin) * dims.depth_per_bin_mm();
  write_matrix_csv(dir + "/depth_mm.csv", mm, dims.n_row, dims.n_col);
  write_matrix_csv(dir + "/depth_bins.csv", to_doubles(truth.depth_bins), dims.n_row,
                   dims.n_col);
  for (int r = 0; r < truth.n_endmember; ++r) {
    std::vector<double> ar(n_pix);
    for (int p = 0; p < n_pix; ++p)
      ar[p] = truth.abundance[static_cast<std::size_t>(p) * truth.n_endmember + r];
    write_matrix_csv(dir + "/abundance_" + std::to_string(r + 1) + ".csv", ar, dims.n_row,
                     dims.n_col);
  }
  write_matrix_csv(dir + "/labels.csv", to_doubles(truth.labels), n_pix, dims.n_band);
  write_matrix_csv(dir + "/anomaly_values.csv", truth.anomaly_values, n_pix, dims.n_band);
}

MapSet read_maps(const std::string& dir) {
  namespace fs = std::filesystem;
  MapSet ms;
  ms.meta = read_key_values(dir + "/meta.txt");
  ms.n_row = std::stoi(ms.meta.at("n_row"));
  ms.n_col = std::stoi(ms.meta.at("n_col"));
  ms.n_band = std::stoi(ms.meta.at("n_band"));
  ms.bin_ps = std::stod(ms.meta.at("bin_ps"));
  if (fs::exists(dir + "/depth_bins.csv")) {
    int r = 0, c = 0;
    auto v = read_matrix_csv(dir + "/depth_bins.csv", r, c);
    if (r != ms.n_row || c != ms.n_col)
      throw ValidationError(dir + "/depth_bins.csv: shape does not match meta.txt");
    ms.depth_bins.resize(v.size());
    for (std::size_t k = 0; k < v.size(); ++k)
      ms.depth_bins[k] = static_cast<int>(std::lround(v[k]));
  }
  if (fs::exists(dir + "/labels.csv")) {
    int r = 0, c = 0;
    auto v = read_matrix_csv(dir + "/labels.csv", r, c);
    if (r != ms.n_row * ms.n_col || c != ms.n_band)
      throw ValidationError(dir + "/labels.csv: shape does not match meta.txt");
    ms.labels.resize(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) ms.labels[k] = v[k] != 0.0 ? 1 : 0;
  }
  return ms;
}

// ---- checkpoints ----------------------------------------------------------------------------

namespace {

template <typename T>
void write_vec(std::ostream& out, const std::string& tag, const std::vector<T>& v) {
  out << tag << " " << v.size() << "\n";
  for (std::size_t k = 0; k < v.size(); ++k) {
    if constexpr (std::is_same_v<T, double>)
      out << (k ? " " : "") << format_double(v[k]);
    else
      out << (k ? " " : "") << static_cast<long long>(v[k]);
  }
  out << "\n";
}

template <typename T>
std::vector<T> read_vec(std::istream& in, const std::string& tag, const std::string& path,
                        int& line_no) {
  std::string line;
  if (!std::getline(in, line)) fail(path, line_no, "unexpected end of checkpoint");
  ++line_no;
  auto head = split_ws(line);
  if (head.size() != 2 || head[0] != tag) fail(path, line_no, "expected section '" + tag + "'");
  const std::size_t n = static_cast<std::size_t>(parse_long(head[1], path, line_no));
  std::vector<T> v(n);
  if (!std::getline(in, line)) fail(path, line_no, "missing data for '" + tag + "'");
  ++line_no;
  std::istringstream is(line);
  std::string tok;
  for (std::size_t k = 0; k < n; ++k) {
    if (!(is >> tok)) fail(path, line_no, "short data row in '" + tag + "'");
    if constexpr (std::is_same_v<T, double>)
      v[k] = parse_double(tok, path, line_no);
    else
      v[k] = static_cast<T>(parse_long(tok, path, line_no));
  }
  return v;
}

void write_theta(std::ostream& out, const AdaptedHyper& h) {
  out << "THETA " << format_double(h.eps) << " " << format_double(h.beta_n) << " "
      << format_double(h.beta_l) << " " << format_double(h.beta0) << " " << h.c.size();
  for (double c : h.c) out << " " << format_double(c);
  out << "\n";
}

AdaptedHyper read_theta(std::istream& in, const std::string& path, int& line_no) {
  std::string line;
  if (!std::getline(in, line)) fail(path, line_no, "missing THETA");
  ++line_no;
  auto toks = split_ws(line);
  if (toks.size() < 6 || toks[0] != "THETA") fail(path, line_no, "expected THETA");
  AdaptedHyper h;
  h.eps = parse_double(toks[1], path, line_no);
  h.beta_n = parse_double(toks[2], path, line_no);
  h.beta_l = parse_double(toks[3], path, line_no);
  h.beta0 = parse_double(toks[4], path, line_no);
  const int R = static_cast<int>(parse_long(toks[5], path, line_no));
  if (static_cast<int>(toks.size()) != 6 + R) fail(path, line_no, "bad THETA row");
  for (int r = 0; r < R; ++r) h.c.push_back(parse_double(toks[6 + r], path, line_no));
  return h;
}

}  // namespace

void write_checkpoint(const SamplerCheckpoint& ckpt,
                      const std::vector<std::pair<std::string, std::string>>& run_config,
                      const std::string& path) {
  auto out = open_out(path);
  out << "MSLCHKPT 1\n";
  out << "CONFIG " << run_config.size() << "\n";
  for (const auto& [k, v] : run_config) out << k << "=" << v << "\n";
  out << "SWEEPS " << ckpt.sweeps_done << "\n";
  write_theta(out, ckpt.theta);
  out << "HMCSTEP " << format_double(ckpt.hmc_step) << "\n";
  const SceneState& s = ckpt.state;
  out << "STATE " << s.n_row << " " << s.n_col << " " << s.n_band << " " << s.n_endmember
      << "\n";
  write_vec(out, "T", s.t);
  write_vec(out, "A", s.a);
  write_vec(out, "Z", s.z);
  write_vec(out, "X", s.x);
  write_vec(out, "GAMMA", s.gamma);
  write_vec(out, "AUXT", ckpt.aux_t);
  write_vec(out, "AUXZ", ckpt.aux_z);
  out << "AUXFIELDS " << ckpt.aux_a.size() << "\n";
  for (std::size_t r = 0; r < ckpt.aux_a.size(); ++r) {
    write_vec(out, "AUXA", ckpt.aux_a[r]);
    write_vec(out, "AUXGAMMA", ckpt.aux_gamma[r]);
  }
  out << "ACCUM " << ckpt.accum.n_samples << " " << ckpt.accum.width << "\n";
  write_vec(out, "DEPTHHIST", ckpt.accum.depth_hist);
  write_vec(out, "ASUM", ckpt.accum.a_sum);
  write_vec(out, "ZCOUNT", ckpt.accum.z_count);
  write_vec(out, "XSUM", ckpt.accum.x_sum_z1);
  write_vec(out, "XCOUNT", ckpt.accum.x_count_z1);
  out << "SAMPLES " << ckpt.samples.size() << "\n";
  for (const SampleRecord& rec : ckpt.samples) {
    write_vec(out, "ST", rec.t);
    write_vec(out, "SA", rec.a);
    write_vec(out, "SZ", rec.z);
    write_vec(out, "SX", rec.x);
  }
  out << "TRACE " << ckpt.trace.size() << "\n";
  for (const SweepTrace& tr : ckpt.trace) {
    out << format_double(tr.log_lik) << " " << tr.tv_ordered << " " << tr.ising.phi_l << " "
        << tr.ising.phi_n << " " << tr.ising.n_zero << " " << tr.ising.n_one << " "
        << format_double(tr.hmc_accept_rate) << " ";
    write_theta(out, tr.theta);
  }
}

SamplerCheckpoint read_checkpoint(const std::string& path,
                                  std::map<std::string, std::string>* run_config) {
  auto in = open_in(path);
  int line_no = 0;
  std::string line;
  if (!std::getline(in, line) || line != "MSLCHKPT 1") fail(path, 1, "bad checkpoint header");
  ++line_no;
  if (!std::getline(in, line)) fail(path, line_no, "missing CONFIG");
  ++line_no;
  auto head = split_ws(line);
  if (head.size() != 2 || head[0] != "CONFIG") fail(path, line_no, "expected CONFIG");
  const int n_cfg = static_cast<int>(parse_long(head[1], path, line_no));
  for (int k = 0; k < n_cfg; ++k) {
    if (!std::getline(in, line)) fail(path, line_no, "short CONFIG section");
    ++line_no;
    auto pos = line.find('=');
    if (pos == std::string::npos) fail(path, line_no, "expected key=value");
    if (run_config) (*run_config)[line.substr(0, pos)] = line.substr(pos + 1);
  }
  SamplerCheckpoint ckpt;
  if (!std::getline(in, line)) fail(path, line_no, "missing SWEEPS");
  ++line_no;
  head = split_ws(line);
  if (head.size() != 2 || head[0] != "SWEEPS") fail(path, line_no, "expected SWEEPS");
  ckpt.sweeps_done = static_cast<std::uint32_t>(parse_long(head[1], path, line_no));
  ckpt.theta = read_theta(in, path, line_no);
  if (!std::getline(in, line)) fail(path, line_no, "missing HMCSTEP");
  ++line_no;
  head = split_ws(line);
  if (head.size() != 2 || head[0] != "HMCSTEP") fail(path, line_no, "expected HMCSTEP");
  ckpt.hmc_step = parse_double(head[1], path, line_no);
  if (!std::getline(in, line)) fail(path, line_no, "missing STATE");
  ++line_no;
  head = split_ws(line);
  if (head.size() != 5 || head[0] != "STATE") fail(path, line_no, "expected STATE");
  SceneState& s = ckpt.state;
  s.n_row = static_cast<int>(parse_long(head[1], path, line_no));
  s.n_col = static_cast<int>(parse_long(head[2], path, line_no));
  s.n_band = static_cast<int>(parse_long(head[3], path, line_no));
  s.n_endmember = static_cast<int>(parse_long(head[4], path, line_no));
  s.t = read_vec<int>(in, "T", path, line_no);
  s.a = read_vec<double>(in, "A", path, line_no);
  s.z = read_vec<std::uint8_t>(in, "Z", path, line_no);
  s.x = read_vec<double>(in, "X", path, line_no);
  s.gamma = read_vec<double>(in, "GAMMA", path, line_no);
  ckpt.aux_t = read_vec<int>(in, "AUXT", path, line_no);
  ckpt.aux_z = read_vec<std::uint8_t>(in, "AUXZ", path, line_no);
  if (!std::getline(in, line)) fail(path, line_no, "missing AUXFIELDS");
  ++line_no;
  head = split_ws(line);
  if (head.size() != 2 || head[0] != "AUXFIELDS") fail(path, line_no, "expected AUXFIELDS");
  const int n_fields = static_cast<int>(parse_long(head[1], path, line_no));
  for (int r = 0; r < n_fields; ++r) {
    ckpt.aux_a.push_back(read_vec<double>(in, "AUXA", path, line_no));
    ckpt.aux_gamma.push_back(read_vec<double>(in, "AUXGAMMA", path, line_no));
  }
  if (!std::getline(in, line)) fail(path, line_no, "missing ACCUM");
  ++line_no;
  head = split_ws(line);
  if (head.size() != 3 || head[0] != "ACCUM") fail(path, line_no, "expected ACCUM");
  ckpt.accum.n_samples = static_cast<int>(parse_long(head[1], path, line_no));
  ckpt.accum.width = static_cast<int>(parse_long(head[2], path, line_no));
  ckpt.accum.depth_hist = read_vec<std::uint32_t>(in, "DEPTHHIST", path, line_no);
  ckpt.accum.a_sum = read_vec<double>(in, "ASUM", path, line_no);
  ckpt.accum.z_count = read_vec<std::uint32_t>(in, "ZCOUNT", path, line_no);
  ckpt.accum.x_sum_z1 = read_vec<double>(in, "XSUM", path, line_no);
  ckpt.accum.x_count_z1 = read_vec<std::uint32_t>(in, "XCOUNT", path, line_no);
  if (!std::getline(in, line)) fail(path, line_no, "missing SAMPLES");
  ++line_no;
  head = split_ws(line);
  if (head.size() != 2 || head[0] != "SAMPLES") fail(path, line_no, "expected SAMPLES");
  const int n_samples = static_cast<int>(parse_long(head[1], path, line_no));
  for (int k = 0; k < n_samples; ++k) {
    SampleRecord rec;
    rec.t = read_vec<int>(in, "ST", path, line_no);
    rec.a = read_vec<double>(in, "SA", path, line_no);
    rec.z = read_vec<std::uint8_t>(in, "SZ", path, line_no);
    rec.x = read_vec<double>(in, "SX", path, line_no);
    ckpt.samples.push_back(std::move(rec));
  }
  if (!std::getline(in, line)) fail(path, line_no, "missing TRACE");
  ++line_no;
  head = split_ws(line);
  if (head.size() != 2 || head[0] != "TRACE") fail(path, line_no, "expected TRACE");
  const int n_trace = static_cast<int>(parse_long(head[1], path, line_no));
  for (int k = 0; k < n_trace; ++k) {
    if (!std::getline(in, line)) fail(path, line_no, "short TRACE section");
    ++line_no;
    auto toks = split_ws(line);
    if (toks.size() < 13 || toks[7] != "THETA") fail(path, line_no, "bad TRACE row");
    SweepTrace tr;
    tr.log_lik = parse_double(toks[0], path, line_no);
    tr.tv_ordered = parse_long(toks[1], path, line_no);
    tr.ising.phi_l = parse_long(toks[2], path, line_no);
    tr.ising.phi_n = parse_long(toks[3], path, line_no);
    tr.ising.n_zero = parse_long(toks[4], path, line_no);
    tr.ising.n_one = parse_long(toks[5], path, line_no);
    tr.hmc_accept_rate = parse_double(toks[6], path, line_no);
    tr.theta.eps = parse_double(toks[8], path, line_no);
    tr.theta.beta_n = parse_double(toks[9], path, line_no);
    tr.theta.beta_l = parse_double(toks[10], path, line_no);
    tr.theta.beta0 = parse_double(toks[11], path, line_no);
    const int R = static_cast<int>(parse_long(toks[12], path, line_no));
    if (static_cast<int>(toks.size()) != 13 + R) fail(path, line_no, "bad TRACE theta");
    for (int r = 0; r < R; ++r)
      tr.theta.c.push_back(parse_double(toks[13 + r], path, line_no));
    ckpt.trace.push_back(std::move(tr));
  }
  return ckpt;
}

}  // namespace msl
