#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "levelcorr/autocov.hpp"
#include "levelcorr/cue.hpp"
#include "levelcorr/detail/parallel.hpp"
#include "levelcorr/error.hpp"

namespace levelcorr::mc {

/// Two-sided 99% normal quantile.
inline constexpr double kC99 = 2.5758293035489004;

struct MCConfig {
  int N = 256;
  long M = 100000;
  std::uint64_t seed = 1;
  int k_max = 20;
  Sampler sampler = Sampler::qr_haar;
  /// Ordered-level variance is reported for k = 1..var_k_max + 1.
  int var_k_max = 64;
  /// Window lengths for the number variance; each at most N/4.
  std::vector<int> nv_lengths;
  /// Window sizes for the finite-n covariance spectra; each in [16, N - 1].
  std::vector<int> finite_n;
  /// Samples per reduction unit. Results depend on it, never on thread count.
  long chunk = 500;
  double confidence = kC99;

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("MCConfig: " + m); };
    if (N < 4) fail("N must be >= 4");
    if (M < 2) fail("M must be >= 2");
    if (k_max < 0 || k_max > N - 2) fail("k_max must lie in [0, N - 2]");
    if (var_k_max < 1 || var_k_max + 1 > N - 2) fail("var_k_max must lie in [1, N - 3]");
    for (int L : nv_lengths)
      if (L < 1 || 4 * L > N) fail("number-variance length must lie in [1, N/4]");
    for (int n : finite_n)
      if (n < 16 || n > N - 1) fail("finite-n window must lie in [16, N - 1]");
    if (chunk < 1) fail("chunk must be >= 1");
    if (!(confidence > 0)) fail("confidence multiplier must be positive");
  }

  nlohmann::json to_json() const {
    return {{"N", N},           {"M", M},         {"seed", seed},           {"k_max", k_max},
            {"sampler", to_string(sampler)},      {"var_k_max", var_k_max}, {"nv_lengths", nv_lengths},
            {"finite_n", finite_n}, {"chunk", chunk}, {"confidence", confidence}};
  }
};

// ---------------------------------------------------------------------------
// Streaming moments with deterministic pairwise merging.

class Moments {
 public:
  explicit Moments(std::size_t dim = 0) : mean_(dim, 0.0), m2_(dim, 0.0) {}

  void add(const double* x) {
    ++n_;
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      const double d = x[i] - mean_[i];
      mean_[i] += d / n_;
      m2_[i] += d * (x[i] - mean_[i]);
    }
  }
  void add(const std::vector<double>& x) {
    if (x.size() != mean_.size()) throw std::invalid_argument("Moments: dimension mismatch");
    add(x.data());
  }

  void merge(const Moments& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    if (o.mean_.size() != mean_.size()) throw std::invalid_argument("Moments: dimension mismatch");
    const double n = double(n_ + o.n_), wa = double(n_), wb = double(o.n_);
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      const double d = o.mean_[i] - mean_[i];
      mean_[i] += d * wb / n;
      m2_[i] += o.m2_[i] + d * d * wa * wb / n;
    }
    n_ += o.n_;
  }

  long count() const { return n_; }
  std::size_t dim() const { return mean_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  /// Unbiased sample variance of component i.
  double variance(std::size_t i) const { return n_ > 1 ? m2_[i] / (n_ - 1) : 0.0; }

  nlohmann::json to_json() const { return {{"n", n_}, {"mean", mean_}, {"m2", m2_}}; }
  static Moments from_json(const nlohmann::json& j) {
    Moments m;
    m.n_ = j.at("n").get<long>();
    m.mean_ = j.at("mean").get<std::vector<double>>();
    m.m2_ = j.at("m2").get<std::vector<double>>();
    if (m.mean_.size() != m.m2_.size()) throw CheckpointMismatch("checkpoint: malformed moments");
    return m;
  }

 private:
  long n_ = 0;
  std::vector<double> mean_, m2_;
};

class Comoments {
 public:
  explicit Comoments(int dim = 0) : mean_(Eigen::VectorXd::Zero(dim)), c_(Eigen::MatrixXd::Zero(dim, dim)) {}

  void add(const Eigen::VectorXd& x) {
    ++n_;
    const Eigen::VectorXd d = x - mean_;
    mean_ += d / double(n_);
    c_.noalias() += d * (x - mean_).transpose();
  }

  void merge(const Comoments& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double n = double(n_ + o.n_), wa = double(n_), wb = double(o.n_);
    const Eigen::VectorXd d = o.mean_ - mean_;
    mean_ += d * (wb / n);
    c_ += o.c_ + d * d.transpose() * (wa * wb / n);
    n_ += o.n_;
  }

  long count() const { return n_; }
  /// Unbiased sample covariance matrix.
  Eigen::MatrixXd covariance() const { return n_ > 1 ? Eigen::MatrixXd(c_ / double(n_ - 1)) : Eigen::MatrixXd(c_ * 0.0); }

  nlohmann::json to_json() const {
    return {{"n", n_},
            {"mean", std::vector<double>(mean_.data(), mean_.data() + mean_.size())},
            {"c", std::vector<double>(c_.data(), c_.data() + c_.size())}};
  }
  static Comoments from_json(const nlohmann::json& j) {
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto c = j.at("c").get<std::vector<double>>();
    const int d = static_cast<int>(mean.size());
    if (c.size() != std::size_t(d) * d) throw CheckpointMismatch("checkpoint: malformed covariance");
    Comoments m(d);
    m.n_ = j.at("n").get<long>();
    m.mean_ = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
    m.c_ = Eigen::Map<const Eigen::MatrixXd>(c.data(), d, d);
    return m;
  }

 private:
  long n_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd c_;
};

// ---------------------------------------------------------------------------
// Per-sample statistics.

/// Spacings between consecutive sorted eigenangles; the wrap-around gap is dropped.
inline std::vector<double> raw_spacings(const std::vector<double>& angles) {
  std::vector<double> s(angles.size() - 1);
  for (std::size_t l = 0; l + 1 < angles.size(); ++l) s[l] = angles[l + 1] - angles[l];
  return s;
}

/// (m - k)^{-1} sum_l (s_l s_{l+k} - 1) over a sample of m spacings.
inline double running_autocov(const std::vector<double>& s, int k) {
  const int m = static_cast<int>(s.size());
  if (k < 0 || k >= m) throw std::invalid_argument("running_autocov: k out of range");
  double acc = 0.0;
  for (int l = 0; l + k < m; ++l) acc += s[l] * s[l + k] - 1.0;
  return acc / (m - k);
}

/// v_k = mean over window starts j of (sum_{l=j}^{j+k-1} (s_l - 1))^2 for
/// k = 1..K, all windows sharing the starts j = 0..m - K.
inline std::vector<double> level_variance_terms(const std::vector<double>& s, int K) {
  const int m = static_cast<int>(s.size());
  if (K < 1 || K > m) throw std::invalid_argument("level_variance_terms: K out of range");
  std::vector<double> prefix(m + 1, 0.0);
  for (int l = 0; l < m; ++l) prefix[l + 1] = prefix[l] + (s[l] - 1.0);
  const int windows = m - K + 1;
  std::vector<double> v(K, 0.0);
  for (int j = 0; j < windows; ++j)
    for (int k = 1; k <= K; ++k) {
      const double u = prefix[j + k] - prefix[j];
      v[k - 1] += u * u;
    }
  for (double& x : v) x /= windows;
  return v;
}

/// q_k = (v_{k+1} - 2 v_k + v_{k-1}) / 2 for k = 1..K-1 with v_0 = 0.
inline std::vector<double> second_difference(const std::vector<double>& v) {
  std::vector<double> q(v.size() - 1);
  for (std::size_t k = 1; k < v.size(); ++k) q[k - 1] = 0.5 * (v[k] - 2 * v[k - 1] + (k >= 2 ? v[k - 2] : 0.0));
  return q;
}

struct CountMoments {
  double centered;  ///< mean over windows of (count - L)^2
  double mean;      ///< mean count
};

/// Counts of unfolded levels in [x, x + L) for x on a grid of step 1/2 over
/// the sample's extent.
inline CountMoments window_counts(const std::vector<double>& s, int L) {
  std::vector<double> level(s.size() + 1, 0.0);
  for (std::size_t l = 0; l < s.size(); ++l) level[l + 1] = level[l] + s[l];
  const double span = level.back() - L;
  if (span < 0) throw std::invalid_argument("window_counts: window longer than the sample");
  std::size_t lo = 0, hi = 0;
  double c2 = 0.0, c1 = 0.0;
  long windows = 0;
  for (double x = 0.0; x <= span; x += 0.5, ++windows) {
    while (lo < level.size() && level[lo] < x) ++lo;
    while (hi < level.size() && level[hi] < x + L) ++hi;
    const double c = double(hi - lo);
    c1 += c;
    c2 += (c - L) * (c - L);
  }
  return {c2 / windows, c1 / windows};
}

// ---------------------------------------------------------------------------
// Batches (small ensembles held in memory).

struct CueBatch {
  std::vector<std::vector<double>> eigenangles;
  std::vector<std::vector<double>> raw_spacings;
  std::vector<std::vector<double>> unfolded_spacings;
};

/// Eigenangles of sample `index` of the run (cfg.seed, cfg.sampler).
inline std::vector<double> sample_angles(const MCConfig& cfg, long index, long* resamples = nullptr) {
  auto rng = sample_rng(cfg.seed, static_cast<std::uint64_t>(index));
  return sample_cue_eigenangles(cfg.N, rng, cfg.sampler, resamples);
}

inline CueBatch sample_batch(const MCConfig& cfg, long first, long count) {
  CueBatch b;
  for (long a = first; a < first + count; ++a) {
    b.eigenangles.push_back(sample_angles(cfg, a));
    b.raw_spacings.push_back(mc::raw_spacings(b.eigenangles.back()));
  }
  return b;
}

/// Per-position ensemble mean of the raw spacings.
inline std::vector<double> mean_spacings(const CueBatch& b) {
  if (b.raw_spacings.empty()) throw std::invalid_argument("mean_spacings: empty batch");
  Moments m(b.raw_spacings.front().size());
  for (const auto& s : b.raw_spacings) m.add(s);
  return m.mean();
}

inline std::vector<double> unfold_sample(const std::vector<double>& raw, const std::vector<double>& delta) {
  if (raw.size() != delta.size()) throw std::invalid_argument("unfold: spacing count mismatch");
  std::vector<double> s(raw.size());
  for (std::size_t l = 0; l < raw.size(); ++l) {
    if (!(delta[l] > 0)) throw NumericalError("unfold: non-positive mean spacing");
    s[l] = raw[l] / delta[l];
  }
  return s;
}

inline void unfold(CueBatch& b, const std::vector<double>& delta) {
  b.unfolded_spacings.clear();
  for (const auto& raw : b.raw_spacings) b.unfolded_spacings.push_back(unfold_sample(raw, delta));
}

// ---------------------------------------------------------------------------
// Estimates.

struct MCEstimate {
  std::string label = "k";
  std::vector<int> index;
  std::vector<double> mean, std, half_width;
  int N = 0;
  long M = 0;
  std::uint64_t seed = 0;

  /// Row of index value i; throws if absent.
  std::size_t row(int i) const {
    const auto it = std::find(index.begin(), index.end(), i);
    if (it == index.end()) throw std::out_of_range("MCEstimate: no row " + std::to_string(i));
    return static_cast<std::size_t>(it - index.begin());
  }

  void write_csv(std::ostream& out) const {
    out.precision(17);
    out << label << ",mean,std,half_width,N,M,seed\n";
    for (std::size_t r = 0; r < index.size(); ++r)
      out << index[r] << ',' << mean[r] << ',' << std[r] << ',' << half_width[r] << ',' << N << ',' << M << ','
          << seed << '\n';
  }
};

/// Mean, unbiased standard deviation and half-width c sqrt(var / M) per component.
inline MCEstimate finalize(const Moments& m, double c, std::vector<int> index, std::string label = "k") {
  if (m.count() < 2) throw std::invalid_argument("aggregate: need at least 2 samples");
  MCEstimate e;
  e.label = std::move(label);
  e.index = std::move(index);
  e.M = m.count();
  for (std::size_t i = 0; i < m.dim(); ++i) {
    const double sd = std::sqrt(m.variance(i));
    e.mean.push_back(m.mean()[i]);
    e.std.push_back(sd);
    e.half_width.push_back(c * sd / std::sqrt(double(m.count())));
  }
  return e;
}

/// per_sample[alpha][i] -> estimate over alpha; index defaults to 0, 1, ...
inline MCEstimate aggregate(const std::vector<std::vector<double>>& per_sample, double c = kC99) {
  if (per_sample.size() < 2) throw std::invalid_argument("aggregate: need at least 2 samples");
  Moments m(per_sample.front().size());
  for (const auto& x : per_sample) m.add(x);
  std::vector<int> index(m.dim());
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = static_cast<int>(i);
  return finalize(m, c, index);
}

/// Window-averaged var(lambda_k), k = 1..K, and its second difference over a batch.
struct LevelVariance {
  MCEstimate variance;           ///< k = 1..K
  MCEstimate second_difference;  ///< k = 1..K-1
};

inline LevelVariance ordered_level_variance(const CueBatch& b, int K, double c = kC99) {
  if (b.unfolded_spacings.size() < 2) throw std::invalid_argument("ordered_level_variance: unfold a batch of >= 2 first");
  Moments v(K), q(K - 1);
  for (const auto& s : b.unfolded_spacings) {
    const auto terms = level_variance_terms(s, K);
    v.add(terms);
    q.add(second_difference(terms));
  }
  std::vector<int> iv(K), iq(K - 1);
  for (int k = 0; k < K; ++k) iv[k] = k + 1;
  for (int k = 0; k + 1 < K; ++k) iq[k] = k + 1;
  return {finalize(v, c, iv), finalize(q, c, iq)};
}

/// Sigma^2(L): pooled variance of window counts, with a 99% half-width.
struct NumberVariance {
  int L;
  double value;
  double half_width;
};

inline NumberVariance number_variance_from(const Moments& centered, const Moments& mean, int L, std::size_t i, double c) {
  const double bias = mean.mean()[i] - L;
  return {L, centered.mean()[i] - bias * bias, c * std::sqrt(centered.variance(i) / double(centered.count()))};
}

inline NumberVariance number_variance(const CueBatch& b, int L, double c = kC99) {
  if (b.unfolded_spacings.size() < 2) throw std::invalid_argument("number_variance: unfold a batch of >= 2 first");
  if (L < 1 || 4 * L > static_cast<int>(b.unfolded_spacings.front().size()) + 1)
    throw std::invalid_argument("number_variance: L must lie in [1, N/4]");
  Moments cm(1), mm(1);
  for (const auto& s : b.unfolded_spacings) {
    const auto w = window_counts(s, L);
    cm.add(&w.centered);
    mm.add(&w.mean);
  }
  return number_variance_from(cm, mm, L, 0, c);
}

// ---------------------------------------------------------------------------
// Finite-n spectra from empirical covariances.

struct FiniteNCovariance {
  int n = 0;
  long samples = 0;
  Eigen::MatrixXd spacing;  ///< cov(s_i, s_j), i, j = 1..n
  Eigen::MatrixXd level;    ///< cov(lambda_i, lambda_j), lambda_i = s_1 + ... + s_i
};

struct FiniteNSpectra {
  int n = 0;
  std::vector<double> omega;
  std::vector<double> sp;         ///< (1/n) sum_ij C_ij e^{i omega (i - j)}
  std::vector<double> eig;        ///< same with the level covariance
  std::vector<double> predicted;  ///< [sp(w) + sp(0) - (2/n) r_n(w)] / (4 sin^2(w/2))
  std::vector<double> remainder;  ///< -(2/n) r_n(w) / (4 sin^2(w/2))
  double sp_zero = 0.0;
};

/// r_n(w) = Re sum_ij C_ij e^{i w (i - n - 1)}.
inline FiniteNSpectra finite_n_power_spectra(const FiniteNCovariance& f, const std::vector<double>& omegas) {
  if (f.n < 16) throw std::invalid_argument("finite_n_power_spectra: n must be >= 16");
  const int n = f.n;
  auto toeplitz_sum = [n](const Eigen::MatrixXd& c, double w) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) acc += c(i, j) * std::cos(w * (i - j));
    return acc / n;
  };
  FiniteNSpectra out;
  out.n = n;
  out.sp_zero = toeplitz_sum(f.spacing, 0.0);
  const Eigen::VectorXd row = f.spacing.rowwise().sum();
  for (double w : omegas) {
    if (!(w > 0 && w <= std::numbers::pi)) throw std::invalid_argument("finite_n_power_spectra: omega must lie in (0, pi]");
    double r = 0.0;
    for (int i = 0; i < n; ++i) r += row(i) * std::cos(w * (i + 1 - (n + 1)));
    const double d = 4 * std::pow(std::sin(0.5 * w), 2);
    const double sp = toeplitz_sum(f.spacing, w);
    out.omega.push_back(w);
    out.sp.push_back(sp);
    out.eig.push_back(toeplitz_sum(f.level, w));
    out.predicted.push_back((sp + out.sp_zero - 2.0 / n * r) / d);
    out.remainder.push_back(-2.0 / n * r / d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// The two-pass ensemble run.

struct MCResult {
  MCConfig config;
  long resamples = 0;
  std::vector<double> mean_spacing;    ///< Delta_l, l = 1..N-1
  MCEstimate autocov;                  ///< k = 0..k_max
  MCEstimate level_variance;           ///< k = 1..var_k_max + 1
  MCEstimate level_second_difference;  ///< k = 1..var_k_max
  std::vector<NumberVariance> number_variance;
  std::vector<FiniteNCovariance> finite;
};

struct RunOptions {
  unsigned threads = default_threads();
  /// Checkpoint file written at batch boundaries; empty disables.
  std::string checkpoint;
  bool resume = false;
  /// Stop after this many chunks in this invocation (negative: no limit).
  long max_chunks = -1;
};

namespace detail {

/// Pass-two accumulators for one chunk or for the whole run.
struct Accumulators {
  Moments autocov, level, second, nv_centered, nv_mean;
  std::vector<Comoments> spacing_cov, level_cov;

  explicit Accumulators(const MCConfig& c)
      : autocov(c.k_max + 1),
        level(c.var_k_max + 1),
        second(c.var_k_max),
        nv_centered(c.nv_lengths.size()),
        nv_mean(c.nv_lengths.size()) {
    for (int n : c.finite_n) {
      spacing_cov.emplace_back(n);
      level_cov.emplace_back(n);
    }
  }

  void add(const MCConfig& c, const std::vector<double>& s) {
    std::vector<double> ac(c.k_max + 1);
    for (int k = 0; k <= c.k_max; ++k) ac[k] = running_autocov(s, k);
    autocov.add(ac);
    const auto v = level_variance_terms(s, c.var_k_max + 1);
    level.add(v);
    second.add(second_difference(v));
    if (!c.nv_lengths.empty()) {
      std::vector<double> cen, mean;
      for (int L : c.nv_lengths) {
        const auto w = window_counts(s, L);
        cen.push_back(w.centered);
        mean.push_back(w.mean);
      }
      nv_centered.add(cen);
      nv_mean.add(mean);
    }
    for (std::size_t i = 0; i < c.finite_n.size(); ++i) {
      const int n = c.finite_n[i];
      const int start = (static_cast<int>(s.size()) - n) / 2;
      const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(s.data() + start, n);
      Eigen::VectorXd lam(n);
      double acc = 0.0;
      for (int j = 0; j < n; ++j) lam(j) = acc += x(j);
      spacing_cov[i].add(x);
      level_cov[i].add(lam);
    }
  }

  void merge(const Accumulators& o) {
    autocov.merge(o.autocov);
    level.merge(o.level);
    second.merge(o.second);
    nv_centered.merge(o.nv_centered);
    nv_mean.merge(o.nv_mean);
    for (std::size_t i = 0; i < spacing_cov.size(); ++i) {
      spacing_cov[i].merge(o.spacing_cov[i]);
      level_cov[i].merge(o.level_cov[i]);
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"autocov", autocov.to_json()},         {"level", level.to_json()},
                     {"second", second.to_json()},           {"nv_centered", nv_centered.to_json()},
                     {"nv_mean", nv_mean.to_json()},         {"spacing_cov", nlohmann::json::array()},
                     {"level_cov", nlohmann::json::array()}};
    for (std::size_t i = 0; i < spacing_cov.size(); ++i) {
      j["spacing_cov"].push_back(spacing_cov[i].to_json());
      j["level_cov"].push_back(level_cov[i].to_json());
    }
    return j;
  }

  void load(const nlohmann::json& j) {
    autocov = Moments::from_json(j.at("autocov"));
    level = Moments::from_json(j.at("level"));
    second = Moments::from_json(j.at("second"));
    nv_centered = Moments::from_json(j.at("nv_centered"));
    nv_mean = Moments::from_json(j.at("nv_mean"));
    for (std::size_t i = 0; i < spacing_cov.size(); ++i) {
      spacing_cov[i] = Comoments::from_json(j.at("spacing_cov").at(i));
      level_cov[i] = Comoments::from_json(j.at("level_cov").at(i));
    }
  }
};

struct RunState {
  int pass = 1;
  long next_chunk = 0;
  long resamples = 0;
  Moments spacing;  // pass one: raw spacings per position
  std::vector<double> delta;
  Accumulators acc;

  explicit RunState(const MCConfig& c) : spacing(c.N - 1), acc(c) {}
};

inline constexpr const char* kCheckpointFormat = "levelcorr-mc-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline void write_checkpoint(const std::string& path, const MCConfig& c, const RunState& s) {
  nlohmann::json j{{"format", kCheckpointFormat}, {"version", kCheckpointVersion}, {"config", c.to_json()},
                   {"pass", s.pass},              {"next_chunk", s.next_chunk},   {"resamples", s.resamples},
                   {"spacing", s.spacing.to_json()}, {"delta", s.delta},          {"accumulators", s.acc.to_json()}};
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    out << j.dump();
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline RunState read_checkpoint(const std::string& path, const MCConfig& c) {
  std::ifstream in(path);
  if (!in) throw CheckpointMismatch("checkpoint " + path + " cannot be read");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointMismatch("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat || j.value("version", 0) != kCheckpointVersion)
    throw CheckpointMismatch("checkpoint " + path + " has an unknown format or version");
  if (j.at("config") != c.to_json())
    throw CheckpointMismatch("checkpoint " + path + " was written for a different configuration: " +
                             j.at("config").dump());
  RunState s(c);
  try {
    s.pass = j.at("pass").get<int>();
    s.next_chunk = j.at("next_chunk").get<long>();
    s.resamples = j.at("resamples").get<long>();
    s.spacing = Moments::from_json(j.at("spacing"));
    s.delta = j.at("delta").get<std::vector<double>>();
    s.acc.load(j.at("accumulators"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointMismatch("checkpoint " + path + " is malformed: " + e.what());
  }
  return s;
}

}  // namespace detail

/// Two passes over M samples regenerated from the seed: pass one accumulates
/// the per-position mean spacings Delta_l, pass two unfolds and accumulates
/// all statistics. Samples are grouped into fixed chunks whose accumulators
/// are merged in chunk order. Returns nullopt if stopped by max_chunks.
inline std::optional<MCResult> run_montecarlo(const MCConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  detail::RunState st(cfg);
  if (opt.resume) {
    if (opt.checkpoint.empty()) throw std::invalid_argument("run_montecarlo: resume needs a checkpoint path");
    if (std::filesystem::exists(opt.checkpoint)) st = detail::read_checkpoint(opt.checkpoint, cfg);
  }
  const long chunks = (cfg.M + cfg.chunk - 1) / cfg.chunk;
  const unsigned threads = std::max(1u, opt.threads);
  long budget = opt.max_chunks;

  auto chunk_range = [&](long c) { return std::pair{c * cfg.chunk, std::min(cfg.M, (c + 1) * cfg.chunk)}; };

  while (st.pass <= 2) {
    if (st.next_chunk >= chunks) {
      if (st.pass == 1) {
        st.delta = st.spacing.mean();
        for (double d : st.delta)
          if (!(d > 0)) throw NumericalError("run_montecarlo: non-positive mean spacing");
      }
      ++st.pass;
      st.next_chunk = 0;
      continue;
    }
    if (budget == 0) {
      if (!opt.checkpoint.empty()) detail::write_checkpoint(opt.checkpoint, cfg, st);
      return std::nullopt;
    }
    long batch = std::min<long>(chunks - st.next_chunk, 4L * threads);
    if (budget > 0) batch = std::min(batch, budget);
    if (st.pass == 1) {
      std::vector<Moments> part(batch, Moments(cfg.N - 1));
      std::vector<long> res(batch, 0);
      levelcorr::detail::parallel_for(batch, threads, [&](std::size_t b) {
        const auto [lo, hi] = chunk_range(st.next_chunk + long(b));
        for (long a = lo; a < hi; ++a) part[b].add(raw_spacings(sample_angles(cfg, a, &res[b])));
      });
      for (long b = 0; b < batch; ++b) {
        st.spacing.merge(part[b]);
        st.resamples += res[b];
      }
    } else {
      std::vector<detail::Accumulators> part(batch, detail::Accumulators(cfg));
      levelcorr::detail::parallel_for(batch, threads, [&](std::size_t b) {
        const auto [lo, hi] = chunk_range(st.next_chunk + long(b));
        for (long a = lo; a < hi; ++a) part[b].add(cfg, unfold_sample(raw_spacings(sample_angles(cfg, a)), st.delta));
      });
      for (long b = 0; b < batch; ++b) st.acc.merge(part[b]);
    }
    st.next_chunk += batch;
    if (budget > 0) budget -= batch;
    if (!opt.checkpoint.empty()) detail::write_checkpoint(opt.checkpoint, cfg, st);
  }

  MCResult r;
  r.config = cfg;
  r.resamples = st.resamples;
  r.mean_spacing = st.delta;
  std::vector<int> ik(cfg.k_max + 1), iv(cfg.var_k_max + 1), iq(cfg.var_k_max);
  for (int k = 0; k <= cfg.k_max; ++k) ik[k] = k;
  for (int k = 0; k <= cfg.var_k_max; ++k) iv[k] = k + 1;
  for (int k = 0; k < cfg.var_k_max; ++k) iq[k] = k + 1;
  auto stamp = [&](MCEstimate e) {
    e.N = cfg.N;
    e.seed = cfg.seed;
    return e;
  };
  r.autocov = stamp(finalize(st.acc.autocov, cfg.confidence, ik));
  r.level_variance = stamp(finalize(st.acc.level, cfg.confidence, iv));
  r.level_second_difference = stamp(finalize(st.acc.second, cfg.confidence, iq));
  for (std::size_t i = 0; i < cfg.nv_lengths.size(); ++i)
    r.number_variance.push_back(
        number_variance_from(st.acc.nv_centered, st.acc.nv_mean, cfg.nv_lengths[i], i, cfg.confidence));
  for (std::size_t i = 0; i < cfg.finite_n.size(); ++i)
    r.finite.push_back({cfg.finite_n[i], st.acc.spacing_cov[i].count(), st.acc.spacing_cov[i].covariance(),
                        st.acc.level_cov[i].covariance()});
  return r;
}

// ---------------------------------------------------------------------------
// Comparison with the closed forms.

struct Figure1Row {
  int k;
  double mc, half_width;
  double dyson, asymptotic;
  double minus_dyson, minus_asymptotic;
  double ratio_dyson, ratio_asymptotic;
};

/// Differences and ratios of an autocovariance estimate against the Dyson
/// term and the Dyson plus subleading term, for k >= 1.
inline std::vector<Figure1Row> figure1_rows(const MCEstimate& e) {
  std::vector<Figure1Row> rows;
  for (std::size_t r = 0; r < e.index.size(); ++r) {
    const int k = e.index[r];
    if (k < 1) continue;
    const double d = autocov_dyson(k), a = autocov_asymptotic(k), m = e.mean[r];
    rows.push_back({k, m, e.half_width[r], d, a, m - d, m - a, m / d, m / a});
  }
  return rows;
}

inline void write_figure1_csv(std::ostream& out, const std::vector<Figure1Row>& rows) {
  out.precision(17);
  out << "k,mc,half_width,dyson,asymptotic,mc_minus_dyson,mc_minus_asymptotic,ratio_dyson,ratio_asymptotic\n";
  for (const auto& r : rows)
    out << r.k << ',' << r.mc << ',' << r.half_width << ',' << r.dyson << ',' << r.asymptotic << ','
        << r.minus_dyson << ',' << r.minus_asymptotic << ',' << r.ratio_dyson << ',' << r.ratio_asymptotic << '\n';
}

}  // namespace levelcorr::mc
