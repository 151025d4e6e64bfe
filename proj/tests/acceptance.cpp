// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "levelcorr/autocov.hpp"
#include "levelcorr/fredholm.hpp"
#include "levelcorr/montecarlo.hpp"
#include "levelcorr/painleve.hpp"
#include "levelcorr/spectral.hpp"

using namespace levelcorr;
constexpr double pi = std::numbers::pi;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("C%-2d %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const std::string& s) {
  std::printf("    %s\n", s.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void dual_route() {
  double worst = 0.0;
  int checks = 0;
  for (double lambda : {1.0, 5.0, 10.0, 20.0, 30.0})
    for (double w : {pi / 8, pi / 4, pi / 2, 3 * pi / 4, pi}) {
      const auto p = SpectralParameter::from_omega(w);
      const cplx ode = std::exp(log_generating_function(p, lambda));
      const cplx det = fredholm::sine_kernel_det_auto(p.zeta(), lambda / (2 * pi)).value;
      worst = std::max(worst, std::abs(ode - det));
      ++checks;
    }
  report(1, worst < 1e-8, fmt("%d (lambda, omega) pairs, max |exp(int sigma/t) - det| = %.2e (< 1e-8)", checks, worst));
}

void spacing_normalization() {
  double mass = 0.0, mean = 0.0;
  for (int p = 0; p < 10; ++p) {
    const auto r = quad::gauss_legendre(16, 0.5 * p, 0.5 * (p + 1));
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double v = spacing_distribution(r.nodes[i]);
      mass += r.weights[i] * v;
      mean += r.weights[i] * r.nodes[i] * v;
    }
  }
  report(2, std::abs(mass - 1) < 1e-6 && std::abs(mean - 1) < 1e-6,
         fmt("int P = 1 %+.2e, int sP = 1 %+.2e (within 1e-6)", mass - 1, mean - 1));
}

void small_omega() {
  SpectrumConfig cfg;
  cfg.omega_min = 0.01;  // evaluate numerically at both points
  auto ratio = [&](double w) {
    return (power_spectrum(w, cfg).value - w / (2 * pi)) / (w * w * w / (4 * pi * pi * pi) * std::log(w / (2 * pi)));
  };
  const double r1 = ratio(0.1), r2 = ratio(0.05);
  report(3, r1 > 0.8 && r1 < 1.2 && std::abs(r2 - 1) < std::abs(r1 - 1),
         fmt("ratio %.6f at omega = 0.1, %.6f at omega = 0.05", r1, r2));
}

void dyson_and_beyond(const AutocovSeries& exact) {
  bool in_band = true, monotone = true;
  double prev = INFINITY, lo = INFINITY, hi = -INFINITY;
  for (int k = 10; k <= 40; ++k) {
    const double r = exact.values[k] / autocov_dyson(k);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    in_band = in_band && r > 0.9 && r < 1.1;
    monotone = monotone && std::abs(r - 1) < prev;
    prev = std::abs(r - 1);
  }
  report(4, in_band && monotone,
         fmt("exact/dyson in [%.5f, %.5f] for k = 10..40, |ratio - 1| %s decreasing", lo, hi,
             monotone ? "strictly" : "NOT"));

  std::string row;
  bool decreasing = true;
  double last = INFINITY, v40 = 0.0;
  for (int k : {10, 15, 20, 30, 40}) {
    const double v = std::pow(double(k), 4) * std::abs(exact.values[k] - autocov_asymptotic(k));
    decreasing = decreasing && v < last;
    last = v;
    v40 = v;
    row += fmt(" k=%d:%.3e", k, v);
  }
  report(5, decreasing && v40 < 0.05, "k^4 |exact - asymptotic|:" + row);

  const double R = sum_rule_residual(50, exact);
  const double tail = 1 / (pi * pi * 50);
  report(6, std::abs(R - tail) < 1e-4,
         fmt("dI_0 + 2 sum_{k<=50} dI_k = %.10f, minus 1/(50 pi^2) = %.2e (< 1e-4)", R, R - tail));
  note(fmt("with the tail added instead of subtracted the residual would be %.2e; the Dyson tail", R + tail));
  note("2 sum_{k>50} dI_k ~ -1/(50 pi^2) is negative, so the partial sum itself is +1/(50 pi^2)");
}

mc::MCResult run(const mc::MCConfig& cfg, const char* name) {
  const auto t0 = std::chrono::steady_clock::now();
  auto r = mc::run_montecarlo(cfg);
  note(fmt("%s: N = %d, M = %ld, seed = %llu, sampler = %s, %.0f s, %ld resamples", name, cfg.N, cfg.M,
           (unsigned long long)cfg.seed, mc::to_string(cfg.sampler), seconds_since(t0), r->resamples));
  return *r;
}

void mc_versus_exact(const AutocovSeries& exact) {
  mc::MCConfig cfg;
  cfg.N = 256;
  cfg.M = 100000;
  cfg.seed = 1;
  cfg.k_max = 10;
  cfg.var_k_max = 10;
  cfg.sampler = mc::Sampler::sparse_cmv;
  const auto r = run(cfg, "run A");
  int inside = 0;
  std::string misses;
  for (int k = 1; k <= 10; ++k) {
    const double d = r.autocov.mean[k] - exact.values[k];
    if (std::abs(d) <= r.autocov.half_width[k]) ++inside;
    else misses += fmt(" k=%d(%.1f hw)", k, d / r.autocov.half_width[k]);
  }
  report(7, inside >= 8, fmt("%d of 10 lags inside the 99%% CI of the exact value", inside) + misses);
}

void figure1_and_identities() {
  mc::MCConfig cfg;
  cfg.N = 256;
  cfg.M = 400000;
  cfg.seed = 2;
  cfg.k_max = 20;
  cfg.var_k_max = 10;
  cfg.sampler = mc::Sampler::sparse_cmv;
  cfg.finite_n = {64, 128};
  cfg.nv_lengths = {1, 2, 4, 8, 16, 32, 64};
  const auto r = run(cfg, "run B");

  note("k   mc - dyson   mc - (dyson + subleading)   99% half-width");
  const auto rows = mc::figure1_rows(r.autocov);
  bool consistent = true, resolved = true;
  int crossover = 0;
  for (const auto& row : rows) {
    note(fmt("%2d  %+.3e   %+.3e                   %.3e", row.k, row.minus_dyson, row.minus_asymptotic,
             row.half_width));
    if (row.k >= 5) consistent = consistent && std::abs(row.minus_asymptotic) <= row.half_width;
    if (row.k >= 2 && row.k <= 4) resolved = resolved && std::abs(row.minus_dyson) > row.half_width;
    if (std::abs(row.minus_dyson) > row.half_width) crossover = row.k;
  }
  report(8, consistent && resolved,
         fmt("subleading difference within CI for all k = 5..20: %s; Dyson difference outside CI for k = 2,3,4: %s",
             consistent ? "yes" : "no", resolved ? "yes" : "no"));
  note(fmt("largest lag with the Dyson difference outside the CI: k = %d", crossover));

  bool agree = true;
  double worst = 0.0;
  for (int k = 2; k <= 10; ++k) {
    const auto i = r.level_second_difference.row(k);
    const double d = r.level_second_difference.mean[i] - r.autocov.mean[k];
    const double ci = std::hypot(r.level_second_difference.half_width[i], r.autocov.half_width[k]);
    agree = agree && std::abs(d) <= ci;
    worst = std::max(worst, std::abs(d) / ci);
  }
  report(9, agree, fmt("half second difference of var(lambda_k) vs dI_k, k = 2..10: max |diff| / combined CI = %.3f",
                       worst));

  std::vector<double> omegas;
  for (int j = 2; j <= 16; ++j) omegas.push_back(pi * j / 16);
  double identity = 0.0;
  std::vector<double> rms;
  for (const auto& f : r.finite) {
    const auto s = mc::finite_n_power_spectra(f, omegas);
    double scale = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < omegas.size(); ++i) {
      scale = std::max(scale, std::abs(s.eig[i]));
      identity = std::max(identity, std::abs(s.eig[i] - s.predicted[i]) / scale);
      acc += s.remainder[i] * s.remainder[i];
    }
    rms.push_back(std::sqrt(acc / omegas.size()));
    note(fmt("n = %3d: max relative identity error %.2e, rms remainder %.4e, n * rms %.4f", f.n, identity, rms.back(),
             f.n * rms.back()));
  }
  const double ratio = rms[1] / rms[0];
  report(10, identity < 1e-12 && ratio > 0.35 && ratio < 0.7,
         fmt("identity error %.1e (< 1e-12); remainder(n=128)/remainder(n=64) = %.3f (1/n gives 0.5)", identity, ratio));

  for (const auto& v : r.number_variance)
    note(fmt("number variance L = %2d: %.4f +- %.4f (log law %.4f)", v.L, v.value, v.half_width,
             (std::log(2 * pi * v.L) + std::numbers::egamma + 1) / (pi * pi)));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void determinism(const AutocovSeries& exact) {
  const auto dir = std::filesystem::temp_directory_path() / ("levelcorr_accept_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  bool same = true;
  std::string detail;
  auto cli = [&](const std::string& args, const std::string& out) {
    const std::string cmd = std::string(LEVELCORR_CLI) + " " + args + " -o " + (dir / out).string();
    if (std::system(cmd.c_str()) != 0) {
      same = false;
      detail += " [" + args + " failed]";
    }
    return slurp((dir / out).string());
  };
  const std::string mc = "montecarlo -N 64 -M 3000 --seed 5 --chunk 100 --finite-n 32 --nv 4";
  const auto m1 = cli(mc + " --threads 1", "m1.csv");
  const auto m4 = cli(mc + " --threads 4", "m4.csv");
  const auto m4b = cli(mc + " --threads 4", "m4b.csv");
  const auto j1 = cli("--format json " + mc + " --threads 1", "j1.json");
  const auto j3 = cli("--format json " + mc + " --threads 3", "j3.json");
  const auto a1 = cli("autocov --k-max 30 --threads 1", "a1.csv");
  const auto a4 = cli("autocov --k-max 30 --threads 4", "a4.csv");
  const auto s1 = cli("spectrum --points 9 --threads 1", "s1.csv");
  const auto s4 = cli("spectrum --points 9 --threads 4", "s4.csv");
  same = same && !m1.empty() && m1 == m4 && m4 == m4b && j1 == j3 && a1 == a4 && s1 == s4;

  const auto series4 = autocov_exact_series(40, SpectrumInterpolant::build({}, {}, 4), {}, 4);
  same = same && series4.values == std::vector<double>(exact.values.begin(), exact.values.begin() + 41);
  std::filesystem::remove_all(dir);
  report(11, same, "CLI montecarlo (CSV, JSON), autocov and spectrum outputs byte-identical at 1, 3, 4 threads" + detail);
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  dual_route();
  spacing_normalization();
  small_omega();
  const auto exact = autocov_exact_series(50, SpectrumInterpolant::build({}, {}));
  dyson_and_beyond(exact);
  mc_versus_exact(exact);
  figure1_and_identities();
  determinism(exact);
  std::printf("%s: %d failing criteria, %.0f s\n", failures ? "FAILED" : "ALL PASSED", failures, seconds_since(t0));
  return failures ? 1 : 0;
}
