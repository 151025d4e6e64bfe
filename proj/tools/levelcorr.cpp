#include <algorithm>
#include <cmath>
#include <functional>
#include <fstream>
#include <iostream>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "levelcorr/autocov.hpp"
#include "levelcorr/fredholm.hpp"
#include "levelcorr/montecarlo.hpp"
#include "levelcorr/painleve.hpp"
#include "levelcorr/spectral.hpp"

using namespace levelcorr;
using json = nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kSchemaVersion = 1;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Common {
  unsigned threads = 0;
  std::string out;
  std::string format = "csv";

  unsigned workers() const { return threads > 0 ? threads : default_threads(); }
  bool as_json() const { return format == "json"; }
};

json envelope(const std::string& kind) { return {{"schema", "levelcorr/" + kind}, {"schema_version", kSchemaVersion}}; }

/// Writes to --out, or stdout when empty.
template <class F>
void emit(const Common& c, F&& write) {
  if (c.out.empty()) {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream f(c.out);
  if (!f) throw std::runtime_error("cannot open " + c.out);
  write(f);
  if (!f) throw std::runtime_error("cannot write " + c.out);
}

void write_json(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

SpectralParameter parameter(const std::optional<double>& omega, double zeta_re, double zeta_im) {
  if (omega) {
    if (!(*omega >= 0 && *omega <= 2 * kPi)) throw UsageError("--omega must lie in [0, 2pi]");
    return SpectralParameter::from_omega(*omega);
  }
  return SpectralParameter::from_zeta({zeta_re, zeta_im});
}

// ---------------------------------------------------------------------------

struct SpectrumArgs {
  double omega_min = 0.05, omega_max = kPi;
  int points = 64;
  std::vector<double> omegas;
  std::string backend = "painleve";
};

void cmd_spectrum(const Common& c, const SpectrumArgs& a) {
  std::vector<double> grid = a.omegas;
  if (grid.empty()) {
    if (a.points < 1) throw UsageError("empty omega grid (--points must be >= 1)");
    if (!(a.omega_min > 0 && a.omega_min <= a.omega_max && a.omega_max <= kPi))
      throw UsageError("need 0 < omega-min <= omega-max <= pi");
    for (int i = 0; i < a.points; ++i)
      grid.push_back(a.points == 1 ? a.omega_max
                                   : a.omega_min + (a.omega_max - a.omega_min) * i / double(a.points - 1));
  }
  for (double w : grid)
    if (!(w > 0 && w <= kPi)) throw UsageError("omega values must lie in (0, pi]");
  SpectrumConfig cfg;
  cfg.backend = backend_from_string(a.backend);
  const auto t = power_spectrum_table(grid, cfg, c.workers());
  emit(c, [&](std::ostream& out) {
    if (!c.as_json()) return t.write_csv(out);
    json j = envelope("spectrum");
    j["backend"] = to_string(t.backend);
    j["omega"] = t.omegas;
    j["S"] = t.values;
    j["err"] = t.err_estimates;
    write_json(out, j);
  });
}

// ---------------------------------------------------------------------------

struct AutocovArgs {
  int k_max = 20;
  std::string backend = "all";
};

void cmd_autocov(const Common& c, const AutocovArgs& a) {
  if (a.k_max < 1) throw UsageError("--k-max must be >= 1");
  if (a.backend != "all") {
    const auto b = autocov_backend_from_string(a.backend);
    if (b == AutocovBackend::montecarlo) throw UsageError("use the montecarlo subcommand for sampled estimates");
    const auto s = b == AutocovBackend::exact
                       ? autocov_exact_series(a.k_max, SpectrumInterpolant::build({}, {}, c.workers()), {}, c.workers())
                       : autocov_formula_series(a.k_max, b);
    emit(c, [&](std::ostream& out) {
      if (!c.as_json()) return s.write_csv(out);
      json j = envelope("autocov_series");
      j["backend"] = to_string(s.backend);
      j["k_max"] = s.k_max;
      std::vector<json> v;
      for (double x : s.values) v.push_back(std::isnan(x) ? json(nullptr) : json(x));
      j["values"] = v;
      write_json(out, j);
    });
    return;
  }
  const auto exact = autocov_exact_series(a.k_max, SpectrumInterpolant::build({}, {}, c.workers()), {}, c.workers());
  struct Row {
    int k;
    double exact, dyson, asym, asym_ci;
  };
  std::vector<Row> rows;
  for (int k = 1; k <= a.k_max; ++k)
    rows.push_back({k, exact.values[k], autocov_dyson(k), autocov_asymptotic(k), autocov_asymptotic_ci(k)});
  emit(c, [&](std::ostream& out) {
    if (c.as_json()) {
      json j = envelope("autocov");
      j["variance"] = exact.values[0];
      for (const auto& r : rows)
        j["rows"].push_back({{"k", r.k}, {"exact", r.exact}, {"dyson", r.dyson}, {"asymptotic", r.asym},
                             {"asymptotic_ci", r.asym_ci}});
      j["sum_rule_residual"] = sum_rule_residual(a.k_max, exact);
      j["dyson_tail_estimate"] = dyson_tail_estimate(a.k_max);
      return write_json(out, j);
    }
    out.precision(17);
    out << "k,exact,dyson,asymptotic,asymptotic_ci,ratio_exact_dyson,k4_exact_minus_asymptotic\n";
    out << 0 << ',' << exact.values[0] << ",,,,,\n";
    for (const auto& r : rows)
      out << r.k << ',' << r.exact << ',' << r.dyson << ',' << r.asym << ',' << r.asym_ci << ',' << r.exact / r.dyson
          << ',' << std::pow(double(r.k), 4) * std::abs(r.exact - r.asym) << '\n';
  });
}

// ---------------------------------------------------------------------------

struct MonteCarloArgs {
  mc::MCConfig cfg;
  std::string sampler = "sparse_cmv";
  std::string checkpoint;
  bool resume = false;
  long stop_after = -1;
  std::string level_out, nv_out, finite_out;
  int finite_points = 32;
};

json estimate_json(const mc::MCEstimate& e) {
  return {{e.label, e.index}, {"mean", e.mean}, {"std", e.std}, {"half_width", e.half_width}};
}

void write_csv_file(const std::string& path, const std::function<void(std::ostream&)>& f) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(17);
  f(out);
}

void cmd_montecarlo(const Common& c, MonteCarloArgs a) {
  a.cfg.sampler = mc::sampler_from_string(a.sampler);
  a.cfg.validate();
  if (a.resume && a.checkpoint.empty()) throw UsageError("--resume needs --checkpoint");
  mc::RunOptions opt;
  opt.threads = c.workers();
  opt.checkpoint = a.checkpoint;
  opt.resume = a.resume;
  opt.max_chunks = a.stop_after;
  const auto r = mc::run_montecarlo(a.cfg, opt);
  if (!r) {
    std::cerr << json{{"status", "interrupted"}, {"checkpoint", a.checkpoint}}.dump() << '\n';
    return;
  }
  std::vector<double> omegas;
  for (int i = 1; i <= a.finite_points; ++i) omegas.push_back(kPi * i / a.finite_points);
  std::vector<mc::FiniteNSpectra> spectra;
  for (const auto& f : r->finite) spectra.push_back(mc::finite_n_power_spectra(f, omegas));

  emit(c, [&](std::ostream& out) {
    if (!c.as_json()) return r->autocov.write_csv(out);
    json j = envelope("montecarlo");
    j["config"] = a.cfg.to_json();
    j["resamples"] = r->resamples;
    j["mean_spacing"] = r->mean_spacing;
    j["autocov"] = estimate_json(r->autocov);
    j["level_variance"] = estimate_json(r->level_variance);
    j["level_second_difference"] = estimate_json(r->level_second_difference);
    for (const auto& v : r->number_variance)
      j["number_variance"].push_back({{"L", v.L}, {"value", v.value}, {"half_width", v.half_width}});
    for (const auto& s : spectra)
      j["finite_n"].push_back({{"n", s.n},
                               {"omega", s.omega},
                               {"sp", s.sp},
                               {"eig", s.eig},
                               {"predicted", s.predicted},
                               {"remainder", s.remainder}});
    write_json(out, j);
  });
  if (!a.level_out.empty())
    write_csv_file(a.level_out, [&](std::ostream& out) {
      out << "k,var_lambda,var_lambda_half_width,second_difference,second_difference_half_width\n";
      const auto& v = r->level_variance;
      const auto& q = r->level_second_difference;
      for (std::size_t i = 0; i < v.index.size(); ++i) {
        out << v.index[i] << ',' << v.mean[i] << ',' << v.half_width[i] << ',';
        if (i < q.index.size()) out << q.mean[i] << ',' << q.half_width[i];
        else out << ',';
        out << '\n';
      }
    });
  if (!a.nv_out.empty())
    write_csv_file(a.nv_out, [&](std::ostream& out) {
      out << "L,number_variance,half_width\n";
      for (const auto& v : r->number_variance) out << v.L << ',' << v.value << ',' << v.half_width << '\n';
    });
  if (!a.finite_out.empty())
    write_csv_file(a.finite_out, [&](std::ostream& out) {
      out << "n,omega,S_sp,S_eig,S_eig_predicted,remainder\n";
      for (const auto& s : spectra)
        for (std::size_t i = 0; i < s.omega.size(); ++i)
          out << s.n << ',' << s.omega[i] << ',' << s.sp[i] << ',' << s.eig[i] << ',' << s.predicted[i] << ','
              << s.remainder[i] << '\n';
    });
}

// ---------------------------------------------------------------------------

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
  return f;
}

mc::MCEstimate read_estimate(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  mc::MCEstimate e;
  if (in.peek() == '{') {
    json j;
    in >> j;
    const auto& a = j.at("autocov");
    e.index = a.at("k").get<std::vector<int>>();
    e.mean = a.at("mean").get<std::vector<double>>();
    e.std = a.at("std").get<std::vector<double>>();
    e.half_width = a.at("half_width").get<std::vector<double>>();
    return e;
  }
  std::string line;
  std::getline(in, line);
  if (line != "k,mean,std,half_width,N,M,seed") throw UsageError(path + ": not a Monte Carlo estimate file");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 7) throw UsageError(path + ": malformed row '" + line + "'");
    e.index.push_back(std::stoi(f[0]));
    e.mean.push_back(std::stod(f[1]));
    e.std.push_back(std::stod(f[2]));
    e.half_width.push_back(std::stod(f[3]));
    e.N = std::stoi(f[4]);
    e.M = std::stol(f[5]);
    e.seed = std::stoull(f[6]);
  }
  return e;
}

void cmd_figure1(const Common& c, const std::string& mc_file) {
  const auto rows = mc::figure1_rows(read_estimate(mc_file));
  if (rows.empty()) throw UsageError(mc_file + ": no lags k >= 1");
  emit(c, [&](std::ostream& out) {
    if (!c.as_json()) return mc::write_figure1_csv(out, rows);
    json j = envelope("figure1");
    for (const auto& r : rows)
      j["rows"].push_back({{"k", r.k},
                           {"mc", r.mc},
                           {"half_width", r.half_width},
                           {"dyson", r.dyson},
                           {"asymptotic", r.asymptotic},
                           {"mc_minus_dyson", r.minus_dyson},
                           {"mc_minus_asymptotic", r.minus_asymptotic},
                           {"ratio_dyson", r.ratio_dyson},
                           {"ratio_asymptotic", r.ratio_asymptotic}});
    write_json(out, j);
  });
}

// ---------------------------------------------------------------------------

struct ParameterArgs {
  std::optional<double> omega;
  double zeta_re = 1.0, zeta_im = 0.0;
};

void cmd_trajectory(const Common& c, const ParameterArgs& p, double t_max, double dt) {
  if (!(t_max > 0) || !(dt > 0)) throw UsageError("--t-max and --dt must be positive");
  const auto tr = solve_sigma0(parameter(p.omega, p.zeta_re, p.zeta_im), t_max, {}, dt);
  emit(c, [&](std::ostream& out) {
    if (!c.as_json()) return tr.write_csv(out);
    json j = envelope("trajectory");
    j["zeta"] = {tr.zeta.zeta().real(), tr.zeta.zeta().imag()};
    j["t"] = tr.t_grid;
    for (std::size_t i = 0; i < tr.t_grid.size(); ++i) {
      j["sigma"].push_back({tr.sigma[i].real(), tr.sigma[i].imag()});
      j["log_integral"].push_back({tr.log_integral[i].real(), tr.log_integral[i].imag()});
    }
    j["residual"] = tr.residual;
    write_json(out, j);
  });
}

void cmd_determinant(const Common& c, const ParameterArgs& p, const std::vector<double>& lambdas, int nodes) {
  if (lambdas.empty()) throw UsageError("--lambda needs at least one value");
  const auto sp = parameter(p.omega, p.zeta_re, p.zeta_im);
  struct Row {
    double lambda;
    cplx fredholm, painleve;
  };
  std::vector<Row> rows;
  for (double l : lambdas) {
    if (!(l >= 0)) throw UsageError("--lambda values must be >= 0");
    const double s = l / (2 * kPi);
    const int n = nodes > 0 ? nodes : fredholm::default_nodes(s);
    rows.push_back({l, fredholm::sine_kernel_det({sp.zeta(), s, n}), std::exp(log_generating_function(sp, l))});
  }
  emit(c, [&](std::ostream& out) {
    if (c.as_json()) {
      json j = envelope("determinant");
      j["zeta"] = {sp.zeta().real(), sp.zeta().imag()};
      for (const auto& r : rows)
        j["rows"].push_back({{"lambda", r.lambda},
                             {"fredholm", {r.fredholm.real(), r.fredholm.imag()}},
                             {"painleve", {r.painleve.real(), r.painleve.imag()}},
                             {"abs_diff", std::abs(r.fredholm - r.painleve)}});
      return write_json(out, j);
    }
    out.precision(17);
    out << "lambda,re_fredholm,im_fredholm,re_painleve,im_painleve,abs_diff\n";
    for (const auto& r : rows)
      out << r.lambda << ',' << r.fredholm.real() << ',' << r.fredholm.imag() << ',' << r.painleve.real() << ','
          << r.painleve.imag() << ',' << std::abs(r.fredholm - r.painleve) << '\n';
  });
}

int fail(int code, const std::string& type, const std::string& message) {
  std::cerr << json{{"error", {{"type", type}, {"message", message}}}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Level-spacing autocovariances of the sine process", "levelcorr"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value file mirroring the flags; flags on the command line win");
  app.allow_config_extras(CLI::config_extras_mode::error);

  Common common;
  app.add_option("--threads", common.threads, "Worker cap (0: LEVELCORR_THREADS, else all cores)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("-o,--out", common.out, "Output file (default stdout)");
  app.add_option("--format", common.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();

  SpectrumArgs sa;
  auto* spectrum = app.add_subcommand("spectrum", "Power spectrum S(omega) of the spacing sequence");
  spectrum->add_option("--omega-min", sa.omega_min, "Grid start")->capture_default_str();
  spectrum->add_option("--omega-max", sa.omega_max, "Grid end, at most pi")->capture_default_str();
  spectrum->add_option("--points", sa.points, "Grid points")->capture_default_str();
  spectrum->add_option("--omega", sa.omegas, "Explicit omega values (overrides the grid)");
  spectrum->add_option("--backend", sa.backend, "painleve or fredholm")
      ->check(CLI::IsMember({"painleve", "fredholm"}))
      ->capture_default_str();

  AutocovArgs aa;
  auto* autocov = app.add_subcommand("autocov", "Spacing autocovariances: exact, Dyson and asymptotic side by side");
  autocov->add_option("--k-max", aa.k_max, "Largest lag")->capture_default_str();
  autocov->add_option("--backend", aa.backend, "all, exact, dyson, asymptotic or asymptotic_ci")
      ->check(CLI::IsMember({"all", "exact", "dyson", "asymptotic", "asymptotic_ci"}))
      ->capture_default_str();

  MonteCarloArgs ma;
  auto* montecarlo = app.add_subcommand("montecarlo", "Sampled autocovariances over CUE spectra");
  montecarlo->add_option("-N,--size", ma.cfg.N, "Matrix size")->capture_default_str();
  montecarlo->add_option("-M,--samples", ma.cfg.M, "Number of spectra")->capture_default_str();
  montecarlo->add_option("--seed", ma.cfg.seed, "Seed")->capture_default_str();
  montecarlo->add_option("--k-max", ma.cfg.k_max, "Largest lag")->capture_default_str();
  montecarlo->add_option("--sampler", ma.sampler, "sparse_cmv or qr_haar")
      ->check(CLI::IsMember({"sparse_cmv", "qr_haar"}))
      ->capture_default_str();
  montecarlo->add_option("--var-k-max", ma.cfg.var_k_max, "Level variance up to k = var-k-max + 1")
      ->capture_default_str();
  montecarlo->add_option("--nv", ma.cfg.nv_lengths, "Number-variance window lengths");
  montecarlo->add_option("--finite-n", ma.cfg.finite_n, "Finite-n covariance window sizes");
  montecarlo->add_option("--chunk", ma.cfg.chunk, "Samples per reduction chunk")->capture_default_str();
  montecarlo->add_option("--checkpoint", ma.checkpoint, "Checkpoint file");
  montecarlo->add_flag("--resume", ma.resume, "Continue from the checkpoint if present");
  montecarlo->add_option("--stop-after", ma.stop_after, "Stop after this many chunks (checkpoint kept)");
  montecarlo->add_option("--level-out", ma.level_out, "CSV of var(lambda_k) and its second difference");
  montecarlo->add_option("--nv-out", ma.nv_out, "CSV of the number variance");
  montecarlo->add_option("--finite-out", ma.finite_out, "CSV of the finite-n spectra");
  montecarlo->add_option("--finite-points", ma.finite_points, "omega points in (0, pi] for finite-n spectra")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::string mc_file;
  auto* figure1 = app.add_subcommand("figure1", "Sampled autocovariances against the Dyson and subleading terms");
  figure1->add_option("mc_file", mc_file, "Estimate file written by montecarlo")->required();

  ParameterArgs pa;
  double t_max = 10.0, dt = 0.05;
  auto* trajectory = app.add_subcommand("trajectory", "sigma(t) and its log-integral on a grid");
  std::vector<double> lambdas{1.0, 5.0, 10.0, 20.0, 30.0};
  int nodes = 0;
  auto* determinant = app.add_subcommand("determinant", "det(I - zeta K) by quadrature and by the ODE route");
  for (auto* sub : {trajectory, determinant}) {
    auto* om = sub->add_option("--omega", pa.omega, "zeta = 1 - e^{i omega}");
    sub->add_option("--zeta-re", pa.zeta_re, "Real part of zeta")->excludes(om)->capture_default_str();
    sub->add_option("--zeta-im", pa.zeta_im, "Imaginary part of zeta")->excludes(om)->capture_default_str();
  }
  trajectory->add_option("--t-max", t_max, "End of the grid")->capture_default_str();
  trajectory->add_option("--dt", dt, "Grid step")->capture_default_str();
  determinant->add_option("--lambda", lambdas, "Interval lengths in t = pi s units")->capture_default_str();
  determinant->add_option("--nodes", nodes, "Quadrature nodes (0: automatic)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return fail(2, "usage", e.what());
  }

  try {
    if (*spectrum) cmd_spectrum(common, sa);
    else if (*autocov) cmd_autocov(common, aa);
    else if (*montecarlo) {
      // Unset lag ranges shrink to fit small N.
      if (montecarlo->count("--k-max") == 0) ma.cfg.k_max = std::min(ma.cfg.k_max, ma.cfg.N - 2);
      if (montecarlo->count("--var-k-max") == 0) ma.cfg.var_k_max = std::min(ma.cfg.var_k_max, ma.cfg.N - 3);
      cmd_montecarlo(common, ma);
    }
    else if (*figure1) cmd_figure1(common, mc_file);
    else if (*trajectory) cmd_trajectory(common, pa, t_max, dt);
    else if (*determinant) cmd_determinant(common, pa, lambdas, nodes);
  } catch (const UsageError& e) {
    return fail(2, "usage", e.what());
  } catch (const CheckpointMismatch& e) {
    return fail(1, "checkpoint_mismatch", e.what());
  } catch (const Error& e) {
    return fail(1, "computation", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(2, "invalid_argument", e.what());
  } catch (const std::exception& e) {
    return fail(1, "failure", e.what());
  }
  return 0;
}
