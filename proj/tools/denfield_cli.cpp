// Command-line surface for synthetic experiments: synthesize log-normal
// truth fields, observe them through a mask with Poisson noise, run the
// data-augmentation reconstruction, and compare recovered spectra.
//
// Exit codes: 0 success, 1 runtime/numeric failure, 2 usage/config error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "denfield/io.hpp"
#include "denfield/params_io.hpp"
#include "denfield/pipeline.hpp"
#include "denfield/version.hpp"

namespace fs = std::filesystem;
using namespace denfield;

namespace {

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

double stage_seconds(std::chrono::steady_clock::time_point& mark) {
  const auto now = std::chrono::steady_clock::now();
  const double s = std::chrono::duration<double>(now - mark).count();
  mark = now;
  return s;
}

std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_manifest(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string out = "# denfield manifest\n";
  out += "tool_version=" + std::string(kVersion) + "\n";
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  detail::write_file_atomic(path, out);
}

// --- synth ------------------------------------------------------------

// Either "A=<amp>,n=<exponent>" (power law over |k| in cycles/pixel) or
// "file:<LNPAR1 path>".
LogNormalParams parse_spectrum_descriptor(const std::string& spec, std::size_t width,
                                          std::size_t height, std::size_t bins_hint) {
  if (spec.rfind("file:", 0) == 0) {
    LogNormalParams p = params_load(spec.substr(5));
    if (p.cov.width() != width || p.cov.height() != height)
      throw UsageError("spectrum file grid " + std::to_string(p.cov.width()) + "x" +
                       std::to_string(p.cov.height()) + " does not match --size");
    return p;
  }
  double amp = 0.0, expn = 0.0;
  bool saw_a = false, saw_n = false;
  std::istringstream in(spec);
  std::string token;
  while (std::getline(in, token, ',')) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw UsageError("bad spectrum descriptor token '" + token + "'");
    const std::string key = token.substr(0, eq);
    double val;
    try {
      val = std::stod(token.substr(eq + 1));
    } catch (const std::exception&) {
      throw UsageError("bad numeric value in spectrum descriptor: '" + token + "'");
    }
    if (key == "A") { amp = val; saw_a = true; }
    else if (key == "n") { expn = val; saw_n = true; }
    else throw UsageError("unknown spectrum descriptor key '" + key + "' (expected A, n)");
  }
  if (!saw_a || !saw_n) throw UsageError("spectrum descriptor needs both A=<amp> and n=<exp>");
  if (!(amp > 0.0)) throw UsageError("spectrum amplitude A must be > 0");

  RadialBinning binning = bins_hint > 0 ? RadialBinning::logarithmic(width, height, bins_hint, 64)
                                        : RadialBinning::default_for(width, height);
  std::vector<double> spectrum(binning.bin_count());
  for (std::size_t b = 0; b < spectrum.size(); ++b)
    spectrum[b] = std::max(amp * std::pow(binning.center(b), expn), 1e-12);
  StationaryCovariance cov(std::move(binning), std::move(spectrum));
  const double mu = -0.5 * cov.total_latent_variance();  // E[delta] = 0
  return LogNormalParams(mu, std::move(cov));
}

int cmd_synth(const std::string& spec, std::size_t size, std::size_t height, std::uint64_t seed,
              const std::string& out_prefix, std::size_t bins_hint) {
  auto t0 = std::chrono::steady_clock::now();
  if (size == 0) throw UsageError("--size must be positive");
  const std::size_t w = size, h = height ? height : size;

  const LogNormalParams params = parse_spectrum_descriptor(spec, w, h, bins_hint);
  SeededRng rng = SeededRng(seed).derive("synth", 0);
  const DensityField truth = sample_lognormal_field(params, rng);

  map_save(out_prefix + ".density.dmap", truth.delta, MapKind::density);
  params_save(out_prefix + ".params.txt", params);
  write_manifest(out_prefix + ".manifest.txt",
                 {{"command", "synth"},
                  {"spec", spec},
                  {"width", std::to_string(w)},
                  {"height", std::to_string(h)},
                  {"seed", std::to_string(seed)},
                  {"mu", format_g(params.mu)},
                  {"latent_variance", format_g(params.cov.total_latent_variance())},
                  {"output.density", out_prefix + ".density.dmap"},
                  {"output.params", out_prefix + ".params.txt"},
                  {"stage_seconds.total", format_g(stage_seconds(t0))}});
  return 0;
}

// --- observe ----------------------------------------------------------

MaskGrid parse_mask_descriptor(const std::string& desc, std::size_t w, std::size_t h,
                               std::uint64_t seed) {
  MaskGrid mask(w, h, 1);
  if (desc == "none") return mask;
  if (desc.rfind("random:", 0) == 0) {
    double p;
    try {
      p = std::stod(desc.substr(7));
    } catch (const std::exception&) {
      throw UsageError("bad random mask fraction in '" + desc + "'");
    }
    if (!(p >= 0.0 && p <= 1.0)) throw UsageError("random mask fraction must lie in [0,1]");
    SeededRng rng = SeededRng(seed).derive("mask", 0);
    for (auto& m : mask) m = rng.uniform() < p ? 0 : 1;
    return mask;
  }
  if (desc.rfind("box:", 0) == 0) {
    std::istringstream in(desc.substr(4));
    std::string token;
    std::vector<std::size_t> v;
    while (std::getline(in, token, ',')) {
      try {
        v.push_back(std::stoull(token));
      } catch (const std::exception&) {
        throw UsageError("bad box mask coordinate '" + token + "'");
      }
    }
    if (v.size() != 4) throw UsageError("box mask needs x,y,w,h");
    for (std::size_t y = v[1]; y < std::min(v[1] + v[3], h); ++y)
      for (std::size_t x = v[0]; x < std::min(v[0] + v[2], w); ++x) mask.at(x, y) = 0;
    return mask;
  }
  if (desc.rfind("file:", 0) == 0) {
    MaskGrid loaded = map_load<std::uint8_t>(desc.substr(5));
    if (!loaded.same_shape(w, h)) throw UsageError("mask file does not match the truth grid");
    return loaded;
  }
  throw UsageError("unknown mask descriptor '" + desc + "' (none, random:p, box:x,y,w,h, file:path)");
}

int cmd_observe(const std::string& truth_path, double m_bar, const std::string& mask_desc,
                std::uint64_t seed, const std::string& out_prefix) {
  auto t0 = std::chrono::steady_clock::now();
  if (!(m_bar > 0.0)) throw UsageError("--mbar must be > 0");
  const RealGrid truth = map_load<double>(truth_path);
  const MaskGrid mask = parse_mask_descriptor(mask_desc, truth.width(), truth.height(), seed);

  std::size_t observed = 0;
  for (auto m : mask) observed += m;
  if (observed == 0) throw UsageError("mask observes nothing; refusing to produce an empty map");

  RealGrid intensity(truth.width(), truth.height());
  for (std::size_t i = 0; i < intensity.size(); ++i) {
    const double d = truth[i];
    if (!(d > -1.0)) throw std::runtime_error("truth map is not a density contrast (delta <= -1)");
    intensity[i] = mask[i] ? m_bar * (1.0 + d) : 0.0;
  }
  SeededRng rng = SeededRng(seed).derive("observe", 0);
  const CountGrid counts = poisson_sample(intensity, rng);

  map_save(out_prefix + ".counts.dmap", counts, MapKind::counts);
  map_save(out_prefix + ".mask.dmap", mask, MapKind::mask);
  write_manifest(out_prefix + ".manifest.txt",
                 {{"command", "observe"},
                  {"truth", truth_path},
                  {"mbar", format_g(m_bar)},
                  {"mask", mask_desc},
                  {"seed", std::to_string(seed)},
                  {"observed_fraction",
                   format_g(static_cast<double>(observed) / static_cast<double>(mask.size()))},
                  {"output.counts", out_prefix + ".counts.dmap"},
                  {"output.mask", out_prefix + ".mask.dmap"},
                  {"stage_seconds.total", format_g(stage_seconds(t0))}});
  return 0;
}

// --- run ----------------------------------------------------------------

struct RunConfig {
  AugmentationConfig aug;
  std::uint64_t seed = 0;
};

RunConfig parse_run_config(const std::string& path) {
  static const std::set<std::string> valid = {"n_iter", "n_mi",  "n_tex", "n_est", "lambda",
                                              "gamma",  "beta",  "theta", "seed",  "prox_mode"};
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);

  RunConfig cfg;
  cfg.aug.n_iter = 6;
  cfg.aug.n_mi = 10;
  cfg.aug.imputation.n_tex = 15;
  cfg.aug.solver.n_est = 40;
  cfg.aug.solver.lambda = 1e-3;
  cfg.aug.solver.gamma = 1e-4;
  cfg.aug.solver.beta = 1.0;
  cfg.aug.solver.theta = 1.0;
  cfg.aug.solver.prox_mode = ProxMode::paper;

  std::istringstream in(read_file_bytes(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ": malformed config line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (!valid.count(key)) {
      std::string keys;
      for (const auto& k : valid) keys += (keys.empty() ? "" : ", ") + k;
      throw UsageError(path + ": unknown config key '" + key + "'; valid keys: " + keys);
    }
    try {
      if (key == "n_iter") cfg.aug.n_iter = std::stoi(val);
      else if (key == "n_mi") cfg.aug.n_mi = std::stoi(val);
      else if (key == "n_tex") cfg.aug.imputation.n_tex = std::stoi(val);
      else if (key == "n_est") cfg.aug.solver.n_est = std::stoi(val);
      else if (key == "lambda") cfg.aug.solver.lambda = std::stod(val);
      else if (key == "gamma") cfg.aug.solver.gamma = std::stod(val);
      else if (key == "beta") cfg.aug.solver.beta = std::stod(val);
      else if (key == "theta") cfg.aug.solver.theta = std::stod(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "prox_mode") {
        if (val == "paper") cfg.aug.solver.prox_mode = ProxMode::paper;
        else if (val == "exact") cfg.aug.solver.prox_mode = ProxMode::exact;
        else throw UsageError(path + ": prox_mode must be 'paper' or 'exact'");
      }
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception&) {
      throw UsageError(path + ": bad value for " + key + ": '" + val + "'");
    }
  }
  return cfg;
}

void write_history_csv(const std::string& path, const std::vector<ParamsEstimate>& history) {
  std::string out = "round,mu,m_bar";
  if (!history.empty())
    for (std::size_t b = 0; b < history.front().cov.spectrum.size(); ++b)
      out += ",s" + std::to_string(b);
  out += "\n";
  for (std::size_t r = 0; r < history.size(); ++r) {
    out += std::to_string(r) + "," + format_g(history[r].mu) + "," + format_g(history[r].m_bar);
    for (double s : history[r].cov.spectrum) out += "," + format_g(s);
    out += "\n";
  }
  detail::write_file_atomic(path, out);
}

int cmd_run(const std::string& counts_path, const std::string& mask_path,
            const std::string& config_path, const std::string& out_dir, std::int64_t seed_flag) {
  auto mark = std::chrono::steady_clock::now();
  RunConfig cfg = parse_run_config(config_path);
  if (seed_flag >= 0) cfg.seed = static_cast<std::uint64_t>(seed_flag);
  cfg.aug.master_seed = cfg.seed;

  const CountGrid counts = map_load<std::int64_t>(counts_path);
  const MaskGrid mask = map_load<std::uint8_t>(mask_path);
  detail::require_same_shape(counts, mask, "run inputs");

  double sum = 0.0;
  std::size_t observed = 0;
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (mask[i]) {
      sum += static_cast<double>(counts[i]);
      ++observed;
    }
  if (observed == 0) throw std::runtime_error("no observed pixels in input");
  const double m_bar0 = sum / static_cast<double>(observed);
  if (!(m_bar0 > 0.0)) throw std::runtime_error("observed counts are all zero");
  const CountMap y(counts, mask, m_bar0);

  fs::create_directories(out_dir);
  const double load_seconds = stage_seconds(mark);

  const CosineDictionary dict(y.width(), y.height());
  const PipelineResult result = run_data_augmentation(y, cfg.aug, dict);
  const double solve_seconds = stage_seconds(mark);

  const auto out = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };
  map_save(out("delta_hat.dmap"), result.delta_hat.delta, MapKind::density);
  write_pgm(out("delta_hat.pgm"), result.delta_hat.delta);
  RealGrid yhat_real(result.last_completed.width(), result.last_completed.height());
  for (std::size_t i = 0; i < yhat_real.size(); ++i)
    yhat_real[i] = static_cast<double>(result.last_completed.counts[i]);
  write_pgm(out("yhat.pgm"), yhat_real);

  params_save(out("params_hat.txt"), LogNormalParams(result.params.mu, result.params.cov));
  write_history_csv(out("params_history.csv"), result.history);
  if (!result.traces.empty() && !result.traces.back().empty())
    write_trace_csv(result.traces.back().front(), out("solve_trace.csv"));

  // spectra.csv: final latent parameter spectrum and the MI-averaged density
  // spectrum of the last round's estimates
  {
    std::string csv = "k_bin_center,sigma_hat,density_spectrum\n";
    const auto& binning = result.params.cov.binning;
    for (std::size_t b = 0; b < binning.bin_count(); ++b)
      csv += format_g(binning.center(b)) + "," + format_g(result.params.cov.spectrum[b]) + "," +
             format_g(result.density_spectrum[b]) + "\n";
    detail::write_file_atomic(out("spectra.csv"), csv);
  }
  const double emit_seconds = stage_seconds(mark);

  write_manifest(out("manifest.txt"),
                 {{"command", "run"},
                  {"input.counts", counts_path},
                  {"input.mask", mask_path},
                  {"config_file", config_path},
                  {"config.n_iter", std::to_string(cfg.aug.n_iter)},
                  {"config.n_mi", std::to_string(cfg.aug.n_mi)},
                  {"config.n_tex", std::to_string(cfg.aug.imputation.n_tex)},
                  {"config.n_est", std::to_string(cfg.aug.solver.n_est)},
                  {"config.lambda", format_g(cfg.aug.solver.lambda)},
                  {"config.gamma", format_g(cfg.aug.solver.gamma)},
                  {"config.beta", format_g(cfg.aug.solver.beta)},
                  {"config.theta", format_g(cfg.aug.solver.theta)},
                  {"config.prox_mode",
                   cfg.aug.solver.prox_mode == ProxMode::paper ? "paper" : "exact"},
                  {"seed", std::to_string(cfg.seed)},
                  {"observed_fraction", format_g(y.observed_fraction())},
                  {"m_bar_initial", format_g(m_bar0)},
                  {"m_bar_final", format_g(result.params.m_bar)},
                  {"mu_final", format_g(result.params.mu)},
                  {"output.delta_hat", out("delta_hat.dmap")},
                  {"stage_seconds.load", format_g(load_seconds)},
                  {"stage_seconds.solve", format_g(solve_seconds)},
                  {"stage_seconds.emit", format_g(emit_seconds)}});
  return 0;
}

// --- compare ------------------------------------------------------------

struct CompareInput {
  std::string name;
  StationaryCovariance spectrum;
  std::optional<RealGrid> map;  // present when a raster is available for low-pass
};

int cmd_compare(const std::string& truth_path, const std::vector<std::string>& est_specs,
                const std::string& out_csv, double kmax) {
  std::optional<LogNormalParams> truth_params;
  std::optional<RealGrid> truth_map;
  if (truth_path.size() > 5 && truth_path.substr(truth_path.size() - 5) == ".dmap") {
    truth_map = map_load<double>(truth_path);
  } else {
    truth_params = params_load(truth_path);
  }
  const RadialBinning binning =
      truth_params ? truth_params->cov.binning
                   : RadialBinning::default_for(truth_map->width(), truth_map->height());
  const StationaryCovariance truth_cov =
      truth_params ? truth_params->cov : estimate_spectrum(GaussianField(*truth_map), binning);

  std::vector<CompareInput> inputs;
  for (const auto& spec : est_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw UsageError("estimate must be NAME=path (params file, map, or run directory)");
    const std::string name = spec.substr(0, eq);
    const std::string path = spec.substr(eq + 1);

    std::optional<RealGrid> map;
    std::optional<StationaryCovariance> cov;
    if (fs::is_directory(path)) {
      const std::string params_file = (fs::path(path) / "params_hat.txt").string();
      const std::string map_file = (fs::path(path) / "delta_hat.dmap").string();
      if (fs::exists(params_file)) {
        LogNormalParams p = params_load(params_file);
        if (!p.cov.binning.compatible(binning))
          throw std::runtime_error("binning mismatch between " + truth_path + " and " + params_file);
        cov = p.cov;
      }
      if (fs::exists(map_file)) map = map_load<double>(map_file);
      if (!cov && !map) throw UsageError("run directory has neither params_hat.txt nor delta_hat.dmap: " + path);
    } else if (path.size() > 5 && path.substr(path.size() - 5) == ".dmap") {
      map = map_load<double>(path);
    } else {
      LogNormalParams p = params_load(path);
      if (!p.cov.binning.compatible(binning))
        throw std::runtime_error("binning mismatch between " + truth_path + " and " + path);
      cov = p.cov;
    }
    if (!cov) {
      if (!map->same_shape(binning.width(), binning.height()))
        throw std::runtime_error("grid mismatch between " + truth_path + " and " + path);
      cov = estimate_spectrum(GaussianField(*map), binning);
    }
    inputs.push_back(CompareInput{name, std::move(*cov), std::move(map)});
  }

  std::vector<std::pair<std::string, StationaryCovariance>> named;
  for (const auto& in : inputs) named.emplace_back(in.name, in.spectrum);
  const SpectrumComparison cmp = compare_spectra(truth_cov, named);
  cmp.write_csv(out_csv);

  if (kmax > 0.0) {
    const fs::path dir = fs::path(out_csv).parent_path();
    for (const auto& in : inputs) {
      if (!in.map) continue;
      const RealGrid filtered = lowpass(*in.map, kmax);
      map_save((dir / (in.name + ".lowpass.dmap")).string(), filtered, MapKind::density);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"density-contrast reconstruction from masked Poisson count maps"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "synthesize a log-normal truth field");
  std::string synth_spec = "A=1,n=-2";
  std::size_t synth_size = 64, synth_height = 0, synth_bins = 0;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--spec", synth_spec, "power law 'A=<amp>,n=<exp>' or 'file:<LNPAR1>'");
  synth->add_option("--size", synth_size, "grid width (and height unless --height)");
  synth->add_option("--height", synth_height, "grid height");
  synth->add_option("--bins", synth_bins, "radial bin count hint (0 = default)");
  synth->add_option("--seed", synth_seed, "random seed");
  synth->add_option("--out", synth_out, "output path prefix")->required();

  // observe
  auto* observe = app.add_subcommand("observe", "mask a truth field and add Poisson noise");
  std::string obs_truth, obs_mask = "none", obs_out;
  double obs_mbar = 10.0;
  std::uint64_t obs_seed = 0;
  observe->add_option("--truth", obs_truth, "truth density .dmap")->required();
  observe->add_option("--mbar", obs_mbar, "mean counts per pixel");
  observe->add_option("--mask", obs_mask, "none | random:p | box:x,y,w,h | file:path");
  observe->add_option("--seed", obs_seed, "random seed");
  observe->add_option("--out", obs_out, "output path prefix")->required();

  // run
  auto* run = app.add_subcommand("run", "run the data-augmentation reconstruction");
  std::string run_counts, run_mask, run_config, run_out;
  std::int64_t run_seed = -1;
  run->add_option("--counts", run_counts, "counts .dmap")->required();
  run->add_option("--mask", run_mask, "mask .dmap")->required();
  run->add_option("--config", run_config, "key=value config file")->required();
  run->add_option("--out", run_out, "output directory")->required();
  run->add_option("--seed", run_seed, "override the config seed");

  // compare
  auto* compare = app.add_subcommand("compare", "compare estimate spectra against a truth");
  std::string cmp_truth, cmp_out;
  std::vector<std::string> cmp_est;
  double cmp_kmax = 0.0;
  compare->add_option("--truth", cmp_truth, "truth params .txt or density .dmap")->required();
  compare->add_option("--est", cmp_est, "NAME=path (params, map, or run dir)")->required();
  compare->add_option("--out", cmp_out, "output CSV path")->required();
  compare->add_option("--kmax", cmp_kmax, "also emit low-pass maps keeping |k| <= kmax");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed())
      return cmd_synth(synth_spec, synth_size, synth_height, synth_seed, synth_out, synth_bins);
    if (observe->parsed()) return cmd_observe(obs_truth, obs_mbar, obs_mask, obs_seed, obs_out);
    if (run->parsed()) return cmd_run(run_counts, run_mask, run_config, run_out, run_seed);
    if (compare->parsed()) return cmd_compare(cmp_truth, cmp_est, cmp_out, cmp_kmax);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
