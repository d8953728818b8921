#include "dsi/error.hpp"
#include "dsi/harness/compare.hpp"
#include "dsi/harness/config.hpp"
#include "dsi/harness/experiment.hpp"
#include "dsi/parallel.hpp"
#include "dsi/units.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace dsi;
using namespace dsi::harness;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned workers{0};
  fs::path out{"out"};
  bool allow_inverse_crime{false};
  bool allow_mixed_provenance{false};
  std::string method;
  long ell{0};
  std::vector<std::string> methods;
};

void log(const std::string& msg) { std::clog << "[dsi] " << msg << std::endl; }

ExperimentConfig effective_config(const Options& o) {
  ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  c.validate(o.allow_inverse_crime);
  return c;
}

io::Provenance provenance(const ExperimentConfig& c) { return {config_hash(c), c.seed}; }

void write_effective_config(const Options& o, const ExperimentConfig& c) {
  fs::create_directories(o.out);
  std::ofstream(o.out / "config.json") << to_json(c).dump(2) << '\n';
}

Vector observations_for(const Options& o, const ExperimentConfig& c) {
  io::Provenance p;
  const Vector d = read_observations(o.out, &p);
  if (p.config_hash != config_hash(c) && !o.allow_mixed_provenance)
    throw ConfigError("observations.bin was generated with a different configuration; rerun generate-truth or pass "
                      "--allow-mixed-provenance");
  if (d.size() != static_cast<Eigen::Index>(c.observation_design().size()))
    throw ConfigError("observations.bin has " + std::to_string(d.size()) + " values, the design expects " +
                      std::to_string(c.observation_design().size()));
  return d;
}

// Reuses a stored ensemble from the same configuration when it is large enough.
Ensemble ensemble_for(const Options& o, const Problem& problem, Eigen::Index size) {
  const fs::path path = o.out / "ensemble.bin";
  const auto prov = provenance(problem.config());
  if (fs::exists(path)) {
    io::Provenance p;
    Ensemble e = io::read_ensemble(path, &p);
    if (p == prov && e.size() >= size) {
      log("reusing " + std::to_string(e.size()) + "-member ensemble from " + path.string());
      return e;
    }
  }
  log("simulating a prior ensemble of " + std::to_string(size) + " members");
  Ensemble e = prior_ensemble(problem, size, o.workers);
  io::write_ensemble(path, e, prov);
  log(std::to_string(e.n_ok()) + " of " + std::to_string(e.size()) + " members usable");
  return e;
}

void save(const Options& o, const MethodResult& r, const io::Provenance& prov) {
  write_method(o.out, r, prov);
  log("wrote samples_" + r.name + ".bin (" + std::to_string(r.samples.rows()) + " samples)");
}

int cmd_generate_truth(const Options& o) {
  const ExperimentConfig c = effective_config(o);
  log("generating truth on " + std::to_string(c.truth_grid.nx) + "x" + std::to_string(c.truth_grid.ny) + " grid");
  const Truth t = generate_truth(c);
  if (t.attempts > 1) log("truth draw needed " + std::to_string(t.attempts) + " attempts (failed simulations redrawn)");
  write_truth(o.out, t, c, provenance(c));
  write_effective_config(o, c);
  log("wrote " + std::to_string(t.observations.size()) + " observations to " + (o.out / "observations.bin").string());
  return 0;
}

int cmd_run(const Options& o) {
  const ExperimentConfig c = effective_config(o);
  const Vector d = observations_for(o, c);
  const Problem problem(c);
  const auto prov = provenance(c);
  if (o.method == "dsi") {
    const Eigen::Index ell = o.ell > 0 ? o.ell : c.dsi.ensemble_size;
    const Ensemble e = ensemble_for(o, problem, ell);
    save(o, prior_predictive(e, c.dsi.n_samples), prov);
    save(o, run_dsi(problem, e, ell, d), prov);
  } else if (o.method == "mcmc") {
    log("running " + std::to_string(c.mcmc.chains) + " pCN chains of " + std::to_string(c.mcmc.iterations) +
        " iterations");
    const MethodResult r = run_mcmc(problem, d, o.workers);
    log("acceptance " + std::to_string(r.report["acceptance_rate"].get<double>()) + ", max R-hat " +
        r.report["max_r_hat"].dump());
    save(o, r, prov);
  } else {
    const MethodResult r = run_map(problem, d, o.workers);
    log("MAP " + r.report["status"].get<std::string>() + " after " + r.report["forward_like_solves"].dump() +
        " forward-like solves");
    save(o, r, prov);
  }
  return 0;
}

int cmd_sweep(const Options& o) {
  const ExperimentConfig c = effective_config(o);
  const Vector d = observations_for(o, c);
  const Problem problem(c);
  const auto prov = provenance(c);
  long size = c.dsi.ensemble_size;
  for (long l : c.dsi.ell_sweep) size = std::max(size, l);
  const Ensemble e = ensemble_for(o, problem, size);
  save(o, prior_predictive(e, c.dsi.n_samples), prov);
  for (const auto& r : sweep_ell(problem, e, d)) save(o, r, prov);
  return 0;
}

std::vector<std::string> discover_methods(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string f = entry.path().filename().string();
    if (f.rfind("samples_", 0) == 0 && entry.path().extension() == ".bin")
      names.push_back(f.substr(8, f.size() - 12));
  }
  // Stable, readable order: prior first, then methods, then the sweep by size.
  auto rank = [](const std::string& n) -> std::pair<int, long> {
    if (n == "prior") return {0, 0};
    if (n == "mcmc") return {1, 0};
    if (n == "map") return {2, 0};
    if (n == "dsi") return {3, 0};
    if (n.rfind("dsi_l", 0) == 0) return {4, std::stol(n.substr(5))};
    return {5, 0};
  };
  std::sort(names.begin(), names.end(), [&](const auto& a, const auto& b) {
    return std::pair(rank(a), a) < std::pair(rank(b), b);
  });
  return names;
}

int cmd_compare(const Options& o) {
  const ExperimentConfig c = effective_config(o);
  const auto names = o.methods.empty() ? discover_methods(o.out) : o.methods;
  if (names.empty()) throw ConfigError("no samples_*.bin files in " + o.out.string());
  io::Provenance prov;
  const auto methods = load_methods(o.out, names, o.allow_mixed_provenance, &prov);
  std::optional<Vector> truth;
  if (fs::exists(o.out / "truth_predictions.bin")) {
    io::Provenance tp;
    truth = read_truth_predictions(o.out, &tp);
    if (tp.config_hash != prov.config_hash && !o.allow_mixed_provenance)
      throw ConfigError("truth and samples come from different configurations; pass --allow-mixed-provenance");
  }
  const auto report = compare(methods, truth ? &*truth : nullptr);
  write_comparison(o.out, report, methods, truth ? &*truth : nullptr, c.prediction_design(), prov);
  const auto& design = c.prediction_design();
  const auto nt = static_cast<Eigen::Index>(design.times.size());
  std::cout << "method        samples  mean band at t=" << units::to_days(design.times.back())
            << " d (MPa)  truth covered\n";
  for (const auto& s : report.methods) {
    double band = 0.0;
    for (std::size_t w = 0; w < design.wells.size(); ++w) {
      const Eigen::Index j = static_cast<Eigen::Index>(w) * nt + nt - 1;
      band += units::to_megapascal(s.marginals.upper(j) - s.marginals.lower(j));
    }
    band /= static_cast<double>(design.wells.size());
    const auto covered = std::count(s.covered.begin(), s.covered.end(), true);
    std::cout << std::left << std::setw(14) << s.name << std::setw(9) << s.n_samples << std::setw(27) << band;
    if (report.has_truth) std::cout << covered << "/" << s.covered.size();
    std::cout << '\n';
  }
  for (const auto& dist : report.distances)
    std::cout << "W1(" << dist.first << ", " << dist.second << ") mean " << units::to_megapascal(dist.w1.mean())
              << " MPa, max " << units::to_megapascal(dist.w1.maxCoeff()) << " MPa\n";
  log("wrote report.json and plot data to " + o.out.string());
  return 0;
}

int cmd_export(const Options& o) {
  for (const auto& p : export_plots(o.out)) log("wrote " + p.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data space inversion experiments on a 2D single-phase reservoir"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  std::string seed_text;
  app.add_option("--config", o.config_path, "JSON configuration (defaults reproduce the benchmark)");
  app.add_option("--seed", seed_text, "Master seed, overrides the configuration");
  app.add_option("--workers", o.workers, "Worker threads (0 = available parallelism)");
  app.add_option("--out", o.out, "Output directory")->capture_default_str();
  app.add_flag("--allow-inverse-crime", o.allow_inverse_crime, "Permit identical truth and inversion grids");
  app.add_flag("--allow-mixed-provenance", o.allow_mixed_provenance,
               "Permit inputs produced by different configurations");

  auto* gen = app.add_subcommand("generate-truth", "Draw the true field, simulate it and add observation noise");
  auto* run = app.add_subcommand("run", "Run one inference method on the observations");
  run->add_option("method", o.method, "dsi, mcmc or map")->required()->check(CLI::IsMember({"dsi", "mcmc", "map"}));
  run->add_option("--ell", o.ell, "DSI ensemble size (default: dsi.ensemble_size)");
  auto* sweep = app.add_subcommand("sweep-ell", "DSI for every ensemble size in dsi.ell_sweep");
  auto* cmp = app.add_subcommand("compare", "Summaries, distances, coverage and plot data");
  cmp->add_option("--methods", o.methods, "Sample sets to compare (default: all in --out)")->delimiter(',');
  auto* exp = app.add_subcommand("export-plots", "Render the plot data as SVG");
  auto* show = app.add_subcommand("print-config", "Print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (!seed_text.empty()) {
      std::size_t pos = 0;
      o.seed = std::stoull(seed_text, &pos);
      if (pos != seed_text.size()) throw ConfigError("--seed must be an unsigned integer");
    }
    if (o.workers == 0) o.workers = default_workers();
    if (*gen) return cmd_generate_truth(o);
    if (*run) return cmd_run(o);
    if (*sweep) return cmd_sweep(o);
    if (*cmp) return cmd_compare(o);
    if (*exp) return cmd_export(o);
    if (*show) {
      std::cout << to_json(effective_config(o)).dump(2) << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const SimulationError& e) {
    std::cerr << "simulation failure: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
