// Batch front end: run, sweep, spectrum, validate.
//
// Exit codes: 0 success, 1 invalid input, 2 convergence or truncation guard
// failure (including failed validation checks), 3 internal error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <set>

#include "qtherm/acceptance.hpp"
#include "qtherm/qtherm.hpp"

namespace {

enum Exit { kOk = 0, kInvalid = 1, kGuard = 2, kInternal = 3 };

struct CutoffOverrides {
  std::optional<int> single, rel, rel_entanglement, three_body;

  void apply(qtherm::QuenchProtocol& p) const {
    if (single) p.cutoffs.single = *single;
    if (rel) p.cutoffs.rel = *rel;
    if (rel_entanglement) p.cutoffs.rel_entanglement = *rel_entanglement;
    if (three_body) p.cutoffs.three_body = *three_body;
  }
};

void add_cutoff_flags(CLI::App* cmd, CutoffOverrides& o) {
  cmd->add_option("--cutoff-single", o.single, "single-atom / COM mode cutoff")->check(CLI::PositiveNumber);
  cmd->add_option("--cutoff-rel", o.rel, "two-body REL mode cutoff")->check(CLI::Range(2, 100000));
  cmd->add_option("--cutoff-rel-entanglement", o.rel_entanglement, "REL cutoff for pair RDMs")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--cutoff-three-body", o.three_body, "three-body total-quanta cutoff")->check(CLI::Range(2, 200));
}

qtherm::SpectrumFamily parse_family(const std::string& s) {
  using qtherm::SpectrumFamily;
  if (s == "A") return SpectrumFamily::A;
  if (s == "B") return SpectrumFamily::B;
  if (s == "C") return SpectrumFamily::C;
  if (s == "D") return SpectrumFamily::D;
  if (s == "E") return SpectrumFamily::E;
  if (s == "indistinguishable") return SpectrumFamily::indistinguishable;
  throw qtherm::ValidationError("unknown family '" + s + "' (expected A-E or indistinguishable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-body quench thermodynamics engine"};
  app.require_subcommand(1);

  std::string config, out_dir = "out";
  int workers = 1;
  CutoffOverrides cut;

  auto* run_cmd = app.add_subcommand("run", "run one scenario file");
  run_cmd->add_option("-c,--config", config, "scenario YAML")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("-o,--out", out_dir, "output directory");
  add_cutoff_flags(run_cmd, cut);

  auto* sweep_cmd = app.add_subcommand("sweep", "sweep a scenario over its `sweep` grid");
  sweep_cmd->add_option("-c,--config", config, "scenario YAML with a sweep section")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("-o,--out", out_dir, "output directory");
  sweep_cmd->add_option("-j,--workers", workers, "concurrent grid points (overrides sweep.workers)")
      ->check(CLI::PositiveNumber);
  add_cutoff_flags(sweep_cmd, cut);

  std::string family = "A";
  double g_start = 0.0, g_stop = 20.0, g_step = 0.5, proxy = qtherm::kInfinityProxy;
  int levels = 12, cutoff = qtherm::kDefaultThreeBodyCutoff;
  auto* spec_cmd = app.add_subcommand("spectrum", "lowest three-body levels versus g");
  spec_cmd->add_option("-f,--family", family, "A, B, C, D, E or indistinguishable");
  spec_cmd->add_option("--g-start", g_start)->check(CLI::NonNegativeNumber);
  spec_cmd->add_option("--g-stop", g_stop)->check(CLI::NonNegativeNumber);
  spec_cmd->add_option("--g-step", g_step)->check(CLI::PositiveNumber);
  spec_cmd->add_option("--levels", levels, "levels per g")->check(CLI::PositiveNumber);
  spec_cmd->add_option("--cutoff-three-body", cutoff, "total-quanta cutoff")->check(CLI::Range(2, 200));
  spec_cmd->add_option("--infinity-proxy", proxy)->check(CLI::PositiveNumber);
  spec_cmd->add_option("-o,--out", out_dir, "output directory");
  spec_cmd->add_option("-j,--workers", workers)->check(CLI::PositiveNumber);

  std::vector<int> only;
  auto* val_cmd = app.add_subcommand("validate", "run the oracle and acceptance checks");
  val_cmd->add_option("--only", only, "check ids to run (default all)")->check(CLI::Range(1, 10));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      qtherm::QuenchProtocol p = qtherm::load_scenario(config);
      cut.apply(p);
      const qtherm::ResultBundle r = qtherm::run(p);
      for (const auto& path : qtherm::write_outputs(r, out_dir)) std::cout << "wrote " << path << '\n';
      std::cout << "<W>=" << r.average_work << " dF=" << r.free_energy_change << " <W_irr>=" << r.irreversible_work
                << " captured_weight=" << r.sd.captured_weight << '\n';
      for (const auto& w : r.convergence.warnings) std::cerr << "warning: " << w << '\n';
      return r.guard_warning ? kGuard : kOk;
    }
    if (*sweep_cmd) {
      qtherm::QuenchProtocol p = qtherm::load_scenario(config);
      cut.apply(p);
      if (p.sweep.parameter.empty()) throw qtherm::ValidationError("sweep: scenario has no sweep section");
      const int w = sweep_cmd->count("--workers") ? workers : p.sweep.workers;
      const auto rows = qtherm::sweep(p, p.sweep.parameter, p.sweep.values, w);
      std::filesystem::create_directories(out_dir);
      const std::string path = (std::filesystem::path(out_dir) / "sweep.csv").string();
      qtherm::write_sweep_csv(path, rows, p.sweep.parameter, qtherm::provenance_header(p));
      std::cout << "wrote " << path << '\n';
      bool guard = false;
      for (const auto& row : rows) {
        if (!row.error.empty()) std::cerr << "point " << row.value << " failed: " << row.error << '\n';
        guard = guard || row.guard_warning || !row.error.empty();
      }
      return guard ? kGuard : kOk;
    }
    if (*spec_cmd) {
      if (g_stop < g_start) throw qtherm::ValidationError("spectrum: --g-stop must be >= --g-start");
      std::vector<double> grid;
      for (double g = g_start; g <= g_stop + 1e-12; g += g_step) grid.push_back(g);
      const auto rows = qtherm::spectrum_sweep(parse_family(family), grid, cutoff, levels, workers, proxy);
      std::filesystem::create_directories(out_dir);
      const std::string path = (std::filesystem::path(out_dir) / ("spectrum_" + family + ".csv")).string();
      nlohmann::json meta{{"family", family}, {"cutoff_three_body", cutoff}, {"levels", levels},
                          {"infinity_proxy", proxy}, {"g", grid}};
      qtherm::write_spectrum_csv(path, rows, {"qtherm spectrum output", "protocol: " + meta.dump()});
      std::cout << "wrote " << path << '\n';
      for (const auto& row : rows) {
        if (!row.error.empty()) return kGuard;
      }
      return kOk;
    }
    if (*val_cmd) {
      const auto checks = qtherm::acceptance::all_checks();
      const std::set<int> wanted(only.begin(), only.end());
      bool all_pass = true;
      for (std::size_t i = 0; i < checks.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!wanted.empty() && !wanted.count(id)) continue;
        const auto r = qtherm::acceptance::run_check(id, checks[i]);
        std::cout << qtherm::acceptance::format_line(r) << std::endl;
        all_pass = all_pass && r.pass;
      }
      return all_pass ? kOk : kGuard;
    }
  } catch (const qtherm::ValidationError& ex) {
    std::cerr << "validation error: " << ex.what() << '\n';
    return kInvalid;
  } catch (const qtherm::ConvergenceError& ex) {
    std::cerr << "convergence failure: " << ex.what() << '\n';
    return kGuard;
  } catch (const std::exception& ex) {
    std::cerr << "internal error: " << ex.what() << '\n';
    return kInternal;
  }
  return kOk;
}
