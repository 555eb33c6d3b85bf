#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "shillbid/errors.hpp"
#include "shillbid/harness.hpp"
#include "shillbid/serialization.hpp"
#include "shillbid/verify.hpp"

using namespace shillbid;

namespace {

int cmd_run(const std::string& path) {
  const RunConfig cfg = run_config_from_json(read_config_file(path));
  const RunOutcome out = run(cfg);
  for (std::size_t i = 0; i < out.traces.size(); ++i) {
    std::printf("seed %llu  regret %.6g\n", static_cast<unsigned long long>(cfg.seeds[i]),
                out.traces[i].total_regret);
  }
  std::printf("config_hash=%s  output=%s\n", out.hash.c_str(), cfg.output_dir.c_str());
  return 0;
}

int cmd_sweep(const std::string& path) {
  const SweepConfig cfg = sweep_config_from_json(read_config_file(path));
  const SweepResult res = sweep(cfg);
  emit_plot_data(res, cfg.output_dir);
  for (const SweepAggregate& a : res.aggregates) {
    std::printf("%-12s T=%-8zu gamma=%-8s mean=%.6g se=%.3g\n", a.policy.c_str(), a.horizon,
                a.gamma_label.c_str(), a.mean, a.stderr_);
  }
  for (const SweepFit& f : res.fits) {
    std::printf("fit %-12s gamma=%-8s slope=%.4f r2=%.4f\n", f.policy.c_str(),
                f.gamma_label.c_str(), f.fit.slope, f.fit.r2);
  }
  std::printf("config_hash=%s  output=%s\n", res.hash.c_str(), cfg.output_dir.c_str());
  return 0;
}

int cmd_verify(const std::string& check, std::uint64_t seed, const std::string& json_out) {
  VerifyOptions opt;
  opt.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<CheckReport> reports = run_verify_suite(opt, check);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (reports.empty()) throw ConfigError("no check matches '" + check + "'");
  for (const CheckReport& r : reports) {
    std::printf("%-4s %-40s worst=%-12.4g tol=%-10.4g %s%s\n", r.as_expected() ? "ok" : "FAIL",
                r.name.c_str(), r.worst, r.tolerance, r.negative_control ? "[negative] " : "",
                r.location.c_str());
  }
  const bool ok = suite_passed(reports);
  std::printf("%s  (%zu checks, %.1f s)\n", ok ? "all checks as expected" : "suite FAILED",
              reports.size(), secs);
  if (!json_out.empty()) {
    nlohmann::json doc = nlohmann::json::array();
    for (const CheckReport& r : reports) doc.push_back(report_to_json(r));
    std::ofstream out(json_out);
    if (!out) throw Error("cannot write '" + json_out + "'");
    out << nlohmann::json{{"version", artifact_version()}, {"seed", seed}, {"passed", ok},
                          {"checks", doc}}
               .dump(2)
        << '\n';
  }
  return ok ? 0 : 1;
}

int cmd_hard_instance(double T, double gamma, std::optional<std::size_t> cell,
                      const std::string& low, std::uint64_t seed, const std::string& out) {
  nlohmann::json spec{{"family", "hard"}, {"T", T}, {"gamma", gamma}, {"low_shill", low}};
  if (cell) spec["cell"] = *cell;
  const AuctionInstance inst = build_instance(spec, static_cast<std::size_t>(T), seed);
  const nlohmann::json doc = instance_to_json(inst);
  if (out.empty()) {
    std::cout << doc.dump(2) << '\n';
  } else {
    save_instance(inst, out);
    const HardParams& hp = *inst.hard;
    std::printf("wrote %s  cells=%zu cell=%zu h=%.6g eps=%.6g\n", out.c_str(), hp.cells, hp.cell,
                hp.h, hp.eps);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Repeated first-price auctions under max-shilling feedback"};
  app.set_version_flag("--version", artifact_version());
  app.require_subcommand(1);

  std::string run_path;
  auto* run_cmd = app.add_subcommand("run", "Run one episode per seed");
  run_cmd->add_option("config", run_path, "Config document")->required()->check(CLI::ExistingFile);

  std::string sweep_path;
  auto* sweep_cmd = app.add_subcommand("sweep", "Cross-product sweep with rate fits");
  sweep_cmd->add_option("config", sweep_path, "Config document")->required()->check(CLI::ExistingFile);

  std::string check, json_out;
  std::uint64_t seed = 1;
  auto* verify_cmd = app.add_subcommand("verify", "Numerical lemma checks");
  verify_cmd->add_option("--check", check, "Run checks whose name starts with NAME");
  verify_cmd->add_option("--seed", seed, "Master seed");
  verify_cmd->add_option("--json", json_out, "Write reports to this file");

  double T = 0.0, gamma = 1.0;
  std::optional<std::size_t> cell;
  std::string low = "uniform", out;
  std::uint64_t hseed = 0;
  auto* hard_cmd = app.add_subcommand("hard-instance", "Emit a lower-bound instance");
  hard_cmd->add_option("--T", T, "Horizon")->required();
  hard_cmd->add_option("--gamma", gamma, "Low-shill mass")->required();
  hard_cmd->add_option("--cell", cell, "Planted cell (1-based); random if omitted");
  hard_cmd->add_option("--seed", hseed, "Seed for a random cell");
  hard_cmd->add_option("--low-shill", low, "uniform or atom_at_zero");
  hard_cmd->add_option("--out", out, "Output file (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return cmd_run(run_path);
    if (*sweep_cmd) return cmd_sweep(sweep_path);
    if (*verify_cmd) return cmd_verify(check, seed, json_out);
    if (*hard_cmd) return cmd_hard_instance(T, gamma, cell, low, hseed, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "shillbid: %s\n", e.what());
    return 2;
  }
  return 1;
}
