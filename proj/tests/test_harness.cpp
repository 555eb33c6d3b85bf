#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "shillbid/errors.hpp"
#include "shillbid/harness.hpp"

using namespace shillbid;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fresh_dir(const std::string& name) {
  const fs::path p = fs::path(testing::TempDir()) / ("shillbid_" + name);
  fs::remove_all(p);
  return p.string();
}

std::size_t data_rows(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    ++n;
  }
  return n;
}

std::vector<std::pair<double, double>> power_law(double a, double c, std::size_t n) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 1000.0 * std::pow(2.0, static_cast<double>(i));
    pts.emplace_back(t, c * std::pow(t, a));
  }
  return pts;
}

json run_doc(const std::string& dir, const std::string& policy) {
  return json{{"instance", {{"family", "hard"}, {"gamma", 1.0}, {"cell", 2}}},
              {"policy", policy},
              {"T", 2000},
              {"seeds", {{"master_seed", 17}, {"runs", 3}}},
              {"output_dir", dir},
              {"emit_trace", true}};
}

}  // namespace

TEST(FitRate, ExactLaws) {
  EXPECT_NEAR(fit_rate(power_law(2.0 / 3.0, 3.0, 5)).slope, 2.0 / 3.0, 1e-3);
  EXPECT_NEAR(fit_rate(power_law(0.5, 1.0, 5)).slope, 0.5, 1e-12);
  const RateFit c = fit_rate(power_law(0.0, 7.0, 6));
  EXPECT_NEAR(c.slope, 0.0, 1e-12);
  EXPECT_NEAR(std::exp(c.intercept), 7.0, 1e-9);
  EXPECT_NEAR(fit_rate(power_law(0.5, 1.0, 5)).r2, 1.0, 1e-12);
}

TEST(FitRate, NoisyPowerLaw) {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    auto pts = power_law(2.0 / 3.0, 2.0, 8);
    for (auto& p : pts) p.second *= 1.0 + 0.05 * (2.0 * rng.uniform() - 1.0);
    EXPECT_NEAR(fit_rate(pts).slope, 2.0 / 3.0, 0.05);
  }
}

TEST(FitRate, ExclusionsAndErrors) {
  auto pts = power_law(0.5, 1.0, 5);
  pts.emplace_back(5000.0, 0.0);
  const RateFit f = fit_rate(pts);
  EXPECT_EQ(f.used, 5u);
  EXPECT_EQ(f.excluded, 1u);
  EXPECT_THROW(fit_rate(power_law(0.5, 1.0, 3)), DomainError);
}

TEST(Config, Hashing) {
  const json a = json::parse(R"({"b": 1, "a": [1, 2]})");
  const json b = json::parse(R"({"a": [1, 2], "b": 1})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(json{{"b", 2}, {"a", {1, 2}}}));
  EXPECT_EQ(config_hash(a).size(), 16u);
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_FALSE(artifact_version().empty());
}

TEST(Config, ParseErrorsNameTheField) {
  const std::string dir = fresh_dir("bad");
  fs::create_directories(dir);
  const std::string path = dir + "/bad.json";
  std::ofstream(path) << "{\n  \"T\": 10,\n  \"seeds\": [1,\n}\n";
  try {
    read_config_file(path);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
  json doc = run_doc(dir, "oracle");
  doc.erase("T");
  try {
    run_config_from_json(doc);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'T'"), std::string::npos);
  }
  doc = run_doc(dir, "oracle");
  doc["policy"] = {{"name", "shill_proof"}, {"params", {{"c_suff", 2}}}};
  EXPECT_THROW(run_config_from_json(doc), ConfigError);
  doc = run_doc(dir, "oracle");
  doc["seeds"] = json::array();
  EXPECT_THROW(run_config_from_json(doc), ConfigError);
  doc = run_doc(dir, "oracle");
  doc["T"] = 0;
  EXPECT_THROW(run_config_from_json(doc), ConfigError);
}

TEST(Config, SeedsAndSpecs) {
  EXPECT_EQ(seeds_from_json(json{{"master_seed", 12}, {"runs", 3}}, "s"),
            (std::vector<std::uint64_t>{12, 13, 14}));
  EXPECT_EQ(seeds_from_json(json{5, 9}, "s"), (std::vector<std::uint64_t>{5, 9}));
  EXPECT_EQ(cdf_from_spec("uniform", "x").eval(0.3), 0.3);
  EXPECT_EQ(cdf_from_spec(json{{"point_mass", 0.4}}, "x").eval(0.4), 1.0);
  EXPECT_THROW(cdf_from_spec("gauss", "x"), ConfigError);
  const AuctionInstance h =
      build_instance(json{{"family", "hard"}, {"gamma", "1/T"}, {"cell", 1}}, 1000, 0);
  EXPECT_NEAR(h.hard->gamma, 1e-3, 1e-15);
  EXPECT_TRUE(h.hard->cells >= 4);
  const AuctionInstance r1 = build_instance(json{{"family", "hard"}, {"gamma", 1.0}}, 1000000, 5);
  const AuctionInstance r2 = build_instance(json{{"family", "hard"}, {"gamma", 1.0}}, 1000000, 5);
  EXPECT_EQ(r1.hard->cell, r2.hard->cell);
  const AuctionInstance c =
      build_instance(json{{"family", "custom"}, {"buyer", "uniform"}, {"shill", "uniform"}}, 10, 0);
  EXPECT_EQ(c.shill_dist.eval(0.5), 0.5);
}

TEST(Run, OracleAndReproducibleFiles) {
  const std::string d1 = fresh_dir("run1"), d2 = fresh_dir("run2");
  json doc = run_doc(d1, "oracle");
  const RunOutcome o = run(run_config_from_json(doc));
  ASSERT_EQ(o.traces.size(), 3u);
  for (const RegretTrace& t : o.traces) EXPECT_LE(t.total_regret, 2000 * 1e-5);

  json a = run_doc(d1, "shill_proof"), b = run_doc(d2, "shill_proof");
  run(run_config_from_json(a));
  run(run_config_from_json(b));
  for (const char* f : {"trace_0.csv", "trace_1.csv", "trace_2.csv", "summary.csv", "summary.json"}) {
    EXPECT_FALSE(slurp(fs::path(d1) / f).empty()) << f;
  }
  // output_dir is part of the document, so compare the same document run twice
  run(run_config_from_json(a));
  const std::string first = slurp(fs::path(d1) / "trace_1.csv");
  run(run_config_from_json(a));
  EXPECT_EQ(first, slurp(fs::path(d1) / "trace_1.csv"));
  EXPECT_NE(first.find("# config_hash=" + config_hash(a)), std::string::npos);
  // traces differ only through the hash line
  const std::string other = slurp(fs::path(d2) / "trace_1.csv");
  EXPECT_EQ(first.substr(first.find('\n')), other.substr(other.find('\n')));
  const json summary = json::parse(slurp(fs::path(d1) / "summary.json"));
  EXPECT_EQ(summary.at("config_hash"), config_hash(a));
  EXPECT_EQ(summary.at("runs").size(), 3u);
}

TEST(Sweep, RowsRereadAndWorkers) {
  const std::string dir = fresh_dir("sweep");
  json doc{{"instance", {{"family", "hard"}, {"cell", 1}}},
           {"policies", {"robust_only", "naive"}},
           {"T", {500, 1000, 2000, 4000}},
           {"gamma", {1.0, "1/T"}},
           {"seeds", {{"master_seed", 3}, {"runs", 3}}},
           {"output_dir", dir},
           {"workers", 4}};
  SweepConfig cfg = sweep_config_from_json(doc);
  const SweepResult r = sweep(cfg);
  EXPECT_EQ(r.cells.size(), 2u * 4u * 2u * 3u);
  EXPECT_EQ(r.aggregates.size(), 2u * 4u * 2u);
  EXPECT_EQ(r.fits.size(), 4u);
  emit_plot_data(r, dir);
  EXPECT_EQ(data_rows(fs::path(dir) / "cells.csv"), r.cells.size());
  EXPECT_EQ(data_rows(fs::path(dir) / "regret_vs_T.csv"), r.aggregates.size());
  EXPECT_EQ(data_rows(fs::path(dir) / "regret_vs_gamma.csv"), r.aggregates.size());
  EXPECT_EQ(data_rows(fs::path(dir) / "fits.csv"), r.fits.size());
  {
    std::ifstream in(fs::path(dir) / "regret_vs_T.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("# config_hash=" + r.hash, 0), 0u);
    std::getline(in, line);
    EXPECT_EQ(line, "policy,gamma,T,n,mean,std,stderr,fitted");
  }

  const SweepResult back = reread_plot_data(dir);
  EXPECT_EQ(back.hash, r.hash);
  ASSERT_EQ(back.aggregates.size(), r.aggregates.size());
  for (std::size_t i = 0; i < r.aggregates.size(); ++i) {
    EXPECT_EQ(back.aggregates[i].mean, r.aggregates[i].mean);
    EXPECT_EQ(back.aggregates[i].std, r.aggregates[i].std);
  }
  for (std::size_t i = 0; i < r.fits.size(); ++i) EXPECT_EQ(back.fits[i].fit.slope, r.fits[i].fit.slope);

  cfg.workers = 1;
  const SweepResult serial = sweep(cfg);
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    EXPECT_EQ(serial.cells[i].total_regret, r.cells[i].total_regret);
  }
}

TEST(Sweep, FewHorizonsGiveNoFit) {
  json doc{{"instance", {{"family", "hard"}, {"cell", 1}}},
           {"policies", {"oracle"}},
           {"T", {500, 1000, 2000}},
           {"gamma", {1.0}},
           {"seeds", {1}},
           {"output_dir", fresh_dir("few")}};
  EXPECT_TRUE(sweep(sweep_config_from_json(doc)).fits.empty());
  doc["policies"] = {"bogus"};
  EXPECT_THROW(sweep(sweep_config_from_json(doc)), ConfigError);
}
