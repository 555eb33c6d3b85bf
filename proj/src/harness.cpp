#include "shillbid/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "shillbid/errors.hpp"
#include "shillbid/serialization.hpp"

#ifndef SHILLBID_VERSION
#define SHILLBID_VERSION "0.1.0"
#endif

namespace shillbid {

using nlohmann::json;
namespace fs = std::filesystem;

std::string artifact_version() { return SHILLBID_VERSION; }

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const json& doc) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(doc.dump())));
  return buf;
}

namespace {

double number_at(const json& doc, const char* key, const std::string& where) {
  if (!doc.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  const json& v = doc.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return v.get<double>();
}

std::size_t count_at(const json& v, const std::string& where) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(where + ": expected a nonnegative integer");
  }
  return v.get<std::size_t>();
}

LowShill low_shill_from(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a string");
  const std::string s = v.get<std::string>();
  if (s == "uniform") return LowShill::kUniform;
  if (s == "atom_at_zero") return LowShill::kAtomAtZero;
  throw ConfigError(where + ": unknown low_shill '" + s + "'");
}

std::string header(const std::string& hash) {
  return "# config_hash=" + hash + " version=" + artifact_version() + "\n";
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory '" + dir + "': " + ec.message());
}

double resolve_gamma(const json& g, std::size_t horizon, const std::string& where) {
  if (g.is_number()) return g.get<double>();
  if (g.is_string() && g.get<std::string>() == "1/T") return 1.0 / static_cast<double>(horizon);
  throw ConfigError(where + ": gamma must be a number or \"1/T\"");
}

std::string gamma_label(const json& g) {
  return g.is_number() ? format_double(g.get<double>()) : g.get<std::string>();
}

}  // namespace

PiecewiseCdf cdf_from_spec(const json& spec, const std::string& where) {
  try {
    if (spec.is_string()) {
      const std::string s = spec.get<std::string>();
      if (s == "uniform") return uniform_cdf();
      if (s == "zero") return point_mass(0.0);
      if (s == "one") return point_mass(1.0);
      if (s == "base") return base_buyer_cdf();
      throw ConfigError(where + ": unknown distribution '" + s + "'");
    }
    if (!spec.is_object()) throw ConfigError(where + ": expected a string or an object");
    if (spec.contains("point_mass")) return point_mass(number_at(spec, "point_mass", where));
    if (spec.contains("two_branch")) {
      const LowShill low = spec.contains("low") ? low_shill_from(spec.at("low"), where + ".low")
                                                : LowShill::kUniform;
      return two_branch_shill_cdf(number_at(spec, "two_branch", where), low);
    }
    if (spec.contains("piecewise_linear")) {
      const json& pl = spec.at("piecewise_linear");
      if (!pl.contains("knots") || !pl.contains("values")) {
        throw ConfigError(where + ".piecewise_linear: needs 'knots' and 'values'");
      }
      return piecewise_linear_cdf(pl.at("knots").get<std::vector<double>>(),
                                  pl.at("values").get<std::vector<double>>());
    }
    if (spec.contains("segments")) return cdf_from_json(spec);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  throw ConfigError(where + ": unrecognised distribution spec");
}

AuctionInstance build_instance(const json& spec, std::size_t horizon, std::uint64_t seed) {
  const std::string where = "instance";
  if (!spec.is_object()) throw ConfigError(where + ": expected an object");
  if (spec.contains("path")) return load_instance(spec.at("path").get<std::string>());
  const std::string family = spec.value("family", std::string("hard"));
  if (family == "hard") {
    const double T = spec.contains("T") ? number_at(spec, "T", where) : static_cast<double>(horizon);
    if (!spec.contains("gamma")) throw ConfigError(where + ": missing field 'gamma'");
    const double gamma = resolve_gamma(spec.at("gamma"), static_cast<std::size_t>(T), where + ".gamma");
    const LowShill low = spec.contains("low_shill")
                             ? low_shill_from(spec.at("low_shill"), where + ".low_shill")
                             : LowShill::kUniform;
    AuctionInstance inst = [&] {
      if (spec.contains("cell") && !spec.at("cell").is_string()) {
        return make_hard_instance(T, gamma, count_at(spec.at("cell"), where + ".cell"), low);
      }
      Rng aux = Rng::stream(seed, 2);
      return make_hard_instance(T, gamma, aux, low);
    }();
    if (spec.contains("shill")) inst.shill_dist = cdf_from_spec(spec.at("shill"), where + ".shill");
    return inst;
  }
  if (family == "custom") {
    AuctionInstance inst{
        cdf_from_spec(spec.value("value", json("one")), where + ".value"),
        cdf_from_spec(spec.contains("buyer") ? spec.at("buyer") : json("uniform"), where + ".buyer"),
        cdf_from_spec(spec.contains("shill") ? spec.at("shill") : json("zero"), where + ".shill"),
        spec.value("label", std::string("custom")), std::nullopt};
    return inst;
  }
  throw ConfigError(where + ".family: unknown family '" + family + "'");
}

PolicyConfig policy_config_from_json(const json& params, std::size_t horizon) {
  PolicyConfig c;
  c.horizon = horizon;
  if (params.is_null()) return c;
  if (!params.is_object()) throw ConfigError("policy.params: expected an object");
  for (const auto& [key, v] : params.items()) {
    const std::string where = "policy.params." + key;
    auto num = [&] {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
      return v.get<double>();
    };
    auto flag = [&] {
      if (!v.is_boolean()) throw ConfigError(where + ": expected true or false");
      return v.get<bool>();
    };
    if (key == "delta") c.delta = num();
    else if (key == "value_grid") c.value_grid = count_at(v, where);
    else if (key == "full_value_grid") c.full_value_grid = flag();
    else if (key == "c_suf") c.c_suf = num();
    else if (key == "c_s") c.c_s = num();
    else if (key == "c_val") c.c_val = num();
    else if (key == "schedule_ratio") c.schedule_ratio = num();
    else if (key == "swap_parity") c.swap_parity = flag();
    else if (key == "robust_on_parity") c.robust_on_parity = flag();
    else if (key == "naive_grid") c.naive_grid = count_at(v, where);
    else if (key == "benchmark_grid") c.benchmark_grid = count_at(v, where);
    else throw ConfigError(where + ": unknown parameter");
  }
  c.validate();
  return c;
}

std::vector<std::uint64_t> seeds_from_json(const json& doc, const std::string& where) {
  std::vector<std::uint64_t> out;
  if (doc.is_array()) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      out.push_back(count_at(doc[i], where + "[" + std::to_string(i) + "]"));
    }
  } else if (doc.is_object()) {
    const std::uint64_t master = count_at(doc.value("master_seed", json(0)), where + ".master_seed");
    const std::size_t runs = count_at(doc.value("runs", json(1)), where + ".runs");
    for (std::size_t i = 0; i < runs; ++i) out.push_back(master ^ static_cast<std::uint64_t>(i));
  } else {
    throw ConfigError(where + ": expected a list or {\"master_seed\", \"runs\"}");
  }
  if (out.empty()) throw ConfigError(where + ": at least one seed is required");
  return out;
}

namespace {

json merged_params(const json& doc) {
  json params = json::object();
  const json& pol = doc.at("policy");
  if (pol.is_object() && pol.contains("params")) params = pol.at("params");
  if (doc.contains("policy_params")) params.update(doc.at("policy_params"));
  if (doc.contains("constants")) params.update(doc.at("constants"));
  if (doc.contains("benchmark_grid")) params["benchmark_grid"] = doc.at("benchmark_grid");
  return params;
}

}  // namespace

RunConfig run_config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected an object");
  RunConfig c;
  c.source = doc;
  if (!doc.contains("instance")) throw ConfigError("config: missing field 'instance'");
  c.instance = doc.at("instance");
  if (!doc.contains("T")) throw ConfigError("config: missing field 'T'");
  c.horizon = count_at(doc.at("T"), "config.T");
  if (c.horizon < 1) throw ConfigError("config.T: must be >= 1");
  if (!doc.contains("policy")) throw ConfigError("config: missing field 'policy'");
  const json& pol = doc.at("policy");
  if (pol.is_string()) {
    c.policy = pol.get<std::string>();
  } else if (pol.is_object() && pol.contains("name") && pol.at("name").is_string()) {
    c.policy = pol.at("name").get<std::string>();
  } else {
    throw ConfigError("config.policy: expected a name or {\"name\", \"params\"}");
  }
  const json params = merged_params(doc);
  c.policy_config = policy_config_from_json(params, c.horizon);
  c.benchmark_grid = c.policy_config.benchmark_grid;
  if (!doc.contains("seeds")) throw ConfigError("config: missing field 'seeds'");
  c.seeds = seeds_from_json(doc.at("seeds"), "config.seeds");
  c.output_dir = doc.value("output_dir", std::string("out"));
  if (doc.contains("emit_trace")) {
    if (!doc.at("emit_trace").is_boolean()) throw ConfigError("config.emit_trace: expected true or false");
    c.emit_trace = doc.at("emit_trace").get<bool>();
  }
  return c;
}

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json trace_summary_json(const RegretTrace& trace) {
  json epochs = json::array();
  for (const EpochSummary& e : trace.epochs) {
    epochs.push_back({{"index", e.index},
                      {"start", e.start},
                      {"length", e.length},
                      {"iota", e.iota},
                      {"validated", e.validated},
                      {"gamma_bar", e.gamma_bar ? json(*e.gamma_bar) : json(nullptr)}});
  }
  return {{"policy", trace.policy},       {"instance", trace.instance},
          {"T", trace.horizon},           {"seed", trace.seed},
          {"total_regret", trace.total_regret}, {"epochs", epochs}};
}

RunOutcome run(const RunConfig& config) {
  RunOutcome out;
  out.hash = config_hash(config.source);
  make_dir(config.output_dir);
  const fs::path dir(config.output_dir);
  EpisodeOptions options;
  options.benchmark_grid = config.benchmark_grid;
  options.record_rounds = config.emit_trace;

  std::ofstream summary = open_out(dir / "summary.csv");
  summary << header(out.hash) << "seed_index,seed,policy,instance,T,total_regret,epochs,optimistic_epochs\n";
  json runs = json::array();
  for (std::size_t i = 0; i < config.seeds.size(); ++i) {
    const std::uint64_t seed = config.seeds[i];
    const AuctionInstance inst = build_instance(config.instance, config.horizon, seed);
    auto policy = make_policy(config.policy, inst, config.policy_config, seed);
    RegretTrace trace = run_episode(inst, *policy, config.horizon, seed, options);
    if (config.emit_trace) {
      const fs::path path = dir / ("trace_" + std::to_string(i) + ".csv");
      write_trace_csv(trace, path.string(),
                      "config_hash=" + out.hash + " version=" + artifact_version() +
                          " seed=" + std::to_string(seed));
    }
    int iotas = 0;
    for (const EpochSummary& e : trace.epochs) iotas += e.iota;
    summary << i << ',' << seed << ',' << trace.policy << ",\"" << trace.instance << "\","
            << trace.horizon << ',' << format_double(trace.total_regret) << ','
            << trace.epochs.size() << ',' << iotas << '\n';
    runs.push_back(trace_summary_json(trace));
    trace.rounds.clear();
    trace.rounds.shrink_to_fit();
    out.traces.push_back(std::move(trace));
  }
  json doc{{"config_hash", out.hash},
           {"version", artifact_version()},
           {"policy", config.policy},
           {"T", config.horizon},
           {"pinv_cutoff", "64 k sigma_max eps"},
           {"runs", runs}};
  open_out(dir / "summary.json") << doc.dump(2) << '\n';
  return out;
}

RateFit fit_rate(const std::vector<std::pair<double, double>>& points) {
  std::vector<double> x, y;
  RateFit fit;
  for (const auto& [t, r] : points) {
    if (!(t > 0.0 && r > 0.0)) {
      ++fit.excluded;
      continue;
    }
    x.push_back(std::log(t));
    y.push_back(std::log(r));
  }
  fit.used = x.size();
  if (fit.used < 4) throw DomainError("rate fit needs at least 4 positive points");
  const double n = static_cast<double>(fit.used);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("rate fit needs distinct horizons");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return fit;
}

SweepConfig sweep_config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("sweep config: expected an object");
  SweepConfig c;
  c.source = doc;
  for (const char* key : {"instance", "policies", "T", "gamma", "seeds"}) {
    if (!doc.contains(key)) throw ConfigError(std::string("sweep config: missing field '") + key + "'");
  }
  c.instance = doc.at("instance");
  for (const json& p : doc.at("policies")) {
    if (!p.is_string()) throw ConfigError("sweep config.policies: expected names");
    c.policies.push_back(p.get<std::string>());
  }
  for (std::size_t i = 0; i < doc.at("T").size(); ++i) {
    c.horizons.push_back(count_at(doc.at("T")[i], "sweep config.T[" + std::to_string(i) + "]"));
  }
  for (const json& g : doc.at("gamma")) {
    resolve_gamma(g, 1, "sweep config.gamma");
    c.gammas.push_back(g);
  }
  if (c.policies.empty() || c.horizons.empty() || c.gammas.empty()) {
    throw ConfigError("sweep config: ladders must be nonempty");
  }
  c.seeds = seeds_from_json(doc.at("seeds"), "sweep config.seeds");
  if (doc.contains("policy_params")) c.policy_params = doc.at("policy_params");
  if (doc.contains("constants")) c.policy_params.update(doc.at("constants"));
  c.output_dir = doc.value("output_dir", std::string("out"));
  if (doc.contains("benchmark_grid")) c.benchmark_grid = count_at(doc.at("benchmark_grid"), "sweep config.benchmark_grid");
  if (doc.contains("workers")) c.workers = count_at(doc.at("workers"), "sweep config.workers");
  // Fail early on bad policy parameters.
  policy_config_from_json(c.policy_params, c.horizons.front());
  return c;
}

std::size_t default_workers() {
  if (const char* env = std::getenv("SHILLBID_WORKERS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void aggregate(SweepResult& result) {
  result.aggregates.clear();
  result.fits.clear();
  std::map<std::tuple<std::string, std::size_t, std::string>, std::size_t> index;
  std::vector<std::vector<double>> values;
  for (const SweepCell& c : result.cells) {
    auto key = std::tuple{c.policy, c.horizon, c.gamma_label};
    auto [it, inserted] = index.try_emplace(key, result.aggregates.size());
    if (inserted) {
      SweepAggregate a;
      a.policy = c.policy;
      a.horizon = c.horizon;
      a.gamma_label = c.gamma_label;
      result.aggregates.push_back(a);
      values.emplace_back();
    }
    values[it->second].push_back(c.total_regret);
  }
  for (std::size_t i = 0; i < result.aggregates.size(); ++i) {
    SweepAggregate& a = result.aggregates[i];
    const std::vector<double>& v = values[i];
    a.n = v.size();
    double sum = 0.0;
    for (double x : v) sum += x;
    a.mean = sum / static_cast<double>(a.n);
    double ss = 0.0;
    for (double x : v) ss += (x - a.mean) * (x - a.mean);
    a.std = a.n > 1 ? std::sqrt(ss / static_cast<double>(a.n - 1)) : 0.0;
    a.stderr_ = a.std / std::sqrt(static_cast<double>(a.n));
  }
  std::map<std::pair<std::string, std::string>, std::vector<std::pair<double, double>>> series;
  std::vector<std::pair<std::string, std::string>> order;
  for (const SweepAggregate& a : result.aggregates) {
    auto key = std::pair{a.policy, a.gamma_label};
    if (!series.count(key)) order.push_back(key);
    series[key].emplace_back(static_cast<double>(a.horizon), a.mean);
  }
  for (const auto& key : order) {
    auto& pts = series[key];
    std::vector<double> ts;
    for (const auto& p : pts) ts.push_back(p.first);
    std::sort(ts.begin(), ts.end());
    if (std::unique(ts.begin(), ts.end()) - ts.begin() < 4) continue;
    try {
      result.fits.push_back({key.first, key.second, fit_rate(pts)});
    } catch (const DomainError&) {
    }
  }
}

SweepResult sweep(const SweepConfig& config) {
  SweepResult result;
  result.hash = config_hash(config.source);
  for (const std::string& p : config.policies) {
    for (std::size_t T : config.horizons) {
      for (const json& g : config.gammas) {
        for (std::size_t s = 0; s < config.seeds.size(); ++s) {
          SweepCell c;
          c.policy = p;
          c.horizon = T;
          c.gamma_label = gamma_label(g);
          c.gamma = resolve_gamma(g, T, "sweep config.gamma");
          c.seed_index = s;
          c.seed = config.seeds[s];
          result.cells.push_back(c);
        }
      }
    }
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(result.cells.size());
  auto work = [&] {
    for (std::size_t i = next++; i < result.cells.size(); i = next++) {
      SweepCell& c = result.cells[i];
      try {
        json spec = config.instance;
        spec["gamma"] = c.gamma;
        const AuctionInstance inst = build_instance(spec, c.horizon, c.seed);
        PolicyConfig pc = policy_config_from_json(config.policy_params, c.horizon);
        auto policy = make_policy(c.policy, inst, pc, c.seed);
        EpisodeOptions o;
        o.benchmark_grid = config.benchmark_grid;
        o.record_rounds = false;
        c.total_regret = run_episode(inst, *policy, c.horizon, c.seed, o).total_regret;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers =
      std::min(config.workers ? config.workers : default_workers(), result.cells.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  aggregate(result);
  return result;
}

void emit_plot_data(const SweepResult& result, const std::string& dir) {
  make_dir(dir);
  const fs::path d(dir);
  const std::string head = header(result.hash);
  {
    std::ofstream out = open_out(d / "cells.csv");
    out << head << "policy,T,gamma,seed_index,seed,total_regret\n";
    for (const SweepCell& c : result.cells) {
      out << c.policy << ',' << c.horizon << ',' << c.gamma_label << ',' << c.seed_index << ','
          << c.seed << ',' << format_double(c.total_regret) << '\n';
    }
  }
  std::map<std::pair<std::string, std::string>, RateFit> fits;
  for (const SweepFit& f : result.fits) fits[{f.policy, f.gamma_label}] = f.fit;
  auto row = [](std::ostream& out, const SweepAggregate& a) {
    out << a.n << ',' << format_double(a.mean) << ',' << format_double(a.std) << ','
        << format_double(a.stderr_);
  };
  {
    std::vector<SweepAggregate> rows = result.aggregates;
    std::stable_sort(rows.begin(), rows.end(), [](const SweepAggregate& a, const SweepAggregate& b) {
      return std::tie(a.policy, a.gamma_label) < std::tie(b.policy, b.gamma_label);
    });
    std::ofstream out = open_out(d / "regret_vs_T.csv");
    out << head << "policy,gamma,T,n,mean,std,stderr,fitted\n";
    for (const SweepAggregate& a : rows) {
      out << a.policy << ',' << a.gamma_label << ',' << a.horizon << ',';
      row(out, a);
      auto it = fits.find({a.policy, a.gamma_label});
      out << ',';
      if (it != fits.end()) {
        out << format_double(std::exp(it->second.intercept) *
                             std::pow(static_cast<double>(a.horizon), it->second.slope));
      }
      out << '\n';
    }
  }
  {
    std::vector<SweepAggregate> rows = result.aggregates;
    std::stable_sort(rows.begin(), rows.end(), [](const SweepAggregate& a, const SweepAggregate& b) {
      return std::tie(a.policy, a.horizon) < std::tie(b.policy, b.horizon);
    });
    std::ofstream out = open_out(d / "regret_vs_gamma.csv");
    out << head << "policy,T,gamma,n,mean,std,stderr\n";
    for (const SweepAggregate& a : rows) {
      out << a.policy << ',' << a.horizon << ',' << a.gamma_label << ',';
      row(out, a);
      out << '\n';
    }
  }
  {
    std::ofstream out = open_out(d / "fits.csv");
    out << head << "policy,gamma,slope,intercept,r2,points\n";
    for (const SweepFit& f : result.fits) {
      out << f.policy << ',' << f.gamma_label << ',' << format_double(f.fit.slope) << ','
          << format_double(f.fit.intercept) << ',' << format_double(f.fit.r2) << ','
          << f.fit.used << '\n';
    }
  }
}

SweepResult reread_plot_data(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "cells.csv");
  if (!in) throw Error("cannot read '" + (fs::path(dir) / "cells.csv").string() + "'");
  SweepResult result;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.rfind("# config_hash=", 0) == 0) {
      result.hash = line.substr(14, line.find(' ', 14) - 14);
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string f[6];
    for (auto& x : f) std::getline(ss, x, ',');
    SweepCell c;
    c.policy = f[0];
    c.horizon = std::stoull(f[1]);
    c.gamma_label = f[2];
    c.gamma = c.gamma_label == "1/T" ? 1.0 / static_cast<double>(c.horizon) : std::stod(f[2]);
    c.seed_index = std::stoull(f[3]);
    c.seed = std::stoull(f[4]);
    c.total_regret = std::stod(f[5]);
    result.cells.push_back(c);
  }
  aggregate(result);
  return result;
}

}  // namespace shillbid
