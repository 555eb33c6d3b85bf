#include "shillbid/serialization.hpp"

#include <cmath>
#include <fstream>

#include "shillbid/errors.hpp"

namespace shillbid {
namespace {

using nlohmann::json;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

const json& field(const json& doc, const char* key, const std::string& where) {
  if (!doc.is_object() || !doc.contains(key)) {
    throw ConfigError(where + ": missing field '" + key + "'");
  }
  return doc.at(key);
}

double number(const json& doc, const char* key, const std::string& where) {
  const json& v = field(doc, key, where);
  if (!v.is_number()) throw ConfigError(where + ": field '" + key + "' must be a number");
  return v.get<double>();
}

json factor_to_json(const Factor& f) {
  return std::visit(
      Overloaded{
          [](const Constant& c) { return json{{"kind", "constant"}, {"value", c.value}}; },
          [](const Linear& l) {
            return json{{"kind", "linear"}, {"slope", l.slope}, {"intercept", l.intercept}};
          },
          [](const Reciprocal& r) { return json{{"kind", "reciprocal"}, {"scale", r.scale}}; },
          [](const SineSquared& s) {
            return json{{"kind", "sine_squared"}, {"left", s.left}, {"width", s.width}};
          },
      },
      f);
}

Factor factor_from_json(const json& doc, const std::string& where) {
  const json& kind = field(doc, "kind", where);
  if (!kind.is_string()) throw ConfigError(where + ": 'kind' must be a string");
  const std::string k = kind.get<std::string>();
  if (k == "constant") return Constant{number(doc, "value", where)};
  if (k == "linear") return Linear{number(doc, "slope", where), number(doc, "intercept", where)};
  if (k == "reciprocal") return Reciprocal{number(doc, "scale", where)};
  if (k == "sine_squared") return SineSquared{number(doc, "left", where), number(doc, "width", where)};
  throw ConfigError(where + ": unknown factor kind '" + k + "'");
}

const char* low_shill_name(LowShill low) {
  return low == LowShill::kUniform ? "uniform" : "atom_at_zero";
}

LowShill low_shill_from(const std::string& s, const std::string& where) {
  if (s == "uniform") return LowShill::kUniform;
  if (s == "atom_at_zero") return LowShill::kAtomAtZero;
  throw ConfigError(where + ": unknown low_shill '" + s + "'");
}

}  // namespace

json cdf_to_json(const PiecewiseCdf& cdf) {
  json segs = json::array();
  for (const Segment& s : cdf.segments()) {
    json terms = json::array();
    for (const Term& t : s.terms) {
      json factors = json::array();
      for (const Factor& f : t.factors) factors.push_back(factor_to_json(f));
      terms.push_back({{"weight", t.weight}, {"factors", factors}});
    }
    segs.push_back({{"lo", s.lo}, {"hi", s.hi}, {"terms", terms}});
  }
  json atoms = json::array();
  for (const Atom& a : cdf.atoms()) atoms.push_back({{"point", a.point}, {"mass", a.mass}});
  return {{"segments", segs}, {"atoms", atoms}};
}

PiecewiseCdf cdf_from_json(const json& doc) {
  const json& segs = field(doc, "segments", "cdf");
  if (!segs.is_array()) throw ConfigError("cdf: 'segments' must be an array");
  std::vector<Segment> out;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const std::string where = "cdf.segments[" + std::to_string(i) + "]";
    Segment s{number(segs[i], "lo", where), number(segs[i], "hi", where), {}};
    const json& terms = field(segs[i], "terms", where);
    for (std::size_t j = 0; j < terms.size(); ++j) {
      const std::string tw = where + ".terms[" + std::to_string(j) + "]";
      Term t{number(terms[j], "weight", tw), {}};
      const json& factors = field(terms[j], "factors", tw);
      for (std::size_t k = 0; k < factors.size(); ++k) {
        t.factors.push_back(factor_from_json(factors[k], tw + ".factors[" + std::to_string(k) + "]"));
      }
      s.terms.push_back(std::move(t));
    }
    out.push_back(std::move(s));
  }
  PiecewiseCdf cdf = [&] {
    try {
      return PiecewiseCdf::from_segments(std::move(out));
    } catch (const InvalidDistributionError& e) {
      throw ConfigError(std::string("cdf: ") + e.what());
    }
  }();
  // The atom list is derived; a stored list must agree with the segments.
  if (doc.contains("atoms")) {
    const auto derived = cdf.atoms();
    const json& stored = doc.at("atoms");
    bool ok = stored.is_array() && stored.size() == derived.size();
    for (std::size_t i = 0; ok && i < derived.size(); ++i) {
      ok = std::abs(number(stored[i], "point", "cdf.atoms") - derived[i].point) <= 1e-12 &&
           std::abs(number(stored[i], "mass", "cdf.atoms") - derived[i].mass) <= 1e-12;
    }
    if (!ok) throw ConfigError("cdf: 'atoms' disagrees with the segment formulas");
  }
  return cdf;
}

json instance_to_json(const AuctionInstance& instance) {
  json doc{{"schema_version", kInstanceSchemaVersion},
           {"label", instance.label},
           {"value", cdf_to_json(instance.value_dist)},
           {"buyer", cdf_to_json(instance.buyer_dist)},
           {"shill", cdf_to_json(instance.shill_dist)}};
  if (instance.hard) {
    const HardParams& p = *instance.hard;
    doc["hard_params"] = {{"T", p.horizon},       {"h", p.h},         {"eps", p.eps},
                          {"N", p.cells},         {"a", p.cell},      {"gamma", p.gamma},
                          {"low_shill", low_shill_name(p.low_shill)}};
  } else {
    doc["hard_params"] = nullptr;
  }
  return doc;
}

AuctionInstance instance_from_json(const json& doc) {
  const json& version = field(doc, "schema_version", "instance");
  if (!version.is_number_integer() || version.get<int>() != kInstanceSchemaVersion) {
    throw ConfigError("instance: unsupported schema_version");
  }
  AuctionInstance inst{cdf_from_json(field(doc, "value", "instance")),
                       cdf_from_json(field(doc, "buyer", "instance")),
                       cdf_from_json(field(doc, "shill", "instance")),
                       doc.value("label", std::string{}),
                       std::nullopt};
  if (doc.contains("hard_params") && !doc.at("hard_params").is_null()) {
    const json& hp = doc.at("hard_params");
    const std::string where = "instance.hard_params";
    HardParams p;
    p.horizon = number(hp, "T", where);
    p.h = number(hp, "h", where);
    p.eps = number(hp, "eps", where);
    p.cells = field(hp, "N", where).get<std::size_t>();
    p.cell = field(hp, "a", where).get<std::size_t>();
    p.gamma = number(hp, "gamma", where);
    p.low_shill = low_shill_from(hp.value("low_shill", std::string("uniform")), where);
    inst.hard = p;
  }
  try {
    inst.validate();
  } catch (const InvalidDistributionError& e) {
    throw ConfigError(std::string("instance: ") + e.what());
  }
  return inst;
}

void save_instance(const AuctionInstance& instance, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write instance file '" + path + "'");
  out << instance_to_json(instance).dump(2) << "\n";
}

AuctionInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read instance file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("instance file '" + path + "': " + e.what());
  }
  return instance_from_json(doc);
}

}  // namespace shillbid
