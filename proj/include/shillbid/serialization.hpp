#pragma once

#include <string>

#include "json.hpp"
#include "shillbid/instance.hpp"
#include "shillbid/piecewise_cdf.hpp"

namespace shillbid {

inline constexpr int kInstanceSchemaVersion = 1;

nlohmann::json cdf_to_json(const PiecewiseCdf& cdf);
// Throws ConfigError on malformed documents (message names the field).
PiecewiseCdf cdf_from_json(const nlohmann::json& doc);

nlohmann::json instance_to_json(const AuctionInstance& instance);
AuctionInstance instance_from_json(const nlohmann::json& doc);

void save_instance(const AuctionInstance& instance, const std::string& path);
AuctionInstance load_instance(const std::string& path);

}  // namespace shillbid
