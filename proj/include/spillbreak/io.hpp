#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "spillbreak/simulate.hpp"

namespace spillbreak {

using Json = nlohmann::ordered_json;

Json to_json(const ModelFit& fit, const PanelData& panel);  ///< break_estimate.json body
Json dml_json(const ModelFit& fit);                         ///< dml_fit.json body
Json to_json(const DMLFit& fit);
Json to_json(const ReplicationReport& report);
Json to_json(const DgpConfig& config);

/// Pretty-printed with a trailing newline; numbers round-trip exactly.
void write_json(const Json& value, const std::filesystem::path& path);

}  // namespace spillbreak
