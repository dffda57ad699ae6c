#pragma once

#include <hierest/sim.hpp>

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace hierest::scenario
{

using Json = nlohmann::json;

/// Applies "a.b.c=value" onto the document. The value is parsed as JSON when possible and
/// kept as a string otherwise.
void apply_override(Json& doc, const std::string& assignment);

/// Strict parse: unknown keys, wrong types, and invalid values throw Errc::Config.
sim::ScenarioConfig parse_config(const Json& doc);

/// Reads the file, applies the overrides, parses and validates.
sim::ScenarioConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Full, resolved configuration; parse_config(to_json(cfg)) reproduces cfg.
Json to_json(const sim::ScenarioConfig& cfg);

Json constants_to_json(const sim::ScenarioConstants& c);
Json metrics_to_json(const sim::Metrics& m);

/// Wide CSV, one row per decimated sample.
void write_traces_csv(std::ostream& out, const sim::TraceSet& trace);

/// traces.csv, metrics.json, constants.json, config-echo.json. Throws Errc::Io when the
/// directory cannot be created or written.
void write_run_directory(const std::filesystem::path& dir, const sim::ScenarioConfig& cfg, const sim::RunResult& result);

} // namespace hierest::scenario
