#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedtune/harness.hpp"

// Serialization of harness artifacts. All writers are deterministic: object
// keys are sorted, doubles use shortest-round-trip formatting, files are
// written atomically (temp file + rename), and nothing time- or
// environment-dependent is ever embedded.
namespace fedtune::io {

using json = nlohmann::json;

// Shortest round-trip decimal form of a double (also used in CSV cells).
std::string format_double(double v);

json config_to_json(const hp::HpConfig& config);
hp::HpConfig config_from_json(const json& j);

json grid_point_to_json(const harness::GridPoint& gp);
harness::GridPoint grid_point_from_json(const json& j);

json record_to_json(const harness::TrialRecord& rec);
harness::TrialRecord record_from_json(const json& j);

// Trace line: one observation of one trial.
json observation_to_json(const tuners::Observation& obs, int trial);
std::pair<tuners::Observation, int> observation_from_json(const json& j);

// Pool files are JSONL: a header line, then one line per entry.
void save_pool(const harness::Pool& pool, const std::filesystem::path& path);
harness::Pool load_pool(const std::filesystem::path& path);

// Strict spec parsing: unknown keys anywhere are a SpecError.
harness::ExperimentSpec spec_from_json(const json& j);
harness::ExperimentSpec load_spec(const std::filesystem::path& path);

void write_records_jsonl(std::span<const harness::TrialRecord> records,
                         const std::filesystem::path& path);
std::vector<harness::TrialRecord> read_records_jsonl(const std::filesystem::path& path);

void write_traces_jsonl(const std::vector<harness::TrialTrace>& traces,
                        const std::filesystem::path& path);
std::vector<harness::TrialTrace> read_traces_jsonl(const std::filesystem::path& path);

// CSV columns: subsample,bias_b,iid_p,epsilon,count,median,q1,q3 (+ budget for
// curves). subsample prints "full" for 0; epsilon prints "off" for 0.
void write_summary_csv(std::span<const harness::SummaryRow> rows,
                       const std::filesystem::path& path);
void write_curves_csv(std::span<const harness::CurvePoint> points,
                      const std::filesystem::path& path);

void write_scatter_csv(const proxy::ScatterResult& scatter, const std::filesystem::path& path);
json proxy_record_to_json(const harness::ProxyTrialRecord& rec);

// Atomic text-file primitives shared by every writer.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace fedtune::io
