#include "fedtune/json_io.hpp"

#include <fstream>
#include <set>

#include "fedtune/errors.hpp"

namespace fedtune::io {
namespace {

// Strict object reader: every key must be consumed, unknown keys are errors.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw SpecError(where_ + ": expected a JSON object");
  }
  // The reader only borrows the object; binding a temporary would dangle.
  ObjectReader(json&& j, std::string where) = delete;

  bool has(const char* key) {
    if (j_.contains(key)) {
      seen_.insert(key);
      return true;
    }
    return false;
  }

  const json& at(const char* key) {
    if (!j_.contains(key)) throw SpecError(where_ + ": missing required key '" + key + "'");
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  T get(const char* key, T fallback) {
    if (!has(key)) return fallback;
    return value<T>(key);
  }

  template <class T>
  T value(const char* key) {
    try {
      return at(key).get<T>();
    } catch (const json::exception& e) {
      throw SpecError(where_ + ": bad value for '" + key + "': " + e.what());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw SpecError(where_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

noise::PrivacyMode parse_privacy_mode(const std::string& name) {
  if (name == "per_eval") return noise::PrivacyMode::per_eval;
  if (name == "oneshot_topk") return noise::PrivacyMode::oneshot_topk;
  throw SpecError("unknown privacy mode: " + name + " (expected per_eval or oneshot_topk)");
}

const char* privacy_mode_name(noise::PrivacyMode mode) {
  return mode == noise::PrivacyMode::oneshot_topk ? "oneshot_topk" : "per_eval";
}

fed::WeightingMode parse_weighting(const std::string& name) {
  if (name == "uniform") return fed::WeightingMode::uniform;
  if (name == "weighted") return fed::WeightingMode::weighted;
  throw SpecError("unknown weighting mode: " + name + " (expected uniform or weighted)");
}

json parse_line(const std::string& line, const std::filesystem::path& path) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) {
    throw SpecError("malformed JSON line in " + path.string());
  }
  return j;
}

}  // namespace

std::string format_double(double v) {
  if (std::isfinite(v)) return json(v).dump();
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

json config_to_json(const hp::HpConfig& config) {
  json j = json::object();
  for (const auto& [name, value] : config.values()) j[name] = value;
  return j;
}

hp::HpConfig config_from_json(const json& j) {
  if (!j.is_object()) throw SpecError("config: expected a JSON object");
  hp::HpConfig config;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_number()) {
      throw SpecError("config: dimension '" + it.key() + "' must be a number");
    }
    config.set(it.key(), it.value().get<double>());
  }
  return config;
}

json grid_point_to_json(const harness::GridPoint& gp) {
  return json{{"subsample", gp.subsample},
              {"bias_b", gp.bias_b},
              {"iid_p", gp.iid_p},
              {"epsilon", gp.epsilon},
              {"privacy_mode", privacy_mode_name(gp.privacy_mode)},
              {"bias_delta", gp.bias_delta}};
}

harness::GridPoint grid_point_from_json(const json& j) {
  ObjectReader r(j, "grid point");
  harness::GridPoint gp;
  gp.subsample = r.value<int>("subsample");
  gp.bias_b = r.value<double>("bias_b");
  gp.iid_p = r.value<double>("iid_p");
  gp.epsilon = r.value<double>("epsilon");
  gp.privacy_mode = parse_privacy_mode(r.value<std::string>("privacy_mode"));
  gp.bias_delta = r.value<double>("bias_delta");
  r.finish();
  return gp;
}

json record_to_json(const harness::TrialRecord& rec) {
  return json{{"grid", grid_point_to_json(rec.grid)},
              {"trial", rec.trial},
              {"trial_seed", rec.trial_seed},
              {"chosen_config_id", rec.chosen_config_id},
              {"chosen_config", config_to_json(rec.chosen_config)},
              {"chosen_rounds", rec.chosen_rounds},
              {"chosen_score", rec.chosen_score},
              {"final_error", rec.final_error},
              {"rounds_consumed", rec.rounds_consumed},
              {"epsilon_consumed", rec.epsilon_consumed}};
}

harness::TrialRecord record_from_json(const json& j) {
  ObjectReader r(j, "trial record");
  harness::TrialRecord rec;
  rec.grid = grid_point_from_json(r.at("grid"));
  rec.trial = r.value<int>("trial");
  rec.trial_seed = r.value<std::uint64_t>("trial_seed");
  rec.chosen_config_id = r.value<std::uint64_t>("chosen_config_id");
  rec.chosen_config = config_from_json(r.at("chosen_config"));
  rec.chosen_rounds = r.value<int>("chosen_rounds");
  rec.chosen_score = r.value<double>("chosen_score");
  rec.final_error = r.value<double>("final_error");
  rec.rounds_consumed = r.value<int>("rounds_consumed");
  rec.epsilon_consumed = r.value<double>("epsilon_consumed");
  r.finish();
  return rec;
}

json observation_to_json(const tuners::Observation& obs, int trial) {
  // trace lines skip the config body: curves only need ids and scores
  return json{{"trial", trial},
              {"config_id", obs.config_id},
              {"rounds", obs.rounds},
              {"score", obs.score},
              {"budget_after", obs.budget_after},
              {"true_error", obs.true_error}};
}

std::pair<tuners::Observation, int> observation_from_json(const json& j) {
  ObjectReader r(j, "trace line");
  tuners::Observation obs;
  const int trial = r.value<int>("trial");
  obs.config_id = r.value<std::uint64_t>("config_id");
  obs.rounds = r.value<int>("rounds");
  obs.score = r.value<double>("score");
  obs.budget_after = r.value<int>("budget_after");
  obs.true_error = r.value<double>("true_error");
  r.finish();
  return {obs, trial};
}

void save_pool(const harness::Pool& pool, const std::filesystem::path& path) {
  std::string out;
  json header{{"checkpoints", pool.checkpoints},
              {"val_weights", pool.val_weights},
              {"mode", pool.mode == fed::WeightingMode::weighted ? "weighted" : "uniform"},
              {"iid_p", pool.iid_p},
              {"seed", pool.seed}};
  out += header.dump();
  out += '\n';
  for (std::size_t i = 0; i < pool.entries.size(); ++i) {
    const auto& entry = pool.entries[i];
    json errors = json::object();
    for (const auto& [rounds, errs] : entry.errors) {
      errors[std::to_string(rounds)] = errs;
    }
    json line{{"id", i}, {"config", config_to_json(entry.config)}, {"errors", errors}};
    out += line.dump();
    out += '\n';
  }
  write_text_atomic(path, out);
}

harness::Pool load_pool(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw SpecError("pool file is empty: " + path.string());
  harness::Pool pool;
  {
    const json header = parse_line(lines.front(), path);
    ObjectReader r(header, "pool header");
    pool.checkpoints = r.value<std::vector<int>>("checkpoints");
    pool.val_weights = r.value<std::vector<double>>("val_weights");
    pool.mode = parse_weighting(r.value<std::string>("mode"));
    pool.iid_p = r.value<double>("iid_p");
    pool.seed = r.value<std::uint64_t>("seed");
    r.finish();
  }
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const json line = parse_line(lines[n], path);
    ObjectReader r(line, "pool entry");
    harness::PoolEntry entry;
    const auto id = r.value<std::size_t>("id");
    if (id != n - 1) throw SpecError("pool entries out of order in " + path.string());
    entry.config = config_from_json(r.at("config"));
    const json& errors = r.at("errors");
    if (!errors.is_object()) throw SpecError("pool entry: 'errors' must be an object");
    for (auto it = errors.begin(); it != errors.end(); ++it) {
      entry.errors[std::stoi(it.key())] = it.value().get<std::vector<double>>();
    }
    r.finish();
    pool.entries.push_back(std::move(entry));
  }
  return pool;
}

harness::ExperimentSpec spec_from_json(const json& j) {
  ObjectReader r(j, "experiment spec");
  harness::ExperimentSpec spec;
  spec.seed = r.get<std::uint64_t>("seed", spec.seed);
  spec.trials = r.get<int>("trials", spec.trials);
  spec.k = r.get<int>("k", spec.k);
  spec.rounds = r.get<int>("rounds", spec.rounds);
  spec.pool_size = r.get<int>("pool_size", spec.pool_size);
  if (r.has("tuner")) spec.tuner = harness::parse_tuner(r.value<std::string>("tuner"));
  if (r.has("backend")) {
    spec.workload.backend = harness::parse_backend(r.value<std::string>("backend"));
  }
  if (r.has("space")) {
    ObjectReader s(r.at("space"), "space");
    spec.space.nested_width = s.get<int>("nested_width", 0);
    s.finish();
  }
  if (r.has("population")) {
    ObjectReader p(r.at("population"), "population");
    auto& pop = spec.workload.population;
    pop.n_train = p.get<int>("n_train", pop.n_train);
    pop.n_val = p.get<int>("n_val", pop.n_val);
    pop.classes = p.get<int>("classes", pop.classes);
    pop.dim = p.get<int>("dim", pop.dim);
    pop.samples_per_client = p.get<int>("samples_per_client", pop.samples_per_client);
    pop.samples_spread = p.get<int>("samples_spread", pop.samples_spread);
    pop.alpha = p.get<double>("alpha", pop.alpha);
    pop.feature_sigma = p.get<double>("feature_sigma", pop.feature_sigma);
    if (p.has("weighting")) pop.mode = parse_weighting(p.value<std::string>("weighting"));
    p.finish();
  }
  if (r.has("surrogate")) {
    ObjectReader s(r.at("surrogate"), "surrogate");
    auto& sur = spec.workload.surrogate;
    sur.n_val = s.get<int>("n_val", sur.n_val);
    sur.curvature_scale = s.get<double>("curvature_scale", sur.curvature_scale);
    sur.choice_scale = s.get<double>("choice_scale", sur.choice_scale);
    sur.offset_sigma = s.get<double>("offset_sigma", sur.offset_sigma);
    sur.n_outliers = s.get<int>("n_outliers", sur.n_outliers);
    sur.outlier_offset = s.get<double>("outlier_offset", sur.outlier_offset);
    sur.base = s.get<double>("base", sur.base);
    sur.floor = s.get<double>("floor", sur.floor);
    sur.halflife = s.get<double>("halflife", sur.halflife);
    s.finish();
  }
  if (r.has("grid")) {
    ObjectReader g(r.at("grid"), "grid");
    auto& grid = spec.grid;
    grid.subsample = g.get<std::vector<int>>("subsample", grid.subsample);
    grid.bias_b = g.get<std::vector<double>>("bias_b", grid.bias_b);
    grid.iid_p = g.get<std::vector<double>>("iid_p", grid.iid_p);
    grid.epsilon = g.get<std::vector<double>>("epsilon", grid.epsilon);
    if (g.has("privacy_mode")) {
      grid.privacy_mode = parse_privacy_mode(g.value<std::string>("privacy_mode"));
    }
    grid.bias_delta = g.get<double>("bias_delta", grid.bias_delta);
    g.finish();
  }
  if (r.has("hyperband")) {
    ObjectReader h(r.at("hyperband"), "hyperband");
    auto& hb = spec.hyperband;
    hb.max_resource = h.get<int>("max_resource", hb.max_resource);
    hb.eta = h.get<int>("eta", hb.eta);
    hb.s_max = h.get<int>("s_max", hb.s_max);
    h.finish();
  }
  if (r.has("tpe")) {
    ObjectReader t(r.at("tpe"), "tpe");
    auto& tpe = spec.tpe;
    tpe.gamma = t.get<double>("gamma", tpe.gamma);
    tpe.n_candidates = t.get<int>("n_candidates", tpe.n_candidates);
    tpe.n_min = t.get<int>("n_min", tpe.n_min);
    tpe.bandwidth_floor = t.get<double>("bandwidth_floor", tpe.bandwidth_floor);
    t.finish();
  }
  if (r.has("proxy")) {
    ObjectReader p(r.at("proxy"), "proxy");
    auto& px = spec.proxy;
    px.knobs.prototype_angle_deg = p.get<double>("angle", px.knobs.prototype_angle_deg);
    if (p.has("alpha") && !p.at("alpha").is_null()) {
      px.knobs.alpha = p.at("alpha").get<double>();
    }
    if (p.has("classes") && !p.at("classes").is_null()) {
      px.knobs.classes = p.at("classes").get<int>();
    }
    px.knobs.resample = p.get<bool>("resample", px.knobs.resample);
    px.scatter_configs = p.get<int>("scatter_configs", px.scatter_configs);
    p.finish();
  }
  r.finish();
  spec.validate();
  return spec;
}

harness::ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open spec file: " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SpecError("spec file is not valid JSON: " + path.string());
  return spec_from_json(j);
}

void write_records_jsonl(std::span<const harness::TrialRecord> records,
                         const std::filesystem::path& path) {
  std::string out;
  for (const auto& rec : records) {
    out += record_to_json(rec).dump();
    out += '\n';
  }
  write_text_atomic(path, out);
}

std::vector<harness::TrialRecord> read_records_jsonl(const std::filesystem::path& path) {
  std::vector<harness::TrialRecord> records;
  for (const auto& line : read_lines(path)) {
    records.push_back(record_from_json(parse_line(line, path)));
  }
  return records;
}

void write_traces_jsonl(const std::vector<harness::TrialTrace>& traces,
                        const std::filesystem::path& path) {
  std::string out;
  for (std::size_t t = 0; t < traces.size(); ++t) {
    for (const auto& obs : traces[t]) {
      out += observation_to_json(obs, static_cast<int>(t)).dump();
      out += '\n';
    }
  }
  write_text_atomic(path, out);
}

std::vector<harness::TrialTrace> read_traces_jsonl(const std::filesystem::path& path) {
  std::vector<harness::TrialTrace> traces;
  for (const auto& line : read_lines(path)) {
    auto [obs, trial] = observation_from_json(parse_line(line, path));
    if (trial < 0) throw SpecError("trace line with negative trial in " + path.string());
    if (static_cast<std::size_t>(trial) >= traces.size()) {
      traces.resize(static_cast<std::size_t>(trial) + 1);
    }
    traces[static_cast<std::size_t>(trial)].push_back(std::move(obs));
  }
  return traces;
}

namespace {

std::string grid_cells(const harness::GridPoint& gp) {
  std::string out;
  out += gp.subsample == 0 ? "full" : std::to_string(gp.subsample);
  out += ',';
  out += format_double(gp.bias_b);
  out += ',';
  out += format_double(gp.iid_p);
  out += ',';
  out += gp.epsilon == 0.0 ? "off" : format_double(gp.epsilon);
  return out;
}

}  // namespace

void write_summary_csv(std::span<const harness::SummaryRow> rows,
                       const std::filesystem::path& path) {
  std::string out = "subsample,bias_b,iid_p,epsilon,count,median,q1,q3\n";
  for (const auto& row : rows) {
    out += grid_cells(row.grid);
    out += ',' + std::to_string(row.count);
    out += ',' + format_double(row.median);
    out += ',' + format_double(row.q1);
    out += ',' + format_double(row.q3);
    out += '\n';
  }
  write_text_atomic(path, out);
}

void write_curves_csv(std::span<const harness::CurvePoint> points,
                      const std::filesystem::path& path) {
  std::string out = "subsample,bias_b,iid_p,epsilon,budget,count,median,q1,q3\n";
  for (const auto& pt : points) {
    out += grid_cells(pt.grid);
    out += ',' + std::to_string(pt.budget);
    out += ',' + std::to_string(pt.count);
    out += ',' + format_double(pt.median);
    out += ',' + format_double(pt.q1);
    out += ',' + format_double(pt.q3);
    out += '\n';
  }
  write_text_atomic(path, out);
}

void write_scatter_csv(const proxy::ScatterResult& scatter, const std::filesystem::path& path) {
  std::string out = "config_id,error_target,error_proxy\n";
  for (const auto& pt : scatter.points) {
    out += std::to_string(pt.config_id);
    out += ',' + format_double(pt.error_a);
    out += ',' + format_double(pt.error_b);
    out += '\n';
  }
  write_text_atomic(path, out);
}

json proxy_record_to_json(const harness::ProxyTrialRecord& rec) {
  return json{{"trial", rec.trial},
              {"trial_seed", rec.trial_seed},
              {"chosen_config_id", rec.chosen_config_id},
              {"chosen_config", config_to_json(rec.chosen_config)},
              {"proxy_score", rec.proxy_score},
              {"target_error", rec.target_error},
              {"epsilon_consumed", rec.epsilon_consumed}};
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + tmp.string() + " -> " + path.string());
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace fedtune::io
