#include "egfr/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "egfr/csv.hpp"
#include "egfr/digest.hpp"
#include "egfr/numfmt.hpp"
#include "egfr/prompts.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace egfr {

namespace fs = std::filesystem;
using json = nlohmann::json;

const std::vector<std::string> kStageNames = {
    "ingest", "windows", "render", "query", "extract", "ensemble", "baselines",
    "report"};

namespace {

const std::map<std::string, std::vector<std::string>>& stage_deps() {
  static const std::map<std::string, std::vector<std::string>> deps = {
      {"ingest", {}},
      {"windows", {"ingest"}},
      {"render", {"windows"}},
      {"query", {"render"}},
      {"extract", {"query"}},
      {"ensemble", {"extract"}},
      {"baselines", {"windows"}},
      {"report", {"ensemble", "baselines"}},
  };
  return deps;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& content) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write: " + path);
  f << content;
}

json synthetic_to_json(const SyntheticSpec& s) {
  const char* family = s.family == TrajectoryFamily::linear      ? "linear"
                       : s.family == TrajectoryFamily::piecewise ? "piecewise"
                                                                 : "noisy";
  return {{"n_patients", s.n_patients},
          {"mean_visits", s.mean_visits},
          {"family", family},
          {"baseline_min", s.baseline_min},
          {"baseline_max", s.baseline_max},
          {"slope_per_90d", s.slope_per_90d},
          {"noise_sigma", s.noise_sigma},
          {"mean_gap_days", s.mean_gap_days},
          {"gap_jitter_days", s.gap_jitter_days},
          {"missing_lab_rate", s.missing_lab_rate}};
}

json backend_to_json(const BackendConfig& b) {
  json j = {{"id", b.backend_id},
            {"kind", b.kind == BackendKind::mock ? "mock" : "remote"},
            {"timeout_seconds", b.timeout_seconds},
            {"max_retries", b.max_retries},
            {"rate_per_minute", b.rate_per_minute}};
  if (b.kind == BackendKind::mock) {
    const char* policy = b.mock.kind == MockPolicyKind::persistence ? "persistence"
                         : b.mock.kind == MockPolicyKind::linear    ? "linear"
                         : b.mock.kind == MockPolicyKind::noisy     ? "noisy"
                                                                    : "malformed";
    j["policy"] = policy;
    j["sigma"] = b.mock.sigma;
    j["seed"] = b.mock.seed;
  } else {
    j["endpoint"] = b.endpoint;
    j["model"] = b.model;
    j["credential_env"] = b.credential_env;
    if (b.temperature) j["temperature"] = *b.temperature;
  }
  return j;
}

json chart_to_json(const ChartStyle& c) {
  return {{"width", c.width},
          {"height", c.height},
          {"margin_left", c.margin_left},
          {"margin_right", c.margin_right},
          {"margin_top", c.margin_top},
          {"margin_bottom", c.margin_bottom},
          {"marker_size", c.marker_size},
          {"max_x_labels", c.max_x_labels}};
}

// Semantic inputs only: output_dir and threads change where/how work runs,
// never what it produces, so they stay out of the digest.
json config_to_json(const RunConfig& c) {
  json j;
  j["w0"] = c.w0;
  j["train_fraction"] = c.train_fraction;
  j["repeats"] = c.repeats;
  j["templates"] = c.templates;
  j["seeds"] = {{"split", c.seeds.split},
                {"synthetic", c.seeds.synthetic},
                {"mocks", c.seeds.mocks}};
  if (c.synthetic)
    j["cohort"] = {{"synthetic", synthetic_to_json(*c.synthetic)}};
  else
    j["cohort"] = {{"visits_file", c.visits_file}, {"profiles_file", c.profiles_file}};
  j["chart"] = chart_to_json(c.chart);
  json jb = json::array();
  for (const auto& b : c.backends) jb.push_back(backend_to_json(b));
  j["backends"] = std::move(jb);
  j["extraction"] = {{"min", c.extraction.min},
                     {"max", c.extraction.max},
                     {"secondary_backend", c.secondary_backend}};
  j["ensemble_weights"] = c.ensemble_weights;
  j["baselines"] = {{"enabled", c.baselines_enabled},
                    {"rf",
                     {{"n_trees", c.rf.n_trees},
                      {"max_depth", c.rf.max_depth},
                      {"min_leaf", c.rf.min_leaf},
                      {"bootstrap", c.rf.bootstrap},
                      {"max_features", c.rf.max_features},
                      {"seed", c.rf.seed}}},
                    {"cnn",
                     {{"channels", c.cnn.channels},
                      {"kernel", c.cnn.kernel},
                      {"max_seq_len", c.cnn.max_seq_len},
                      {"learning_rate", c.cnn.optimizer.learning_rate},
                      {"epochs", c.cnn.optimizer.epochs},
                      {"batch_size", c.cnn.optimizer.batch_size},
                      {"seed", c.cnn.seed}}}};
  j["report"] = {{"text_table", c.report.text_table},
                 {"significance", c.report.significance}};
  j["template_dir"] = c.template_dir;
  return j;
}

int line_of_offset(const std::string& text, size_t offset) {
  int line = 1;
  for (size_t i = 0; i < offset && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ":" + std::to_string(line_of_offset(text, e.byte)) +
                      ": " + e.what());
  }

  RunConfig c;
  try {
    c.output_dir = j.value("output_dir", c.output_dir);
    c.w0 = j.value("w0", c.w0);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.repeats = j.value("repeats", c.repeats);
    if (j.contains("templates")) c.templates = j["templates"].get<std::vector<int>>();

    if (!j.contains("seeds"))
      throw ConfigError(origin + ": 'seeds' block is required (no implicit randomness)");
    c.seeds.split = j["seeds"].value("split", uint64_t(0));
    c.seeds.synthetic = j["seeds"].value("synthetic", uint64_t(0));
    c.seeds.mocks = j["seeds"].value("mocks", uint64_t(0));

    if (!j.contains("cohort"))
      throw ConfigError(origin + ": 'cohort' block is required");
    const json& jc = j["cohort"];
    if (jc.contains("synthetic")) {
      const json& js = jc["synthetic"];
      SyntheticSpec s;
      s.n_patients = js.value("n_patients", s.n_patients);
      s.mean_visits = js.value("mean_visits", s.mean_visits);
      std::string family = js.value("family", "linear");
      if (family == "linear")
        s.family = TrajectoryFamily::linear;
      else if (family == "piecewise")
        s.family = TrajectoryFamily::piecewise;
      else if (family == "noisy")
        s.family = TrajectoryFamily::noisy;
      else
        throw ConfigError(origin + ": unknown trajectory family '" + family + "'");
      s.baseline_min = js.value("baseline_min", s.baseline_min);
      s.baseline_max = js.value("baseline_max", s.baseline_max);
      s.slope_per_90d = js.value("slope_per_90d", s.slope_per_90d);
      s.noise_sigma = js.value("noise_sigma", s.noise_sigma);
      s.mean_gap_days = js.value("mean_gap_days", s.mean_gap_days);
      s.gap_jitter_days = js.value("gap_jitter_days", s.gap_jitter_days);
      s.missing_lab_rate = js.value("missing_lab_rate", s.missing_lab_rate);
      c.synthetic = s;
    } else {
      c.visits_file = jc.value("visits_file", "");
      c.profiles_file = jc.value("profiles_file", "");
      if (c.visits_file.empty() || c.profiles_file.empty())
        throw ConfigError(origin +
                          ": cohort needs either 'synthetic' or both "
                          "'visits_file' and 'profiles_file'");
    }

    if (j.contains("chart")) {
      const json& cj = j["chart"];
      c.chart.width = cj.value("width", c.chart.width);
      c.chart.height = cj.value("height", c.chart.height);
      c.chart.margin_left = cj.value("margin_left", c.chart.margin_left);
      c.chart.margin_right = cj.value("margin_right", c.chart.margin_right);
      c.chart.margin_top = cj.value("margin_top", c.chart.margin_top);
      c.chart.margin_bottom = cj.value("margin_bottom", c.chart.margin_bottom);
      c.chart.marker_size = cj.value("marker_size", c.chart.marker_size);
      c.chart.max_x_labels = cj.value("max_x_labels", c.chart.max_x_labels);
    }

    if (!j.contains("backends") || j["backends"].empty())
      throw ConfigError(origin + ": at least one backend is required");
    for (const json& bj : j["backends"]) {
      BackendConfig b;
      b.backend_id = bj.value("id", "");
      if (b.backend_id.empty())
        throw ConfigError(origin + ": backend without an 'id'");
      std::string kind = bj.value("kind", "mock");
      b.timeout_seconds = bj.value("timeout_seconds", b.timeout_seconds);
      b.max_retries = bj.value("max_retries", b.max_retries);
      b.rate_per_minute = bj.value("rate_per_minute", b.rate_per_minute);
      if (kind == "mock") {
        b.kind = BackendKind::mock;
        std::string policy = bj.value("policy", "persistence");
        auto pk = parse_mock_policy(policy);
        if (!pk)
          throw ConfigError(origin + ": backend '" + b.backend_id +
                            "': unknown mock policy '" + policy + "'");
        b.mock.kind = *pk;
        b.mock.sigma = bj.value("sigma", b.mock.sigma);
        b.mock.seed = bj.value("seed",
                               c.seeds.mocks ^ std::hash<std::string>{}(b.backend_id));
      } else if (kind == "remote") {
        b.kind = BackendKind::remote;
        b.endpoint = bj.value("endpoint", "");
        b.model = bj.value("model", "");
        b.credential_env = bj.value("credential_env", "");
        if (bj.contains("temperature")) b.temperature = bj["temperature"].get<double>();
        if (bj.contains("api_key"))
          throw ConfigError(origin + ": backend '" + b.backend_id +
                            "': secrets must not be stored inline; use "
                            "'credential_env'");
        if (b.endpoint.empty())
          throw ConfigError(origin + ": remote backend '" + b.backend_id +
                            "' needs an 'endpoint'");
      } else {
        throw ConfigError(origin + ": backend '" + b.backend_id +
                          "': unknown kind '" + kind + "'");
      }
      c.backends.push_back(std::move(b));
    }

    if (j.contains("extraction")) {
      const json& ej = j["extraction"];
      c.extraction.min = ej.value("min", c.extraction.min);
      c.extraction.max = ej.value("max", c.extraction.max);
      c.secondary_backend = ej.value("secondary_backend", "");
    }
    if (j.contains("ensemble_weights"))
      c.ensemble_weights =
          j["ensemble_weights"].get<std::map<std::string, double>>();

    if (j.contains("baselines")) {
      const json& blj = j["baselines"];
      c.baselines_enabled = blj.value("enabled", true);
      if (blj.contains("rf")) {
        const json& rj = blj["rf"];
        c.rf.n_trees = rj.value("n_trees", c.rf.n_trees);
        c.rf.max_depth = rj.value("max_depth", c.rf.max_depth);
        c.rf.min_leaf = rj.value("min_leaf", c.rf.min_leaf);
        c.rf.bootstrap = rj.value("bootstrap", c.rf.bootstrap);
        c.rf.max_features = rj.value("max_features", c.rf.max_features);
        c.rf.seed = rj.value("seed", c.rf.seed);
      }
      if (blj.contains("cnn")) {
        const json& nj = blj["cnn"];
        c.cnn.channels = nj.value("channels", c.cnn.channels);
        c.cnn.kernel = nj.value("kernel", c.cnn.kernel);
        c.cnn.max_seq_len = nj.value("max_seq_len", c.cnn.max_seq_len);
        c.cnn.optimizer.learning_rate =
            nj.value("learning_rate", c.cnn.optimizer.learning_rate);
        c.cnn.optimizer.epochs = nj.value("epochs", c.cnn.optimizer.epochs);
        c.cnn.optimizer.batch_size = nj.value("batch_size", c.cnn.optimizer.batch_size);
        c.cnn.seed = nj.value("seed", c.cnn.seed);
      }
    }

    if (j.contains("report")) {
      c.report.text_table = j["report"].value("text_table", true);
      c.report.significance = j["report"].value("significance", true);
    }
    c.threads = j.value("threads", 0);
    c.template_dir = j.value("template_dir", "");
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }

  validate_config(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  return parse_config(slurp(path), path);
}

void validate_config(const RunConfig& c) {
  if (c.w0 < 2) throw ConfigError("w0 must be >= 2");
  if (!(c.train_fraction > 0 && c.train_fraction < 1))
    throw ConfigError("train_fraction must be in (0, 1)");
  if (c.repeats < 1) throw ConfigError("repeats must be >= 1");
  if (c.templates.empty()) throw ConfigError("at least one template must be enabled");
  for (int t : c.templates)
    if (t < 1 || t > 4)
      throw ConfigError("template ids must be in 1..4 (got " + std::to_string(t) + ")");
  if (c.backends.empty()) throw ConfigError("at least one backend is required");
  if (c.extraction.min >= c.extraction.max)
    throw ConfigError("extraction range must satisfy min < max");
  if (!c.secondary_backend.empty()) {
    bool found = false;
    for (const auto& b : c.backends)
      if (b.backend_id == c.secondary_backend) found = true;
    if (!found)
      throw ConfigError("secondary_backend '" + c.secondary_backend +
                        "' is not a configured backend");
  }
  if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

std::string config_digest(const RunConfig& c) {
  return sha256_hex(config_to_json(c).dump());
}

Pipeline::Pipeline(RunConfig cfg, bool offline, Clock& clock, Transport transport)
    : cfg_(std::move(cfg)), offline_(offline), clock_(clock),
      transport_(std::move(transport)) {
  validate_config(cfg_);
}

std::string Pipeline::artifact_path(const std::string& name) const {
  return (fs::path(cfg_.output_dir) / name).string();
}

std::string Pipeline::stage_input_digest(const std::string& name) const {
  json j;
  j["stage"] = name;
  if (name == "ingest") {
    if (cfg_.synthetic) {
      j["synthetic"] = synthetic_to_json(*cfg_.synthetic);
      j["seed"] = cfg_.seeds.synthetic;
    } else {
      j["visits_file"] = cfg_.visits_file;
      j["profiles_file"] = cfg_.profiles_file;
      j["visits_digest"] = sha256_hex(slurp(cfg_.visits_file));
      j["profiles_digest"] = sha256_hex(slurp(cfg_.profiles_file));
    }
  } else if (name == "windows") {
    j["upstream"] = read_stage_digest("ingest");
    j["w0"] = cfg_.w0;
    j["train_fraction"] = cfg_.train_fraction;
    j["split_seed"] = cfg_.seeds.split;
  } else if (name == "render") {
    j["upstream"] = read_stage_digest("windows");
    j["chart"] = chart_to_json(cfg_.chart);
  } else if (name == "query") {
    j["upstream"] = read_stage_digest("render");
    json jb = json::array();
    for (const auto& b : cfg_.backends) jb.push_back(backend_to_json(b));
    j["backends"] = std::move(jb);
    j["repeats"] = cfg_.repeats;
    j["templates"] = cfg_.templates;
    j["template_dir"] = cfg_.template_dir;
  } else if (name == "extract") {
    j["upstream"] = read_stage_digest("query");
    j["range"] = {cfg_.extraction.min, cfg_.extraction.max};
    j["secondary"] = cfg_.secondary_backend;
  } else if (name == "ensemble") {
    j["upstream"] = read_stage_digest("extract");
    j["weights"] = cfg_.ensemble_weights;
  } else if (name == "baselines") {
    j["upstream"] = read_stage_digest("windows");
    j["enabled"] = cfg_.baselines_enabled;
    j["rf"] = {cfg_.rf.n_trees, cfg_.rf.max_depth, cfg_.rf.min_leaf,
               int(cfg_.rf.bootstrap), cfg_.rf.max_features, cfg_.rf.seed};
    j["cnn"] = {cfg_.cnn.channels, cfg_.cnn.kernel, cfg_.cnn.max_seq_len,
                cfg_.cnn.optimizer.learning_rate, cfg_.cnn.optimizer.epochs,
                cfg_.cnn.optimizer.batch_size, cfg_.cnn.seed};
  } else if (name == "report") {
    j["upstream_ensemble"] = read_stage_digest("ensemble");
    j["upstream_baselines"] = read_stage_digest("baselines");
    j["options"] = {cfg_.report.text_table, cfg_.report.significance};
  } else {
    throw StageError("unknown stage '" + name + "'");
  }
  return sha256_hex(j.dump());
}

std::string Pipeline::read_stage_digest(const std::string& name) const {
  fs::path marker = fs::path(cfg_.output_dir) / ("stage." + name + ".json");
  if (!fs::exists(marker)) return "";
  json j = json::parse(slurp(marker.string()));
  return j.value("input_digest", "");
}

bool Pipeline::stage_current(const std::string& name, const std::string& digest) const {
  fs::path marker = fs::path(cfg_.output_dir) / ("stage." + name + ".json");
  if (!fs::exists(marker)) return false;
  json j = json::parse(slurp(marker.string()));
  if (j.value("input_digest", "") != digest) return false;
  for (const auto& out : j.value("outputs", std::vector<std::string>{}))
    if (!fs::exists(fs::path(cfg_.output_dir) / out)) return false;
  return true;
}

void Pipeline::write_stage_marker(const std::string& name, const std::string& digest,
                                  const std::vector<std::string>& outputs) const {
  json j = {{"input_digest", digest},
            {"outputs", outputs},
            {"config_digest", config_digest(cfg_)}};
  spit(artifact_path("stage." + name + ".json"), j.dump(2) + "\n");
}

bool Pipeline::run_stage(const std::string& name) {
  if (std::find(kStageNames.begin(), kStageNames.end(), name) == kStageNames.end())
    throw StageError("unknown stage '" + name + "'");
  for (const auto& dep : stage_deps().at(name))
    if (read_stage_digest(dep).empty())
      throw StageError("stage '" + name + "' requires '" + dep +
                       "' to have run first");

  std::string digest = stage_input_digest(name);
  if (stage_current(name, digest)) return false;

  if (name == "ingest") stage_ingest();
  else if (name == "windows") stage_windows();
  else if (name == "render") stage_render();
  else if (name == "query") stage_query();
  else if (name == "extract") stage_extract();
  else if (name == "ensemble") stage_ensemble();
  else if (name == "baselines") stage_baselines();
  else if (name == "report") stage_report();
  return true;
}

void Pipeline::run_all() {
  for (const auto& name : kStageNames) run_stage(name);
}

Cohort Pipeline::load_cohort() const {
  std::ifstream v(artifact_path("cohort_visits.csv"));
  std::ifstream p(artifact_path("cohort_profiles.csv"));
  if (!v || !p) throw StageError("cohort artifacts missing; run the ingest stage");
  return ingest_cohort(v, p);
}

std::vector<PredictionWindow> Pipeline::load_windows(const Cohort& cohort) const {
  return generate_windows(cohort, cfg_.w0);
}

PatientSplit Pipeline::load_split() const {
  json j = json::parse(slurp(artifact_path("split.json")));
  PatientSplit s;
  s.train = j.at("train").get<std::vector<std::string>>();
  s.validation = j.at("validation").get<std::vector<std::string>>();
  return s;
}

void Pipeline::stage_ingest() {
  Cohort raw;
  if (cfg_.synthetic) {
    raw = generate_synthetic_cohort(*cfg_.synthetic, cfg_.seeds.synthetic);
  } else {
    std::ifstream v(cfg_.visits_file);
    if (!v) throw IoError("cannot open visits file: " + cfg_.visits_file);
    std::ifstream p(cfg_.profiles_file);
    if (!p) throw IoError("cannot open profiles file: " + cfg_.profiles_file);
    raw = ingest_cohort(v, p);
  }
  PreprocessResult pre = preprocess(raw);
  spit(artifact_path("cohort_visits.csv"), cohort_to_csv_visits(pre.cohort));
  spit(artifact_path("cohort_profiles.csv"), cohort_to_csv_profiles(pre.cohort));
  spit(artifact_path("audit.csv"), audit_csv(pre.audit));
  write_stage_marker("ingest", stage_input_digest("ingest"),
                     {"cohort_visits.csv", "cohort_profiles.csv", "audit.csv"});
}

void Pipeline::stage_windows() {
  Cohort cohort = load_cohort();
  auto windows = load_windows(cohort);
  PatientSplit split = split_patients(cohort, cfg_.train_fraction, cfg_.seeds.split);

  json jw = json::array();
  for (const auto& w : windows)
    jw.push_back({{"id", w.id()},
                  {"patient_id", w.patient_id},
                  {"window_index", w.window_index},
                  {"observed_len", w.observed.size()},
                  {"target_date", format_iso_date(w.target.date)},
                  {"target_egfr", w.target.egfr},
                  {"next_day_diff", w.next_day_diff}});
  spit(artifact_path("windows.json"), jw.dump(2) + "\n");
  json js = {{"train", split.train}, {"validation", split.validation}};
  spit(artifact_path("split.json"), js.dump(2) + "\n");
  write_stage_marker("windows", stage_input_digest("windows"),
                     {"windows.json", "split.json"});
}

void Pipeline::stage_render() {
  Cohort cohort = load_cohort();
  auto windows = load_windows(cohort);

  std::vector<ChartImage> charts(windows.size());
  const int n = int(windows.size());
#ifdef _OPENMP
  if (cfg_.threads != 1) {
    int nt = cfg_.threads > 1 ? cfg_.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
    for (int i = 0; i < n; ++i) charts[i] = render_trajectory(windows[i], cfg_.chart);
  } else
#endif
  {
    for (int i = 0; i < n; ++i) charts[i] = render_trajectory(windows[i], cfg_.chart);
  }

  fs::create_directories(fs::path(cfg_.output_dir) / "charts");
  json idx;
  std::vector<std::string> outputs = {"charts_index.json"};
  for (int i = 0; i < n; ++i) {
    std::string rel = "charts/" + windows[i].id() + ".png";
    write_png(charts[i].image, artifact_path(rel));
    idx[windows[i].id()] = charts[i].digest;
    outputs.push_back(rel);
  }
  spit(artifact_path("charts_index.json"), idx.dump(2) + "\n");
  write_stage_marker("render", stage_input_digest("render"), outputs);
}

void Pipeline::stage_query() {
  Cohort cohort = load_cohort();
  auto windows = load_windows(cohort);
  json charts_idx = json::parse(slurp(artifact_path("charts_index.json")));

  std::vector<PromptTemplate> templates;
  for (int tid : cfg_.templates) {
    if (!cfg_.template_dir.empty()) {
      const auto& def = default_templates().at(tid - 1);
      templates.push_back(load_template_file(
          (fs::path(cfg_.template_dir) / ("template_" + std::to_string(tid) + ".txt"))
              .string(),
          tid, def.kind));
    } else {
      templates.push_back(default_templates().at(tid - 1));
    }
  }

  ResponseCache cache(artifact_path("cache"));
  bool any_remote = false;
  for (const auto& b : cfg_.backends)
    if (b.kind == BackendKind::remote) any_remote = true;

  std::vector<std::unique_ptr<Backend>> backends;
  for (const auto& b : cfg_.backends)
    backends.push_back(std::make_unique<Backend>(b, &cache, clock_, transport_));

  json index = json::array();
  for (const auto& w : windows) {
    const PatientProfile& profile = cohort.profiles.at(w.patient_id);
    std::string data_text = compose_data_text(w, profile);
    std::string chart_digest = charts_idx.at(w.id());

    ChartImage chart;
    chart.window_id = w.id();
    chart.digest = chart_digest;
    if (any_remote)
      chart.image = read_png(artifact_path("charts/" + w.id() + ".png"));

    for (const auto& tmpl : templates) {
      PromptInstance prompt = render_prompt(tmpl, w, data_text, chart_digest);
      for (int attempt = 1; attempt <= cfg_.repeats; ++attempt) {
        for (auto& backend : backends) {
          ModelResponse r = backend->query(prompt, chart, attempt, &w, offline_);
          index.push_back(
              {{"window_id", w.id()},
               {"template_id", tmpl.template_id},
               {"backend_id", backend->config().backend_id},
               {"attempt_index", attempt},
               {"key", ResponseCache::make_key(backend->config().backend_id,
                                               backend->config().model,
                                               r.prompt_digest, r.image_digest,
                                               attempt)}});
        }
      }
    }
  }
  for (const auto& b : backends) remote_calls_ += b->remote_calls();
  spit(artifact_path("responses_index.json"), index.dump(2) + "\n");
  write_stage_marker("query", stage_input_digest("query"), {"responses_index.json"});
}

void Pipeline::stage_extract() {
  Cohort cohort = load_cohort();
  auto windows = load_windows(cohort);
  std::map<std::string, const PredictionWindow*> by_id;
  for (const auto& w : windows) by_id[w.id()] = &w;

  json index = json::parse(slurp(artifact_path("responses_index.json")));
  ResponseCache cache(artifact_path("cache"));

  // Secondary pass setup: route through the configured backend, if any.
  const BackendConfig* secondary_cfg = nullptr;
  for (const auto& b : cfg_.backends)
    if (b.backend_id == cfg_.secondary_backend) secondary_cfg = &b;
  std::unique_ptr<Backend> secondary;
  if (secondary_cfg)
    secondary = std::make_unique<Backend>(*secondary_cfg, &cache, clock_, transport_);

  Image blank;
  blank.width = blank.height = 1;
  blank.rgb = {255, 255, 255};
  ChartImage blank_chart{blank, blank.digest(), "extraction"};

  std::ostringstream preds;
  preds << "window_id,template_id,backend_id,attempt_index,value,method\n";
  std::map<std::string, std::map<int, std::array<int, 3>>> audit;  // [attempted, ok, failed]

  for (const auto& entry : index) {
    std::string wid = entry.at("window_id");
    int tid = entry.at("template_id");
    std::string bid = entry.at("backend_id");
    int attempt = entry.at("attempt_index");
    ModelResponse r = cache.require(bid, entry.at("key"));

    SecondaryAsk ask;
    if (secondary) {
      const PredictionWindow* w = by_id.at(wid);
      ask = [&, w](const std::string& prompt_text) {
        PromptInstance p;
        p.template_id = 0;
        p.rendered_text = prompt_text;
        p.window_id = "extraction";
        p.chart_digest = blank_chart.digest;
        return secondary->query(p, blank_chart, 1, w, offline_).raw_text;
      };
    }
    Prediction pred = extract_prediction(r.raw_text, wid, tid, bid, attempt,
                                         cfg_.extraction, ask);
    auto& counters = audit[bid][tid];
    ++counters[0];
    ++counters[pred.method == ExtractMethod::failed ? 2 : 1];
    preds << pred.window_id << ',' << pred.template_id << ',' << pred.backend_id << ','
          << pred.attempt_index << ','
          << (pred.method == ExtractMethod::failed ? "" : format_double(pred.value))
          << ',' << extract_method_name(pred.method) << '\n';
  }

  json ja;
  for (const auto& [bid, by_tid] : audit)
    for (const auto& [tid, c] : by_tid)
      ja[bid][std::to_string(tid)] = {{"attempted", c[0]},
                                      {"extracted", c[1]},
                                      {"failed", c[2]}};
  spit(artifact_path("predictions.csv"), preds.str());
  spit(artifact_path("extraction_audit.json"), ja.dump(2) + "\n");
  write_stage_marker("extract", stage_input_digest("extract"),
                     {"predictions.csv", "extraction_audit.json"});
}

namespace {

std::vector<Prediction> load_predictions(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw StageError("predictions artifact missing; run the extract stage");
  CsvTable t = read_csv(f);
  std::vector<Prediction> out;
  for (const auto& r : t.rows) {
    Prediction p;
    p.window_id = r[0];
    p.template_id = std::stoi(r[1]);
    p.backend_id = r[2];
    p.attempt_index = std::stoi(r[3]);
    if (r[5] == "failed") {
      p.method = ExtractMethod::failed;
    } else {
      p.method = r[5] == "pattern" ? ExtractMethod::pattern
                                   : ExtractMethod::secondary_model;
      p.value = *parse_double(r[4]);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

void Pipeline::stage_ensemble() {
  auto predictions = load_predictions(artifact_path("predictions.csv"));
  auto averaged = repeat_average_table(predictions);

  std::ostringstream os;
  os << "scope,window_id,backend_id,template_id,value,member_count\n";
  for (const auto& [wid, by_backend] : averaged) {
    for (const auto& [bid, by_tid] : by_backend)
      for (const auto& [tid, r] : by_tid)
        os << "repeat-average," << wid << ',' << bid << ',' << tid << ','
           << format_double(r.value) << ',' << r.member_count << '\n';
    for (const auto& bcfg : cfg_.backends) {
      auto b = by_backend.find(bcfg.backend_id);
      if (b == by_backend.end()) continue;
      std::vector<EnsembleResult> per_template;
      for (int tid : cfg_.templates) {
        auto t = b->second.find(tid);
        if (t != b->second.end()) per_template.push_back(t->second);
      }
      if (auto r = prompt_ensemble(wid, bcfg.backend_id, per_template))
        os << "prompt-ensemble," << wid << ',' << bcfg.backend_id << ",,"
           << format_double(r->value) << ',' << r->member_count << '\n';
    }
    for (int tid : cfg_.templates) {
      std::vector<EnsembleResult> per_backend;
      for (const auto& bcfg : cfg_.backends) {
        auto b = by_backend.find(bcfg.backend_id);
        if (b == by_backend.end()) continue;
        auto t = b->second.find(tid);
        if (t != b->second.end()) per_backend.push_back(t->second);
      }
      if (auto r = model_ensemble(wid, tid, per_backend, cfg_.ensemble_weights))
        os << "model-ensemble," << wid << ",," << tid << ','
           << format_double(r->value) << ',' << r->member_count << '\n';
    }
  }
  spit(artifact_path("ensembles.csv"), os.str());
  write_stage_marker("ensemble", stage_input_digest("ensemble"), {"ensembles.csv"});
}

void Pipeline::stage_baselines() {
  std::ostringstream os;
  os << "system,window_id,value\n";
  std::vector<std::string> outputs = {"baselines.csv"};

  if (cfg_.baselines_enabled) {
    Cohort cohort = load_cohort();
    auto windows = load_windows(cohort);
    PatientSplit split = load_split();
    std::set<std::string> train_set(split.train.begin(), split.train.end());

    std::vector<PredictionWindow> train_windows;
    for (const auto& w : windows)
      if (train_set.count(w.patient_id)) train_windows.push_back(w);
    if (train_windows.size() < 2)
      throw TrainingError("baselines need >= 2 training windows, got " +
                          std::to_string(train_windows.size()));

    RfParams rf_params = cfg_.rf;
    rf_params.threads = cfg_.threads;
    RfRegressor rf = RfRegressor::train(train_windows, cohort.profiles, rf_params);
    CnnRegressor cnn = CnnRegressor::train(train_windows, cohort.profiles, cfg_.cnn);

    for (const auto& w : windows) {
      const auto& profile = cohort.profiles.at(w.patient_id);
      os << "RF," << w.id() << ',' << format_double(rf.predict(w, profile)) << '\n';
      os << "1D-CNN," << w.id() << ',' << format_double(cnn.predict(w, profile))
         << '\n';
    }
    spit(artifact_path("models/rf.json"), rf.to_json() + "\n");
    spit(artifact_path("models/cnn.json"), cnn.to_json() + "\n");
    outputs.push_back("models/rf.json");
    outputs.push_back("models/cnn.json");
  }
  spit(artifact_path("baselines.csv"), os.str());
  write_stage_marker("baselines", stage_input_digest("baselines"), outputs);
}

ReportInputs Pipeline::collect_report_inputs() const {
  Cohort cohort = load_cohort();
  auto windows = load_windows(cohort);
  PatientSplit split = load_split();

  ReportInputs in;
  for (const auto& w : windows)
    in.windows[w.id()] = {w.patient_id, w.target.egfr};
  in.train_patients.insert(split.train.begin(), split.train.end());
  in.validation_patients.insert(split.validation.begin(), split.validation.end());
  for (const auto& b : cfg_.backends) in.backend_ids.push_back(b.backend_id);
  in.template_ids = cfg_.templates;
  in.predictions = load_predictions(artifact_path("predictions.csv"));
  in.ensemble_weights = cfg_.ensemble_weights;

  std::ifstream bf(artifact_path("baselines.csv"));
  if (bf) {
    CsvTable t = read_csv(bf);
    for (const auto& r : t.rows)
      in.baseline_predictions[r[0]][r[1]] = *parse_double(r[2]);
  }
  return in;
}

void Pipeline::stage_report() {
  ReportInputs inputs = collect_report_inputs();
  MetricsReport report = build_report(inputs);

  std::vector<std::string> outputs = {"report.csv", "manifest.json"};
  spit(artifact_path("report.csv"), report_to_csv(report));
  if (cfg_.report.text_table) {
    spit(artifact_path("report.txt"), report_to_text(report));
    outputs.push_back("report.txt");
  }

  if (cfg_.report.significance) {
    std::vector<std::string> systems;
    for (const auto& b : cfg_.backends) systems.push_back(b.backend_id + ":ensemble");
    for (const auto& [name, preds] : inputs.baseline_predictions)
      systems.push_back(name);
    std::vector<SignificanceResult> results;
    for (const char* split : {"train", "validation"}) {
      for (size_t i = 0; i < systems.size(); ++i)
        for (size_t k = i + 1; k < systems.size(); ++k) {
          auto ea = per_window_abs_errors(inputs, systems[i], split);
          auto eb = per_window_abs_errors(inputs, systems[k], split);
          // restrict to common windows; skip pairs below the minimum
          std::map<std::string, double> ca, cb;
          for (const auto& [wid, v] : ea) {
            auto it = eb.find(wid);
            if (it != eb.end()) {
              ca[wid] = v;
              cb[wid] = it->second;
            }
          }
          if (ca.size() < 6) continue;
          SignificanceResult r = paired_test(ca, cb);
          r.system_a = systems[i];
          r.system_b = systems[k];
          r.split = split;
          results.push_back(std::move(r));
        }
    }
    spit(artifact_path("significance.csv"), significance_to_csv(results));
    outputs.push_back("significance.csv");
  }

  // Run manifest: config digest, seeds, cohort digest, per-cell counts.
  json manifest;
  manifest["config_digest"] = config_digest(cfg_);
  manifest["seeds"] = {{"split", cfg_.seeds.split},
                       {"synthetic", cfg_.seeds.synthetic},
                       {"mocks", cfg_.seeds.mocks}};
  manifest["cohort_digest"] =
      sha256_hex(slurp(artifact_path("cohort_visits.csv")) +
                 slurp(artifact_path("cohort_profiles.csv")));
  manifest["extraction_audit"] =
      json::parse(slurp(artifact_path("extraction_audit.json")));
  json cells = json::array();
  auto add_rows = [&](const std::vector<ReportRow>& rows) {
    for (const auto& r : rows)
      for (const auto& [split, c] : r.by_split)
        cells.push_back({{"system", r.system},
                         {"prompt", r.prompt},
                         {"split", split},
                         {"n_windows", c.n_windows},
                         {"n_failed", c.n_failed}});
  };
  add_rows(report.baseline_rows);
  add_rows(report.model_rows);
  add_rows(report.ensemble_rows);
  manifest["cells"] = std::move(cells);
  spit(artifact_path("manifest.json"), manifest.dump(2) + "\n");

  write_stage_marker("report", stage_input_digest("report"), outputs);
}

}  // namespace egfr
