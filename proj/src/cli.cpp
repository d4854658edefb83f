#include "hypoloop/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "hypoloop/checkpoint.hpp"
#include "hypoloop/errors.hpp"
#include "hypoloop/hypogen.hpp"
#include "hypoloop/prompts.hpp"
#include "hypoloop/report.hpp"
#include "hypoloop/synth.hpp"
#include "hypoloop/util.hpp"
#include "hypoloop/vqa.hpp"

namespace hypoloop {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Typed access to one config object; problems accumulate in `errors`.
class Section {
 public:
  Section(const json& doc, std::string name, std::vector<std::string>& errors)
      : name_(std::move(name)), errors_(errors) {
    if (doc.is_null()) {
      obj_ = json::object();
    } else if (!doc.is_object()) {
      fail("", "must be an object");
      obj_ = json::object();
    } else {
      obj_ = doc;
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  void fail(const std::string& key, const std::string& message) {
    errors_.push_back(name_ + (key.empty() ? "" : "." + key) + ": " + message);
  }

  std::optional<double> number(const std::string& key) {
    if (!has(key)) return std::nullopt;
    const json& v = obj_.at(key);
    if (!v.is_number()) {
      fail(key, "must be a number");
      return std::nullopt;
    }
    return v.get<double>();
  }

  std::optional<std::uint64_t> unsigned_int(const std::string& key) {
    if (!has(key)) return std::nullopt;
    const json& v = obj_.at(key);
    if (!v.is_number_unsigned()) {
      fail(key, "must be a non-negative integer");
      return std::nullopt;
    }
    return v.get<std::uint64_t>();
  }

  std::optional<int> integer(const std::string& key) {
    if (!has(key)) return std::nullopt;
    const json& v = obj_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < -1'000'000'000 ||
        v.get<long long>() > 1'000'000'000) {
      fail(key, "must be an integer");
      return std::nullopt;
    }
    return static_cast<int>(v.get<long long>());
  }

  std::optional<bool> boolean(const std::string& key) {
    if (!has(key)) return std::nullopt;
    const json& v = obj_.at(key);
    if (!v.is_boolean()) {
      fail(key, "must be true or false");
      return std::nullopt;
    }
    return v.get<bool>();
  }

  std::optional<std::string> string(const std::string& key) {
    if (!has(key)) return std::nullopt;
    const json& v = obj_.at(key);
    if (!v.is_string()) {
      fail(key, "must be a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

  std::optional<json> raw(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return obj_.at(key);
  }

  void finish() {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) fail(key, "unknown field");
    }
  }

 private:
  std::string name_;
  std::vector<std::string>& errors_;
  json obj_;
  std::set<std::string> seen_;
};

void parse_endpoint(Section& s, EndpointConfig& ep, double default_temperature) {
  ep.temperature = default_temperature;
  if (auto v = s.string("base_url")) ep.base_url = *v;
  if (auto v = s.string("model")) ep.model = *v;
  if (auto v = s.number("temperature")) {
    if (*v < 0.0 || *v > 2.0) s.fail("temperature", "must lie in [0, 2]");
    ep.temperature = *v;
  }
  if (auto v = s.integer("max_tokens")) {
    if (*v < 1) s.fail("max_tokens", "must be >= 1");
    ep.max_tokens = *v;
  }
  if (auto v = s.string("auth_env")) ep.auth_env = *v;
  if (auto v = s.number("timeout_s")) {
    if (!(*v > 0.0)) s.fail("timeout_s", "must be > 0");
    ep.timeout = std::chrono::milliseconds(static_cast<long long>(std::llround(*v * 1000.0)));
  }
  if (auto v = s.integer("max_attempts")) {
    if (*v < 1) s.fail("max_attempts", "must be >= 1");
    ep.max_attempts = *v;
  }
  if (auto v = s.integer("backoff_ms")) {
    if (*v < 0) s.fail("backoff_ms", "must be >= 0");
    ep.backoff_base = std::chrono::milliseconds(*v);
  }
}

void require_endpoint(Section& s, const EndpointConfig& ep) {
  if (ep.base_url.empty()) s.fail("base_url", "required unless mock is true");
  if (ep.model.empty()) s.fail("model", "required unless mock is true");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_relative() ? (base / path).lexically_normal() : path;
}

}  // namespace

RunConfig parse_run_config(const json& input, const fs::path& base_dir,
                           std::optional<std::uint64_t> seed_override) {
  std::vector<std::string> errors;
  RunConfig cfg;
  json doc = input;
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  if (seed_override) {
    doc["dataset"]["seed"] = *seed_override;
    doc["loop"]["seed"] = *seed_override;
  }
  cfg.document = doc;
  cfg.hash = sha256_hex(doc.dump());

  Section top(doc, "config", errors);

  // dataset
  Section ds(top.raw("dataset").value_or(json()), "dataset", errors);
  if (auto v = ds.string("manifest")) cfg.dataset.manifest = resolve(base_dir, *v);
  if (auto v = ds.string("synthetic_spec")) cfg.dataset.synthetic_spec = resolve(base_dir, *v);
  if (cfg.dataset.manifest && cfg.dataset.synthetic_spec) {
    ds.fail("", "manifest and synthetic_spec are mutually exclusive; set exactly one");
  } else if (!cfg.dataset.manifest && !cfg.dataset.synthetic_spec) {
    ds.fail("", "set exactly one of manifest or synthetic_spec");
  }
  for (const auto& [key, path] : {std::pair{"manifest", cfg.dataset.manifest},
                                  std::pair{"synthetic_spec", cfg.dataset.synthetic_spec}}) {
    if (path && !fs::exists(*path)) ds.fail(key, "file not found: " + path->string());
  }
  if (auto v = ds.raw("split")) {
    Section sp(*v, "dataset.split", errors);
    SplitRatios r;
    r.train = sp.number("train").value_or(r.train);
    r.val = sp.number("val").value_or(r.val);
    r.test = sp.number("test").value_or(r.test);
    sp.finish();
    if (!(r.train > 0.0 && r.val > 0.0 && r.test >= 0.0) ||
        std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
      ds.fail("split", "ratios must be positive (test may be 0) and sum to 1");
    }
    cfg.dataset.ratios = r;
  }
  cfg.dataset.seed = ds.unsigned_int("seed");
  ds.finish();

  // loop
  Section lp(top.raw("loop").value_or(json()), "loop", errors);
  LoopConfig& L = cfg.loop;
  if (auto v = lp.unsigned_int("k")) L.k = static_cast<std::size_t>(*v);
  if (auto v = lp.integer("max_iters")) L.max_iters = *v;
  if (auto v = lp.number("alpha")) L.alpha = *v;
  if (auto v = lp.number("p_explore")) L.p_explore = *v;
  if (auto v = lp.string("accept_metric")) {
    try {
      L.accept_metric = accept_metric_from_string(*v);
    } catch (const ConfigError&) {
      lp.fail("accept_metric", "must be one of rmse, mae, r2");
    }
  }
  if (auto v = lp.integer("retries_per_iter")) L.retries_per_iter = *v;
  if (auto v = lp.integer("patience")) L.patience = *v;
  if (auto v = lp.integer("generation_retries")) L.generation_retries = *v;
  if (auto v = lp.number("relative_epsilon")) L.relative_epsilon = *v;
  if (auto v = lp.string("correction")) {
    try {
      L.correction = correction_from_string(*v);
    } catch (const std::exception&) {
      lp.fail("correction", "must be none or bonferroni");
    }
  }
  if (auto v = lp.boolean("use_covariates")) L.use_covariates = *v;
  if (auto v = lp.unsigned_int("cv_folds")) L.cv_folds = static_cast<std::size_t>(*v);
  if (auto v = lp.string("domain_context")) L.domain_context = *v;
  if (auto v = lp.unsigned_int("seed")) L.seed = *v;
  lp.finish();
  try {
    L.validate();
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }

  // llm
  Section llm(top.raw("llm").value_or(json()), "llm", errors);
  cfg.llm.mock = llm.boolean("mock").value_or(false);
  if (auto v = llm.number("exploit_bias")) {
    if (*v < 0.0 || *v > 1.0) llm.fail("exploit_bias", "must lie in [0, 1]");
    cfg.llm.exploit_bias = *v;
  }
  parse_endpoint(llm, cfg.llm.endpoint, 1.0);
  if (!cfg.llm.mock) require_endpoint(llm, cfg.llm.endpoint);
  if (cfg.llm.mock && !cfg.dataset.synthetic_spec) {
    llm.fail("mock", "the mock LLM needs dataset.synthetic_spec");
  }
  llm.finish();

  // mllm
  Section ml(top.raw("mllm").value_or(json()), "mllm", errors);
  cfg.mllm.mock = ml.boolean("mock").value_or(false);
  if (auto v = ml.number("flip_prob")) {
    if (*v < 0.0 || *v > 1.0) ml.fail("flip_prob", "must lie in [0, 1]");
    cfg.mllm.flip_prob = *v;
  }
  if (auto v = ml.number("fail_fraction")) {
    if (*v < 0.0 || *v > 1.0) ml.fail("fail_fraction", "must lie in [0, 1]");
    cfg.mllm.fail_fraction = *v;
  }
  parse_endpoint(ml, cfg.mllm.endpoint, 0.0);
  if (!ml.has("max_tokens")) cfg.mllm.endpoint.max_tokens = 512;
  if (!cfg.mllm.mock) require_endpoint(ml, cfg.mllm.endpoint);
  if (cfg.mllm.mock && !cfg.dataset.synthetic_spec) {
    ml.fail("mock", "the mock MLLM needs dataset.synthetic_spec");
  }
  if (auto v = ml.unsigned_int("parallelism")) {
    if (*v < 1 || *v > 256) ml.fail("parallelism", "must lie in [1, 256]");
    cfg.mllm.embed.parallelism = static_cast<std::size_t>(*v);
  }
  if (auto v = ml.number("missing_ceiling")) {
    if (*v < 0.0 || *v > 1.0) ml.fail("missing_ceiling", "must lie in [0, 1]");
    cfg.mllm.embed.missing_ceiling = *v;
  }
  if (auto v = ml.integer("retries_per_image")) {
    if (*v < 0) ml.fail("retries_per_image", "must be >= 0");
    cfg.mllm.embed.retries_per_image = *v;
  }
  std::optional<std::string> cache_dir = ml.string("cache_dir");
  ml.finish();

  // output
  Section out(top.raw("output").value_or(json()), "output", errors);
  if (auto v = out.string("run_dir")) {
    cfg.output.run_dir = resolve(base_dir, *v);
  } else {
    out.fail("run_dir", "required");
  }
  if (auto v = out.raw("formats")) {
    cfg.output.formats.clear();
    if (!v->is_array()) {
      out.fail("formats", "must be a list drawn from csv, json");
    } else {
      for (const auto& f : *v) {
        if (!f.is_string() || (f != "csv" && f != "json")) {
          out.fail("formats", "must be a list drawn from csv, json");
          break;
        }
        cfg.output.formats.push_back(f.get<std::string>());
      }
    }
  }
  out.finish();
  cfg.mllm.cache_dir = cache_dir ? resolve(base_dir, *cache_dir) : cfg.output.run_dir / "cache";

  for (const char* key : {"dataset", "loop", "llm", "mllm", "output"}) top.has(key);
  top.finish();

  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig cfg = parse_run_config(doc, fs::absolute(path).parent_path(), seed_override);
  cfg.source = path;
  return cfg;
}

HypothesisSet load_hypotheses_file(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("hypotheses file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("hypotheses file is not valid JSON: " + std::string(e.what()));
  }
  const json list = doc.is_object() ? doc.value("hypotheses", json()) : doc;
  if (!list.is_array()) {
    throw ConfigError("hypotheses file must hold a list (or an object with a 'hypotheses' list)");
  }
  if (list.empty()) throw ConfigError("hypotheses file " + path.string() + " lists no hypotheses");
  std::vector<Hypothesis> members;
  for (const auto& item : list) {
    if (item.is_string()) {
      members.push_back(Hypothesis::make(item.get<std::string>()));
    } else if (item.is_object() && item.contains("question") && item["question"].is_string()) {
      auto options = item.contains("options")
                         ? item["options"].get<std::vector<std::string>>()
                         : Hypothesis::default_options();
      members.push_back(Hypothesis::make(item["question"].get<std::string>(), std::move(options)));
    } else {
      throw ConfigError("hypotheses file entries must be strings or {question, options} objects");
    }
  }
  return HypothesisSet(0, std::move(members));
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const EndpointError*>(&e) || dynamic_cast<const EmbeddingCeilingError*>(&e) ||
      dynamic_cast<const GenerationError*>(&e)) {
    return 3;
  }
  if (dynamic_cast<const IngestError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
      dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const InferenceError*>(&e) || dynamic_cast<const CheckpointError*>(&e) ||
      dynamic_cast<const ReportError*>(&e)) {
    return 4;
  }
  return 1;
}

namespace {

// Exclusive run-directory lock held for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw ConfigError("run directory " + dir.string() +
                        " is in use (lock file " + path_.string() + " exists)");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

// Serves answers from the cache only; any miss is an endpoint failure.
class OfflineMllmClient final : public MllmClient {
 public:
  explicit OfflineMllmClient(std::string model) : model_(std::move(model)) {}
  std::string answer(const VqaRequest& request) override {
    throw EndpointError("offline mode: no cached answer for " + std::string(request.image_ref));
  }
  std::string model_id() const override { return model_; }

 private:
  std::string model_;
};

struct Workspace {
  SyntheticWorld world;
  std::unique_ptr<GeneratedWorld> generated;
  DatasetSnapshot snapshot;
  std::unique_ptr<LlmClient> llm;
  std::unique_ptr<MllmClient> mllm;
};

void load_data(const RunConfig& cfg, Workspace& ws) {
  if (cfg.dataset.synthetic_spec) {
    ws.world = load_world(*cfg.dataset.synthetic_spec);
    if (cfg.dataset.seed) ws.world.seed = *cfg.dataset.seed;
    if (cfg.dataset.ratios) ws.world.ratios = *cfg.dataset.ratios;
    ws.generated = std::make_unique<GeneratedWorld>(generate_world(ws.world));
    ws.snapshot = ws.generated->snapshot;
  } else {
    IngestConfig ic;
    if (cfg.dataset.ratios) ic.ratios = *cfg.dataset.ratios;
    ic.seed = cfg.dataset.seed.value_or(0);
    ws.snapshot = load_manifest(*cfg.dataset.manifest, ic);
  }
}

void make_mllm(const RunConfig& cfg, bool offline, Workspace& ws) {
  if (cfg.mllm.mock) {
    ws.mllm = std::make_unique<MockMllmClient>(*ws.generated,
                                               cfg.mllm.flip_prob.value_or(ws.world.flip_prob),
                                               ws.world.seed, cfg.mllm.fail_fraction);
  } else if (offline) {
    ws.mllm = std::make_unique<OfflineMllmClient>(cfg.mllm.endpoint.model);
  } else {
    ws.mllm = std::make_unique<HttpMllmClient>(cfg.mllm.endpoint);
  }
}

void make_llm(const RunConfig& cfg, bool offline, Workspace& ws) {
  if (cfg.llm.mock) {
    ws.llm = std::make_unique<MockLlmClient>(ws.world, cfg.llm.exploit_bias, cfg.loop.seed);
  } else if (offline) {
    throw ConfigError("llm: --offline needs llm.mock = true (generation cannot be cached)");
  } else {
    ws.llm = std::make_unique<HttpLlmClient>(cfg.llm.endpoint);
  }
}

// Auth and URL problems surface here, before any data is touched.
void preflight(const RunConfig& cfg, bool offline, bool need_llm) {
  if (need_llm && !cfg.llm.mock) {
    if (offline) throw ConfigError("llm: --offline needs llm.mock = true");
    HttpChatTransport check(cfg.llm.endpoint);
  }
  if (!cfg.mllm.mock && !offline) HttpChatTransport check(cfg.mllm.endpoint);
}

ReportBundle filter_formats(ReportBundle bundle, const std::vector<std::string>& formats) {
  ReportBundle out;
  for (auto& f : bundle) {
    const std::string ext = fs::path(f.name).extension().string();
    for (const auto& want : formats) {
      if (ext == "." + want) {
        out.push_back(std::move(f));
        break;
      }
    }
  }
  return out;
}

std::vector<std::string> formats_of_run(const fs::path& run_dir) {
  const fs::path cfg = run_dir / "config.json";
  if (!fs::exists(cfg)) return {"csv", "json"};
  try {
    const json doc = json::parse(read_file(cfg));
    if (doc.contains("output") && doc["output"].contains("formats")) {
      return doc["output"]["formats"].get<std::vector<std::string>>();
    }
  } catch (const std::exception&) {
  }
  return {"csv", "json"};
}

int cmd_validate(const RunConfig& cfg, std::ostream& out) {
  out << "config ok (" << cfg.hash.substr(0, 16) << ")\n";
  out << "  dataset: "
      << (cfg.dataset.manifest ? cfg.dataset.manifest->string()
                               : cfg.dataset.synthetic_spec->string())
      << "\n  run_dir: " << cfg.output.run_dir.string() << "\n";
  return 0;
}

int cmd_dry_run(const RunConfig& cfg, std::ostream& out) {
  RunLock lock(cfg.output.run_dir);
  GenerationRequest req;
  req.m_new = cfg.loop.k;
  req.mode = GenerationMode::seed;
  req.domain_context = cfg.loop.domain_context;
  req.alpha = cfg.loop.alpha;
  const std::string prompt = render_prompt(req);
  const fs::path dir = cfg.output.run_dir / "dry_run";
  fs::create_directories(dir);
  write_file_atomic(dir / "t0_generation_prompt.txt", prompt);
  out << "# iteration 0 generation prompt (" << prompts::kVersion << ")\n" << prompt;
  if (!prompt.empty() && prompt.back() != '\n') out << '\n';
  return 0;
}

int cmd_run(const RunConfig& cfg, bool offline, std::ostream& out) {
  preflight(cfg, offline, true);
  RunLock lock(cfg.output.run_dir);
  Workspace ws;
  load_data(cfg, ws);
  make_llm(cfg, offline, ws);
  make_mllm(cfg, offline, ws);

  const fs::path& dir = cfg.output.run_dir;
  write_file_atomic(dir / "config.json", cfg.document.dump(2) + "\n");
  DiskVqaCache cache(cfg.mllm.cache_dir);
  EventLog log(dir / "events.jsonl");
  const fs::path state_path = dir / "state.json";
  LoopIo io{*ws.llm, *ws.mllm, cache, cfg.mllm.embed,
            [&](const RunState& s) { save_checkpoint(state_path, s); },
            [&](const json& e) { log.write(e); }};
  const RunState state = run_discovery(cfg.loop, ws.snapshot, io, cfg.hash);
  write_report(dir / "report", filter_formats(final_report(state), cfg.output.formats));

  const IterationRecord* inc = state.incumbent();
  out << "run finished: stop_reason=" << to_string(*state.stop_reason)
      << " iterations=" << state.iterations.size() << " incumbent=t" << state.incumbent_iter
      << " val_" << to_string(cfg.loop.accept_metric) << "=" << format_fixed(state.best_val_metric, 6)
      << "\n";
  out << "incumbent hypotheses (" << inc->set.k() << "):\n";
  for (std::size_t j = 0; j < inc->set.k(); ++j) {
    out << "  " << inc->set[j].id() << "  p=" << format_fixed(inc->assessment.p_values[j], 4)
        << "  " << inc->set[j].question() << "\n";
  }
  out << "outputs: " << dir.string() << "\n";
  return 0;
}

int cmd_report(const fs::path& run_dir, std::ostream& out) {
  RunLock lock(run_dir);
  const RunState state = load_checkpoint(run_dir / "state.json");
  const ReportBundle bundle = filter_formats(final_report(state), formats_of_run(run_dir));
  write_report(run_dir / "report", bundle);
  for (const auto& f : bundle) out << (run_dir / "report" / f.name).string() << "\n";
  return 0;
}

int cmd_embed(const RunConfig& cfg, const fs::path& hypotheses_path, bool offline, bool dry_run,
              std::ostream& out) {
  const HypothesisSet set = load_hypotheses_file(hypotheses_path);
  if (dry_run) {
    out << render_batch_prompt(set);
    return 0;
  }
  preflight(cfg, offline, false);
  RunLock lock(cfg.output.run_dir);
  Workspace ws;
  load_data(cfg, ws);
  make_mllm(cfg, offline, ws);

  const fs::path dir = cfg.output.run_dir / "embedding";
  fs::create_directories(dir);
  DiskVqaCache cache(cfg.mllm.cache_dir);
  EventLog log(dir / "events.jsonl");
  const EventSink sink = [&](const json& e) { log.write(e); };
  const EmbedResult result = embed_dataset(ws.snapshot, set, *ws.mllm, cache, cfg.mllm.embed, sink);
  log.write({{"event", "embed"},
             {"rows", result.matrix.rows()},
             {"cols", result.matrix.cols()},
             {"endpoint_calls", result.stats.endpoint_calls},
             {"row_cache_hits", result.stats.row_cache_hits},
             {"failed_images", result.stats.failed_images},
             {"missing_fraction", result.matrix.missing_fraction()}});

  std::ostringstream csv;
  csv << "#schema=hypoloop.embedding.v1\n";
  csv << "segment_id,split";
  for (const auto& id : set.ids()) csv << ',' << id;
  csv << '\n';
  for (std::size_t i = 0; i < ws.snapshot.size(); ++i) {
    const auto& rec = ws.snapshot.records[i];
    csv << csv_field(rec.segment_id) << ',' << to_string(rec.split) << ','
        << result.matrix.row_string(i) << '\n';
  }
  write_file_atomic(dir / "embedding.csv", csv.str());
  write_file_atomic(dir / "hypotheses.json", hypotheses_document(set).dump(2) + "\n");
  out << "embedded " << result.matrix.rows() << "x" << result.matrix.cols()
      << " endpoint_calls=" << result.stats.endpoint_calls
      << " row_cache_hits=" << result.stats.row_cache_hits
      << " missing_fraction=" << format_fixed(result.matrix.missing_fraction(), 4) << "\n";
  out << "outputs: " << dir.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Iterative discovery of interpretable visual hypotheses for crash-rate modelling",
               "hypoloop"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool offline = false;
  bool dry_run = false;
  app.add_option("--config", config_path, "run configuration (JSON)");
  app.add_option("--seed", seed, "override dataset and loop seeds");
  app.add_flag("--offline", offline, "forbid network access; only mocks and the cache are used");
  app.add_flag("--dry-run", dry_run, "render iteration-0 prompts without calling endpoints");

  auto* run = app.add_subcommand("run", "run the discovery loop and write the report");
  auto* report = app.add_subcommand("report", "regenerate the report from a run's checkpoint");
  std::string run_dir;
  report->add_option("run_dir", run_dir, "run directory (defaults to the config's output.run_dir)");
  auto* embed = app.add_subcommand("embed", "embed the dataset against a fixed hypothesis file");
  std::string hypotheses;
  embed->add_option("--hypotheses", hypotheses, "hypotheses file (JSON)")->required();
  auto* validate = app.add_subcommand("validate-config", "check a configuration file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    const auto need_config = [&]() -> RunConfig {
      if (config_path.empty()) throw ConfigError("--config is required for this command");
      return load_run_config(config_path, seed);
    };
    if (*validate) return cmd_validate(need_config(), out);
    if (*run) {
      const RunConfig cfg = need_config();
      return dry_run ? cmd_dry_run(cfg, out) : cmd_run(cfg, offline, out);
    }
    if (*report) {
      fs::path dir = run_dir.empty() ? need_config().output.run_dir : fs::path(run_dir);
      return cmd_report(dir, out);
    }
    if (*embed) return cmd_embed(need_config(), hypotheses, offline, dry_run, out);
  } catch (const IngestError& e) {
    err << "error: " << e.what();
    if (!e.rows().empty()) {
      err << " (rows:";
      for (std::size_t r : e.rows()) err << ' ' << r;
      err << ')';
    }
    err << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 1;
}

}  // namespace hypoloop
