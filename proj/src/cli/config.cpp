#include "dap/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dap::cli {

namespace fs = std::filesystem;

std::string task_name(Task t)
{
  switch (t) {
  case Task::Denoise: return "denoise";
  case Task::Inpaint: return "inpaint";
  case Task::Separate: return "separate";
  case Task::Benchmark: return "benchmark";
  case Task::GradCheck: return "gradcheck";
  }
  return "?";
}

Task parse_task(const std::string& name)
{
  for (Task t : {Task::Denoise, Task::Inpaint, Task::Separate, Task::Benchmark, Task::GradCheck})
    if (task_name(t) == name) return t;
  throw ConfigError("validation", "unknown task '" + name + "'");
}

std::string corruption_name(CorruptionSpec::Kind k)
{
  switch (k) {
  case CorruptionSpec::Kind::Gaussian: return "gaussian";
  case CorruptionSpec::Kind::EnvNoise: return "env_noise";
  case CorruptionSpec::Kind::TimeMask: return "time_mask";
  case CorruptionSpec::Kind::Mixture: return "mixture";
  }
  return "?";
}

namespace {

// literals built in code arrive as signed integers
bool non_negative(const json& v)
{
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

// Walks one JSON object, remembering which keys were read so the rest can be
// reported as unknown.
class ObjectReader
{
public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path))
  {
    if (!obj_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  const json* find(const std::string& key)
  {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out)
  {
    const json* v = find(key);
    if (!v) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v->is_boolean()) fail(key_path(key), "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v->is_number_integer()) fail(key_path(key), "expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (!non_negative(*v)) fail(key_path(key), "expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v->is_number()) fail(key_path(key), "expected a number");
    } else {
      if (!v->is_string()) fail(key_path(key), "expected a string");
    }
    out = v->get<T>();
  }

  void get_path(const std::string& key, fs::path& out)
  {
    std::string s;
    get(key, s);
    if (find(key)) out = s;
  }

  template <typename T>
  void get_optional(const std::string& key, std::optional<T>& out)
  {
    if (!find(key)) return;
    T value{};
    get(key, value);
    out = value;
  }

  void finish() const
  {
    for (const auto& [key, value] : obj_.items())
      if (!seen_.count(key)) fail(key_path(key), "unknown key");
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& what)
  {
    throw ConfigError("validation", "config key '" + key + "': " + what);
  }

private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_corruption(const json& doc, CorruptionSpec& c)
{
  ObjectReader r(doc, "corruption");
  std::string type = corruption_name(c.kind);
  r.get("type", type);
  if (type == "gaussian") c.kind = CorruptionSpec::Kind::Gaussian;
  else if (type == "env_noise") c.kind = CorruptionSpec::Kind::EnvNoise;
  else if (type == "time_mask") c.kind = CorruptionSpec::Kind::TimeMask;
  else if (type == "mixture") c.kind = CorruptionSpec::Kind::Mixture;
  else ObjectReader::fail("corruption.type", "expected gaussian, env_noise, time_mask or mixture");

  r.get("sigma", c.sigma);
  r.get_path("noise", c.noise_path);
  r.get("snr_db", c.snr_db);
  r.get("count", c.mask_count);
  r.get("min_s", c.mask_min_s);
  r.get("max_s", c.mask_max_s);
  r.get_path("second_source", c.second_source);
  if (const json* iv = r.find("intervals")) {
    if (!iv->is_array()) ObjectReader::fail("corruption.intervals", "expected an array of [start, end] pairs");
    c.intervals.clear();
    for (const auto& pair : *iv) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number())
        ObjectReader::fail("corruption.intervals", "expected an array of [start, end] pairs");
      c.intervals.push_back({pair[0].get<double>(), pair[1].get<double>()});
    }
  }
  r.finish();
}

void parse_run(const json& doc, ExperimentConfig& cfg)
{
  ObjectReader r(doc, "run");
  RunConfig& run = cfg.run;
  std::string arch = run.arch.name();
  r.get("arch", arch);
  r.get("dilation_rate", cfg.dilation_rate);
  try {
    run.arch = ArchVariant::parse(arch, cfg.dilation_rate);
  } catch (const std::invalid_argument& e) {
    ObjectReader::fail("run.arch", e.what());
  }
  r.get("width_scale", run.width_scale);
  r.get("latent_channels", run.latent_channels);
  r.get("iterations", run.iterations);
  r.get("lr", run.lr);
  r.get("exclusion_weight", run.exclusion_weight);
  r.get("n_fft", run.stft.n_fft);
  r.get("hop", run.stft.hop);
  std::string precision = precision_name(run.precision);
  r.get("precision", precision);
  try {
    run.precision = parse_precision(precision);
  } catch (const std::invalid_argument& e) {
    ObjectReader::fail("run.precision", e.what());
  }
  r.finish();
}

void parse_metrics(const json& doc, MetricToggles& m)
{
  ObjectReader r(doc, "metrics");
  r.get("psnr", m.psnr);
  r.get("spectral_snr", m.spectral_snr);
  r.get("envelope", m.envelope);
  r.get("bss", m.bss);
  r.finish();
}

} // namespace

ExperimentConfig parse_config(const json& doc)
{
  ExperimentConfig cfg;
  ObjectReader r(doc, "");
  std::string task = task_name(cfg.task);
  r.get("task", task);
  cfg.task = parse_task(task);

  if (const json* v = r.find("inputs")) {
    if (!v->is_array()) ObjectReader::fail("inputs", "expected an array of paths");
    for (const auto& p : *v) {
      if (!p.is_string()) ObjectReader::fail("inputs", "expected an array of paths");
      cfg.inputs.emplace_back(p.get<std::string>());
    }
  }
  if (const json* v = r.find("corpus")) {
    ObjectReader c(*v, "corpus");
    c.get_path("dir", cfg.corpus_dir);
    c.get("count", cfg.corpus_count);
    c.finish();
    if (cfg.corpus_dir.empty()) ObjectReader::fail("corpus.dir", "required");
  }
  if (const json* v = r.find("corruption")) parse_corruption(*v, cfg.corruption);
  else if (cfg.task == Task::Inpaint) cfg.corruption.kind = CorruptionSpec::Kind::TimeMask;
  else if (cfg.task == Task::Separate) cfg.corruption.kind = CorruptionSpec::Kind::Mixture;
  if (const json* v = r.find("run")) parse_run(*v, cfg);
  if (const json* v = r.find("metrics")) parse_metrics(*v, cfg.metrics);

  if (r.find("seed") && r.find("seeds")) ObjectReader::fail("seed", "give either seed or seeds, not both");
  if (r.find("seed")) {
    std::uint64_t seed = 0;
    r.get("seed", seed);
    cfg.seeds = {seed};
  }
  if (const json* v = r.find("seeds")) {
    if (!v->is_array() || v->empty()) ObjectReader::fail("seeds", "expected a non-empty array of integers");
    cfg.seeds.clear();
    for (const auto& s : *v) {
      if (!non_negative(s)) ObjectReader::fail("seeds", "expected a non-empty array of non-negative integers");
      cfg.seeds.push_back(s.get<std::uint64_t>());
    }
  }
  if (const json* v = r.find("archs")) {
    if (!v->is_array()) ObjectReader::fail("archs", "expected an array of architecture names");
    for (const auto& a : *v) {
      if (!a.is_string()) ObjectReader::fail("archs", "expected an array of architecture names");
      try {
        cfg.archs.push_back(ArchVariant::parse(a.get<std::string>(), cfg.dilation_rate));
      } catch (const std::invalid_argument& e) {
        ObjectReader::fail("archs", e.what());
      }
    }
  }
  r.get_optional("sample_rate", cfg.sample_rate);
  r.get_optional("clip_seconds", cfg.clip_seconds);
  r.get_path("out", cfg.out_dir);
  r.get("threads", cfg.threads);
  r.finish();
  return cfg;
}

json load_json(const fs::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("io", "cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("parse", "malformed JSON in " + path.string() + " at byte " + std::to_string(e.byte));
  }
}

json to_json(const ExperimentConfig& cfg)
{
  json j;
  j["task"] = task_name(cfg.task);
  j["inputs"] = json::array();
  for (const auto& p : cfg.inputs) j["inputs"].push_back(p.generic_string());
  if (!cfg.corpus_dir.empty()) j["corpus"] = {{"dir", cfg.corpus_dir.generic_string()}, {"count", cfg.corpus_count}};

  const CorruptionSpec& c = cfg.corruption;
  json cj;
  cj["type"] = corruption_name(c.kind);
  switch (c.kind) {
  case CorruptionSpec::Kind::Gaussian: cj["sigma"] = c.sigma; break;
  case CorruptionSpec::Kind::EnvNoise:
    cj["noise"] = c.noise_path.generic_string();
    cj["snr_db"] = c.snr_db;
    break;
  case CorruptionSpec::Kind::TimeMask:
    if (c.intervals.empty()) {
      cj["count"] = c.mask_count;
      cj["min_s"] = c.mask_min_s;
      cj["max_s"] = c.mask_max_s;
    } else {
      cj["intervals"] = json::array();
      for (const auto& iv : c.intervals) cj["intervals"].push_back({iv.start, iv.end});
    }
    break;
  case CorruptionSpec::Kind::Mixture: cj["second_source"] = c.second_source.generic_string(); break;
  }
  j["corruption"] = cj;

  const RunConfig& r = cfg.run;
  j["run"] = {{"arch", r.arch.name()},
              {"dilation_rate", cfg.dilation_rate},
              {"width_scale", r.width_scale},
              {"latent_channels", r.latent_channels},
              {"iterations", r.iterations},
              {"lr", r.lr},
              {"exclusion_weight", r.exclusion_weight},
              {"n_fft", r.stft.n_fft},
              {"hop", r.stft.hop},
              {"precision", precision_name(r.precision)}};
  j["metrics"] = {{"psnr", cfg.metrics.psnr},
                  {"spectral_snr", cfg.metrics.spectral_snr},
                  {"envelope", cfg.metrics.envelope},
                  {"bss", cfg.metrics.bss}};
  j["seeds"] = cfg.seeds;
  if (!cfg.archs.empty()) {
    j["archs"] = json::array();
    for (const auto& a : cfg.archs) j["archs"].push_back(a.name());
  }
  if (cfg.sample_rate) j["sample_rate"] = *cfg.sample_rate;
  if (cfg.clip_seconds) j["clip_seconds"] = *cfg.clip_seconds;
  j["out"] = cfg.out_dir.generic_string();
  j["threads"] = cfg.threads;
  return j;
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& o)
{
  if (o.seed) cfg.seeds = {*o.seed};
  if (o.iterations) cfg.run.iterations = *o.iterations;
  if (o.lr) cfg.run.lr = *o.lr;
  if (o.arch) {
    try {
      cfg.run.arch = ArchVariant::parse(*o.arch, cfg.dilation_rate);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("validation", std::string("--arch: ") + e.what());
    }
  }
  if (o.width_scale) cfg.run.width_scale = *o.width_scale;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.threads) cfg.threads = *o.threads;
}

namespace {

bool is_wav(const fs::path& p)
{
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".wav";
}

void require_file(const fs::path& p, const std::string& what)
{
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) throw ConfigError("validation", what + " not found: " + p.string());
}

} // namespace

void validate(ExperimentConfig& cfg)
{
  try {
    cfg.run.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("validation", e.what());
  }
  if (cfg.threads < 1) throw ConfigError("validation", "threads must be >= 1");
  if (cfg.seeds.empty()) throw ConfigError("validation", "at least one seed is required");
  if (cfg.sample_rate && !(*cfg.sample_rate > 0.0)) throw ConfigError("validation", "sample_rate must be positive");
  if (cfg.clip_seconds && !(*cfg.clip_seconds > 0.0)) throw ConfigError("validation", "clip_seconds must be positive");
  if (cfg.task == Task::GradCheck) return;

  if (!cfg.corpus_dir.empty()) {
    std::error_code ec;
    if (!fs::is_directory(cfg.corpus_dir, ec))
      throw ConfigError("validation", "corpus directory not found: " + cfg.corpus_dir.string());
    if (cfg.corpus_count < 0) throw ConfigError("validation", "corpus.count must be >= 0");
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(cfg.corpus_dir))
      if (entry.is_regular_file() && is_wav(entry.path())) found.push_back(entry.path());
    std::sort(found.begin(), found.end());
    if (found.empty()) throw ConfigError("validation", "corpus directory has no WAV files: " + cfg.corpus_dir.string());
    if (cfg.corpus_count > 0 && static_cast<std::size_t>(cfg.corpus_count) < found.size())
      found.resize(static_cast<std::size_t>(cfg.corpus_count));
    cfg.inputs.insert(cfg.inputs.end(), found.begin(), found.end());
  }
  if (cfg.inputs.empty()) throw ConfigError("validation", "no inputs: set inputs or corpus");
  for (const auto& p : cfg.inputs) require_file(p, "input");

  const CorruptionSpec& c = cfg.corruption;
  switch (c.kind) {
  case CorruptionSpec::Kind::Gaussian:
    if (!(c.sigma > 0.0)) throw ConfigError("validation", "corruption.sigma must be positive");
    break;
  case CorruptionSpec::Kind::EnvNoise:
    require_file(c.noise_path, "noise file");
    if (!std::isfinite(c.snr_db)) throw ConfigError("validation", "corruption.snr_db must be finite");
    break;
  case CorruptionSpec::Kind::TimeMask:
    for (const auto& iv : c.intervals)
      if (!(iv.start >= 0.0) || !(iv.end >= iv.start))
        throw ConfigError("validation", "corruption.intervals: need 0 <= start <= end");
    if (c.mask_count < 0) throw ConfigError("validation", "corruption.count must be >= 0");
    if (!(c.mask_min_s > 0.0) || !(c.mask_max_s >= c.mask_min_s))
      throw ConfigError("validation", "corruption: need 0 < min_s <= max_s");
    break;
  case CorruptionSpec::Kind::Mixture: require_file(c.second_source, "second source"); break;
  }

  const bool wants_mask = cfg.task == Task::Inpaint;
  const bool wants_mix = cfg.task == Task::Separate;
  if (wants_mask != (c.kind == CorruptionSpec::Kind::TimeMask))
    throw ConfigError("validation", "task " + task_name(cfg.task) + " cannot use corruption " + corruption_name(c.kind));
  if (wants_mix != (c.kind == CorruptionSpec::Kind::Mixture))
    throw ConfigError("validation", "task " + task_name(cfg.task) + " cannot use corruption " + corruption_name(c.kind));
  if (cfg.task == Task::Benchmark && cfg.archs.empty())
    cfg.archs = {ArchVariant::plain(), ArchVariant::dilated(cfg.dilation_rate), ArchVariant::dilated_exp(),
                 ArchVariant::dilated_exp_dense()};
  for (const auto& a : cfg.archs) {
    RunConfig probe = cfg.run;
    probe.arch = a;
    try {
      probe.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("validation", e.what());
    }
  }
}

} // namespace dap::cli
