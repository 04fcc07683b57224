#pragma once

#include "dap/tasks.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dap::cli {

using json = nlohmann::ordered_json;

enum class Task
{
  Denoise,
  Inpaint,
  Separate,
  Benchmark,
  GradCheck,
};

std::string task_name(Task t);
Task parse_task(const std::string& name);

/// Bad configuration or inputs. `kind` goes into the error document.
class ConfigError : public std::runtime_error
{
public:
  ConfigError(std::string kind, const std::string& message) : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

private:
  std::string kind_;
};

struct CorruptionSpec
{
  enum class Kind
  {
    Gaussian,
    EnvNoise,
    TimeMask,
    Mixture,
  };
  Kind kind = Kind::Gaussian;
  double sigma = 0.1;
  std::filesystem::path noise_path;
  double snr_db = 7.0;
  /// Explicit intervals; when empty, `mask_count` intervals are drawn per run.
  std::vector<TimeInterval> intervals;
  int mask_count = 2;
  double mask_min_s = 0.1;
  double mask_max_s = 0.25;
  std::filesystem::path second_source;
};

std::string corruption_name(CorruptionSpec::Kind k);

struct MetricToggles
{
  bool psnr = true;
  bool spectral_snr = true;
  bool envelope = true;
  bool bss = true;
};

struct ExperimentConfig
{
  Task task = Task::Denoise;
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path corpus_dir;
  /// 0 takes every WAV in the corpus.
  int corpus_count = 0;
  CorruptionSpec corruption;
  RunConfig run;
  /// Dilation rate used when the arch is `dilated`.
  int dilation_rate = 2;
  std::vector<std::uint64_t> seeds{0};
  /// Benchmark rows; defaults to all four variants.
  std::vector<ArchVariant> archs;
  /// Inputs are resampled to this rate when set.
  std::optional<double> sample_rate;
  /// Inputs are truncated to this many seconds when set.
  std::optional<double> clip_seconds;
  std::filesystem::path out_dir = "out";
  int threads = 1;
  MetricToggles metrics;
};

/// Strict parse: unknown keys and wrong types raise ConfigError naming the key.
ExperimentConfig parse_config(const json& doc);

/// Reads and parses a JSON file; malformed documents report the byte offset.
json load_json(const std::filesystem::path& path);

/// Full effective configuration, suitable for echoing next to the results.
json to_json(const ExperimentConfig& cfg);

struct Overrides
{
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::optional<double> lr;
  std::optional<std::string> arch;
  std::optional<double> width_scale;
  std::optional<std::filesystem::path> out_dir;
  std::optional<int> threads;
};

void apply_overrides(ExperimentConfig& cfg, const Overrides& o);

/// Checks ranges and paths and expands the corpus into `inputs`.
void validate(ExperimentConfig& cfg);

// --- reports -----------------------------------------------------------------

struct Aggregate
{
  double mean = 0.0;
  /// Sample standard deviation; 0 for a single value.
  double std = 0.0;
  std::size_t count = 0;
};

Aggregate aggregate(const std::vector<double>& values);

/// "iteration,loss" rows, 0-based iteration, losses at full precision.
std::string loss_csv(const std::vector<double>& losses);

/// SVG 1.1 line plot of a loss curve on linear axes.
std::string loss_svg(const std::vector<double>& losses, const std::string& title);

void write_text(const std::filesystem::path& path, const std::string& text);

/// One line of the error document printed on failure.
json error_document(const std::string& kind, const std::string& message);

// --- running -----------------------------------------------------------------

struct RunRecord
{
  std::size_t index = 0;
  std::string input;
  std::uint64_t seed = 0;
  ArchVariant arch;
  std::map<std::string, double> metrics;
  /// Task-specific extras such as mask intervals or the BSS permutation.
  json details = json::object();
  std::vector<double> loss_curve;
  double wall_seconds = 0.0;
};

struct ExperimentResult
{
  std::vector<RunRecord> runs;
  json metrics;
  /// Benchmark only: false when the dense variant ranks below plain conv.
  bool ordering_ok = true;
};

/// Executes a validated configuration and writes every artifact into
/// cfg.out_dir. Progress goes to `log`.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream& log);

/// Whole command line: parse, validate, run. Returns the process exit code.
int main_entry(int argc, char** argv);

} // namespace dap::cli
