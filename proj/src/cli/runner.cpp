#include "dap/cli.hpp"

#include "dap/gradcheck.hpp"
#include "dap/metrics.hpp"
#include "dap/wav.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <iostream>
#include <mutex>
#include <thread>

namespace dap::cli {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

Waveform load_input(const fs::path& path, const ExperimentConfig& cfg)
{
  Waveform w;
  try {
    w = read_wav(path);
  } catch (const WavError& e) {
    throw ConfigError("validation", path.string() + ": " + e.what());
  }
  if (cfg.sample_rate && w.sample_rate != *cfg.sample_rate) w = resample_linear(w, *cfg.sample_rate);
  if (cfg.clip_seconds) {
    const auto n = static_cast<Eigen::Index>(std::llround(*cfg.clip_seconds * w.sample_rate));
    if (n < w.size()) w.samples = w.samples.head(n).eval();
  }
  if (w.size() <= cfg.run.stft.n_fft / 2)
    throw ConfigError("validation", path.string() + ": clip shorter than half an analysis window");
  return w;
}

// Loops or truncates `w` to `length` samples.
Waveform fit_length(const Waveform& w, Eigen::Index length)
{
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(length);
  for (Eigen::Index i = 0; i < length; ++i) out.samples[i] = w.samples[i % w.size()];
  return out;
}

// What a float-32 WAV stores, so metrics describe the file on disk.
Waveform as_stored(const Waveform& w)
{
  Waveform out = w;
  out.samples = w.samples.cast<float>().cast<double>();
  return out;
}

struct Job
{
  std::size_t index = 0;
  std::size_t file = 0;
  std::uint64_t seed = 0;
  ArchVariant arch;
};

std::vector<Job> plan_jobs(const ExperimentConfig& cfg)
{
  std::vector<ArchVariant> archs = cfg.task == Task::Benchmark ? cfg.archs : std::vector<ArchVariant>{cfg.run.arch};
  std::vector<Job> jobs;
  for (const auto& arch : archs)
    for (std::size_t f = 0; f < cfg.inputs.size(); ++f)
      for (std::uint64_t seed : cfg.seeds) jobs.push_back({jobs.size(), f, seed, arch});
  return jobs;
}

class Runner
{
public:
  Runner(const ExperimentConfig& cfg, std::ostream& log) : cfg_(cfg), log_(log)
  {
    for (const auto& p : cfg.inputs) inputs_.push_back(load_input(p, cfg));
    const auto& c = cfg.corruption;
    if (c.kind == CorruptionSpec::Kind::EnvNoise) aux_ = load_input(c.noise_path, cfg);
    if (c.kind == CorruptionSpec::Kind::Mixture) aux_ = load_input(c.second_source, cfg);
  }

  RunRecord run(const Job& job)
  {
    const Waveform& clean = inputs_[job.file];
    RunRecord rec;
    rec.index = job.index;
    rec.input = cfg_.inputs[job.file].generic_string();
    rec.seed = job.seed;
    rec.arch = job.arch;

    RunConfig rc = cfg_.run;
    rc.arch = job.arch;
    rc.seed = job.seed;
    Rng corruption_rng(derive_seed(derive_seed(job.seed, static_cast<std::uint64_t>(SeedStream::Corruption)), job.file));

    const int every = std::max(1, rc.iterations / 10);
    const ProgressFn progress = [&](int it, double loss) {
      if (it % every == 0 || it + 1 == rc.iterations) {
        std::lock_guard lock(log_mutex_);
        log_ << "[run " << job.index << "] iteration " << it << " loss " << loss << "\n";
      }
    };
    const std::string tag = std::to_string(job.index);
    const fs::path& out = cfg_.out_dir;
    const StftParams sp = rc.stft;
    const auto start = Clock::now();

    switch (cfg_.task) {
    case Task::Denoise:
    case Task::Benchmark: {
      const Waveform observed = cfg_.corruption.kind == CorruptionSpec::Kind::Gaussian
                                    ? add_gaussian(clean, cfg_.corruption.sigma, corruption_rng)
                                    : mix_at_snr(clean, aux_, cfg_.corruption.snr_db);
      RunResult r = denoise(observed, rc, progress);
      const Waveform est = as_stored(r.restored[0]);
      rec.loss_curve = std::move(r.loss_curve);
      score_restoration(rec, clean, observed, est, sp);
      write_wav(out / ("corrupted_" + tag + ".wav"), observed);
      write_wav(out / ("restored_" + tag + ".wav"), est);
      break;
    }
    case Task::Inpaint: {
      std::vector<TimeInterval> intervals = cfg_.corruption.intervals;
      if (intervals.empty())
        intervals = gen_time_masks(clean.duration(), corruption_rng, cfg_.corruption.mask_count,
                                   cfg_.corruption.mask_min_s, cfg_.corruption.mask_max_s);
      for (const auto& iv : intervals)
        if (iv.end > clean.duration()) throw ConfigError("validation", "mask interval beyond the end of " + rec.input);
      const Waveform observed = apply_time_masks(clean, intervals);
      const MaskSpec mask = time_mask_spec(intervals, clean.size(), clean.sample_rate, sp);
      RunResult r = inpaint(observed, mask, rc, progress);
      const Waveform est = as_stored(r.restored[0]);
      rec.loss_curve = std::move(r.loss_curve);
      score_restoration(rec, clean, observed, est, sp);
      const Eigen::ArrayXXd region = 1.0 - mask.observed;
      if (cfg_.metrics.spectral_snr && (region > 0.0).any() && (stft(clean, sp).magnitude() * region).sum() > 0.0) {
        rec.metrics["spectral_snr_masked_input"] = spectral_snr(clean, observed, sp, region);
        rec.metrics["spectral_snr_masked_output"] = spectral_snr(clean, est, sp, region);
      }
      rec.details["intervals"] = json::array();
      for (const auto& iv : intervals) rec.details["intervals"].push_back({iv.start, iv.end});
      write_wav(out / ("corrupted_" + tag + ".wav"), observed);
      write_wav(out / ("restored_" + tag + ".wav"), est);
      break;
    }
    case Task::Separate: {
      const Waveform second = fit_length(aux_, clean.size());
      Waveform mixture = clean;
      mixture.samples += second.samples;
      RunResult r = separate(mixture, rc, progress);
      const std::array<Waveform, 2> ests{as_stored(r.restored[0]), as_stored(r.restored[1])};
      rec.loss_curve = std::move(r.loss_curve);
      if (cfg_.metrics.bss) {
        const BssScores s = bss_eval({clean, second}, ests);
        for (int j = 0; j < 2; ++j) {
          const auto k = static_cast<std::size_t>(j);
          rec.metrics["sdr_" + std::to_string(j + 1)] = s.sdr[k];
          rec.metrics["sir_" + std::to_string(j + 1)] = s.sir[k];
        }
        rec.details["permutation"] = s.permutation;
      }
      rec.metrics["mask_min"] = r.mask.minCoeff();
      rec.metrics["mask_max"] = r.mask.maxCoeff();
      write_wav(out / ("mixture_" + tag + ".wav"), mixture);
      write_wav(out / ("source1_" + tag + ".wav"), ests[0]);
      write_wav(out / ("source2_" + tag + ".wav"), ests[1]);
      break;
    }
    case Task::GradCheck: break;
    }
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    rec.metrics["final_loss"] = rec.loss_curve.back();

    const std::string title = task_name(cfg_.task) + " " + job.arch.name() + " seed " + std::to_string(job.seed) +
                              " (" + fs::path(rec.input).filename().string() + ")";
    write_text(out / ("loss_" + tag + ".csv"), loss_csv(rec.loss_curve));
    write_text(out / ("loss_" + tag + ".svg"), loss_svg(rec.loss_curve, title));
    {
      std::lock_guard lock(log_mutex_);
      log_ << "[run " << job.index << "] done in " << rec.wall_seconds << " s\n";
    }
    return rec;
  }

private:
  void score_restoration(RunRecord& rec, const Waveform& clean, const Waveform& observed, const Waveform& est,
                         StftParams sp) const
  {
    if (cfg_.metrics.psnr) {
      rec.metrics["psnr_input"] = psnr(clean, observed);
      rec.metrics["psnr_output"] = psnr(clean, est);
      rec.metrics["psnr_gain"] = rec.metrics["psnr_output"] - rec.metrics["psnr_input"];
    }
    if (cfg_.metrics.spectral_snr) {
      rec.metrics["spectral_snr_input"] = spectral_snr(clean, observed, sp);
      rec.metrics["spectral_snr_output"] = spectral_snr(clean, est, sp);
    }
    if (cfg_.metrics.envelope) {
      rec.metrics["envelope_distance_input"] = envelope_distance(clean, observed);
      rec.metrics["envelope_distance_output"] = envelope_distance(clean, est);
    }
  }

  const ExperimentConfig& cfg_;
  std::ostream& log_;
  std::mutex log_mutex_;
  std::vector<Waveform> inputs_;
  Waveform aux_;
};

double median(std::vector<double> v)
{
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json aggregate_json(const std::vector<const RunRecord*>& rows)
{
  std::map<std::string, std::vector<double>> by_metric;
  for (const auto* r : rows)
    for (const auto& [k, v] : r->metrics) by_metric[k].push_back(v);
  json out = json::object();
  for (const auto& [k, values] : by_metric) {
    const Aggregate a = aggregate(values);
    out[k] = {{"mean", a.mean}, {"std", a.std}, {"median", median(values)}, {"count", a.count}};
  }
  return out;
}

std::string fixed(double v, int digits)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream& log)
{
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw ConfigError("io", "cannot create output directory " + cfg.out_dir.string() + ": " + ec.message());

  Runner runner(cfg, log);
  const std::vector<Job> jobs = plan_jobs(cfg);
  std::vector<RunRecord> records(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i; (i = next++) < jobs.size();) {
      try {
        records[i] = runner.run(jobs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto start = Clock::now();
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), jobs.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  const double total_seconds = std::chrono::duration<double>(Clock::now() - start).count();

  ExperimentResult result;
  json& m = result.metrics;
  m["task"] = task_name(cfg.task);
  m["runs"] = json::array();
  for (const auto& r : records) {
    json row;
    row["index"] = r.index;
    row["input"] = r.input;
    row["seed"] = r.seed;
    row["arch"] = r.arch.name();
    row["iterations"] = r.loss_curve.size();
    row["metrics"] = json(r.metrics);
    if (!r.details.empty()) row["details"] = r.details;
    m["runs"].push_back(row);
  }

  m["aggregate"] = json::array();
  std::vector<ArchVariant> groups = cfg.task == Task::Benchmark ? cfg.archs : std::vector<ArchVariant>{cfg.run.arch};
  for (const auto& arch : groups) {
    std::vector<const RunRecord*> rows;
    for (const auto& r : records)
      if (r.arch == arch) rows.push_back(&r);
    m["aggregate"].push_back({{"arch", arch.name()}, {"label", arch.label()}, {"runs", rows.size()},
                              {"metrics", aggregate_json(rows)}});
  }

  if (cfg.task == Task::Benchmark) {
    const auto medians = [&](const ArchVariant& a) {
      std::vector<double> v;
      for (const auto& r : records)
        if (r.arch == a && r.metrics.count("psnr_output")) v.push_back(r.metrics.at("psnr_output"));
      return v;
    };
    const auto dense = medians(ArchVariant::dilated_exp_dense());
    const auto plain = medians(ArchVariant::plain());
    m["flags"] = json::array();
    if (!dense.empty() && !plain.empty()) {
      const double md = median(dense), mp = median(plain);
      result.ordering_ok = md >= mp;
      m["ordering"] = {{"metric", "psnr_output"},
                       {"median_dilated_exp_dense", md},
                       {"median_conv", mp},
                       {"dense_at_least_conv", result.ordering_ok}};
      if (!result.ordering_ok)
        m["flags"].push_back("ordering regression: median psnr_output of dilated-exp-dense is below plain conv");
    }

    std::string table = "| Model | PSNR out (dB) | PSNR gain (dB) | Spectral SNR out (dB) | Envelope dist. |\n";
    table += "|---|---|---|---|---|\n";
    for (const auto& row : m["aggregate"]) {
      const json& am = row["metrics"];
      const auto cell = [&](const char* key, int digits) {
        if (!am.contains(key)) return std::string("n/a");
        return fixed(am[key]["mean"].get<double>(), digits) + " ± " + fixed(am[key]["std"].get<double>(), digits);
      };
      table += "| " + row["label"].get<std::string>() + " | " + cell("psnr_output", 2) + " | " + cell("psnr_gain", 2) +
               " | " + cell("spectral_snr_output", 2) + " | " + cell("envelope_distance_output", 4) + " |\n";
    }
    if (!result.ordering_ok) table += "\nFLAG: dilated-exp-dense ranks below plain conv on median PSNR.\n";
    write_text(cfg.out_dir / "benchmark.md", table);
  }
  write_text(cfg.out_dir / "metrics.json", m.dump(2) + "\n");

  json prov;
  prov["tool"] = "dap";
  prov["compiler"] = __VERSION__;
  prov["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                  std::to_string(EIGEN_MINOR_VERSION);
  prov["threads"] = cfg.threads;
  prov["started_unix"] = static_cast<long long>(std::time(nullptr));
  prov["wall_seconds_total"] = total_seconds;
  prov["runs"] = json::array();
  for (const auto& r : records) prov["runs"].push_back({{"index", r.index}, {"wall_seconds", r.wall_seconds}});
  write_text(cfg.out_dir / "provenance.json", prov.dump(2) + "\n");

  result.runs = std::move(records);
  return result;
}

namespace {

int run_gradcheck(const ExperimentConfig& cfg)
{
  auto results = run_op_gradchecks();
  for (auto& r : run_unet_gradchecks()) results.push_back(std::move(r));
  bool ok = true;
  json doc = json::array();
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  rel_error " << r.rel_error << " (tol " << r.tolerance
              << ", " << r.coordinates << " coords)\n";
    ok = ok && r.passed;
    doc.push_back({{"name", r.name},
                   {"rel_error", r.rel_error},
                   {"tolerance", r.tolerance},
                   {"coordinates", r.coordinates},
                   {"passed", r.passed}});
  }
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (!ec) write_text(cfg.out_dir / "gradcheck.json", doc.dump(2) + "\n");
  return ok ? 0 : 1;
}

} // namespace

int main_entry(int argc, char** argv)
{
  CLI::App app{"Single-observation audio restoration with untrained U-Net priors"};
  std::string task, config_path;
  std::uint64_t seed = 0;
  int iters = 0, threads = 1;
  double lr = 0.0, width_scale = 0.0;
  std::string arch, out_dir;
  app.add_option("task", task, "denoise | inpaint | separate | benchmark | gradcheck")
      ->required()
      ->check(CLI::IsMember({"denoise", "inpaint", "separate", "benchmark", "gradcheck"}));
  app.add_option("--config", config_path, "JSON experiment description");
  auto* o_seed = app.add_option("--seed", seed, "single run seed (replaces seeds)");
  auto* o_iters = app.add_option("--iters", iters, "optimization iterations");
  auto* o_lr = app.add_option("--lr", lr, "ADAM learning rate");
  auto* o_arch = app.add_option("--arch", arch, "conv | dilated | dilated-exp | dilated-exp-dense");
  auto* o_width = app.add_option("--width-scale", width_scale, "multiplier on the base filter counts");
  auto* o_out = app.add_option("--out", out_dir, "output directory");
  auto* o_threads = app.add_option("--threads", threads, "independent runs executed in parallel")->envname("DAP_THREADS");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cout << error_document("usage", e.what()).dump() << "\n";
    return 2;
  }

  ExperimentConfig cfg;
  try {
    json doc = json::object();
    if (!config_path.empty()) doc = load_json(config_path);
    if (doc.is_object()) doc["task"] = task;
    cfg = parse_config(doc);
    Overrides o;
    if (*o_seed) o.seed = seed;
    if (*o_iters) o.iterations = iters;
    if (*o_lr) o.lr = lr;
    if (*o_arch) o.arch = arch;
    if (*o_width) o.width_scale = width_scale;
    if (*o_out) o.out_dir = out_dir;
    if (*o_threads) o.threads = threads;
    apply_overrides(cfg, o);
    validate(cfg);
  } catch (const ConfigError& e) {
    std::cout << error_document(e.kind(), e.what()).dump() << "\n";
    return 2;
  }

  if (cfg.task == Task::GradCheck) return run_gradcheck(cfg);

  try {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    write_text(cfg.out_dir / "config.json", to_json(cfg).dump(2) + "\n");
    const ExperimentResult r = run_experiment(cfg, std::cerr);
    if (!r.ordering_ok) std::cerr << "warning: dilated-exp-dense ranks below plain conv (see benchmark.md)\n";
    std::cout << "wrote results to " << cfg.out_dir.string() << "\n";
  } catch (const ConfigError& e) {
    std::cout << error_document(e.kind(), e.what()).dump() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cout << error_document("numeric", e.what()).dump() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cout << error_document("validation", e.what()).dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cout << error_document("runtime", e.what()).dump() << "\n";
    return 1;
  }
  return 0;
}

} // namespace dap::cli
