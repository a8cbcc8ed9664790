#include "spev/bench.hpp"

#include <chrono>
#include <ctime>
#include <exception>
#include <iomanip>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "spev/async_layers.hpp"
#include "spev/error.hpp"
#include "spev/random.hpp"
#include "spev/synth.hpp"

namespace spev {

OpCount ProfileReport::total_ops() const {
  OpCount t;
  for (const auto& k : kinds) t += k.ops;
  return t;
}

double ProfileReport::total_seconds() const {
  double t = 0;
  for (const auto& k : kinds) t += k.seconds;
  return t;
}

ProfileReport ProfileReport::without_timing() const {
  ProfileReport r = *this;
  r.started_at.clear();
  r.wall_seconds = 0;
  for (auto& k : r.kinds) k.seconds = 0;
  for (auto& s : r.stages) s.seconds = 0;
  return r;
}

ProfileReport& ProfileReport::merge(const ProfileReport& other) {
  if (other.stages.size() != stages.size() || other.kinds.size() != kinds.size()) {
    throw ValidationError("cannot merge profile reports of different pipelines");
  }
  samples += other.samples;
  wall_seconds += other.wall_seconds;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    stages[i].seconds += other.stages[i].seconds;
    stages[i].ops += other.stages[i].ops;
  }
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    kinds[i].seconds += other.kinds[i].seconds;
    kinds[i].ops += other.kinds[i].ops;
  }
  return *this;
}

namespace {

using Clock = std::chrono::steady_clock;

class StageAccumulator final : public StageObserver {
 public:
  explicit StageAccumulator(std::vector<StageTotals>& stages) : stages_(stages) {}
  void on_stage(std::size_t i, double seconds, const OpCount& ops) override {
    stages_[i].seconds += seconds;
    stages_[i].ops += ops;
  }

 private:
  std::vector<StageTotals>& stages_;
};

std::vector<StageTotals> empty_stages(const Pipeline& p) {
  std::vector<StageTotals> out;
  for (std::size_t i = 0; i < p.stages.size(); ++i) {
    out.push_back({i, p.stages[i].layer, stage_kind_name(p.backend, p.stages[i]), 0.0, {}});
  }
  return out;
}

std::vector<KindTotals> group_kinds(const std::vector<StageTotals>& stages) {
  std::vector<KindTotals> kinds;
  for (const auto& s : stages) {
    auto it = std::find_if(kinds.begin(), kinds.end(), [&](const KindTotals& k) { return k.kind == s.kind; });
    if (it == kinds.end()) {
      kinds.push_back({s.kind, s.seconds, s.ops});
    } else {
      it->seconds += s.seconds;
      it->ops += s.ops;
    }
  }
  return kinds;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void check_sample_dims(const Pipeline& p, std::span<const EventStream> samples) {
  if (p.spec.input.channels != 2) {
    throw ValidationError("profiling event samples needs a 2-channel network input");
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].width() != p.spec.input.width || samples[i].height() != p.spec.input.height) {
      throw ValidationError("sample " + std::to_string(i) + " is " + std::to_string(samples[i].width()) + "x" +
                            std::to_string(samples[i].height()) + ", network input is " +
                            std::to_string(p.spec.input.width) + "x" + std::to_string(p.spec.input.height));
    }
  }
}

void run_range(const Pipeline& p, const WeightStore& ws, std::span<const EventStream> samples,
               const ProfileOptions& opt, std::vector<StageTotals>& stages) {
  StageAccumulator acc(stages);
  if (p.backend == Backend::async) {
    for (const EventStream& s : samples) {
      const auto seqs = split_equal_time(s, opt.sequences);
      async_run(p, ws, seqs, &acc);
    }
    return;
  }
  std::vector<DenseGrid> inputs;
  inputs.reserve(samples.size());
  for (const EventStream& s : samples) inputs.push_back(histogram(s, s.width(), s.height()));
  for (std::size_t begin = 0; begin < inputs.size(); begin += static_cast<std::size_t>(opt.batch_size)) {
    const std::size_t n = std::min(static_cast<std::size_t>(opt.batch_size), inputs.size() - begin);
    forward_batch(p, ws, std::span<const DenseGrid>(inputs).subspan(begin, n), &acc);
  }
}

}  // namespace

ProfileReport profile(const Pipeline& p, const WeightStore& ws, std::span<const EventStream> samples,
                      ProfileOptions options) {
  if (options.batch_size < 1 || options.sequences < 1 || options.threads < 1) {
    throw ValidationError("profile: batch size, sequence count and threads must be >= 1");
  }
  check_sample_dims(p, samples);
  check_compatible(ws, p.spec);
  ProfileReport report;
  report.backend = std::string(to_string(p.backend));
  report.batch_size = options.batch_size;
  report.sequences = options.sequences;
  report.threads = options.threads;
  report.samples = samples.size();
  report.started_at = utc_now();
  report.stages = empty_stages(p);

  const auto t0 = Clock::now();
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(options.threads), samples.size());
  if (workers <= 1) {
    run_range(p, ws, samples, options, report.stages);
  } else {
    std::vector<std::vector<StageTotals>> partial(workers, report.stages);
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    const std::size_t chunk = (samples.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = std::min(samples.size(), w * chunk);
      const std::size_t n = std::min(chunk, samples.size() - begin);
      pool.emplace_back([&, w, begin, n] {
        try {
          run_range(p, ws, samples.subspan(begin, n), options, partial[w]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (const auto& part : partial) {
      for (std::size_t i = 0; i < part.size(); ++i) {
        report.stages[i].seconds += part[i].seconds;
        report.stages[i].ops += part[i].ops;
      }
    }
  }
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  report.kinds = group_kinds(report.stages);
  return report;
}

SweepResult sweep_sequences(const Pipeline& async, const WeightStore& ws, std::span<const EventStream> samples,
                            std::span<const int> counts) {
  if (async.backend != Backend::async) throw ValidationError("sweep_sequences needs an async pipeline");
  check_sample_dims(async, samples);
  check_compatible(ws, async.spec);
  Pipeline sync = async;
  sync.backend = Backend::sparse;
  std::vector<std::vector<std::uint64_t>> baseline;
  for (const EventStream& s : samples) {
    baseline.push_back(sync_sites_processed(sync, ws, histogram(s, s.width(), s.height())));
  }

  SweepResult result;
  for (const int count : counts) {
    if (count < 1) throw ValidationError("sweep_sequences: sequence counts must be >= 1");
    SweepPoint point;
    point.sequences = count;
    point.report.backend = std::string(to_string(async.backend));
    point.report.sequences = count;
    point.report.samples = samples.size();
    point.report.started_at = utc_now();
    point.report.stages = empty_stages(async);
    point.async_sites.assign(async.stages.size(), 0);
    point.sync_sites.assign(async.stages.size(), 0);
    StageAccumulator acc(point.report.stages);
    const auto t0 = Clock::now();
    for (std::size_t n = 0; n < samples.size(); ++n) {
      const auto seqs = split_equal_time(samples[n], count);
      const AsyncRunResult run = async_run(async, ws, seqs, &acc);
      for (std::size_t st = 0; st < async.stages.size(); ++st) {
        std::uint64_t total = 0;
        for (const auto& per_seq : run.processed) total += per_seq[st];
        point.async_sites[st] += total;
        point.sync_sites[st] += baseline[n][st];
        if (!async.stages[st].sparse) continue;
        const std::uint64_t lo = baseline[n][st];
        const std::uint64_t hi = lo * static_cast<std::uint64_t>(count);
        if (total < lo || total > hi) {
          result.violations.push_back("n_seq " + std::to_string(count) + ", sample " + std::to_string(n) +
                                      ", stage " + std::to_string(st) + " (" + point.report.stages[st].kind +
                                      "): N_async " + std::to_string(total) + " outside [" + std::to_string(lo) +
                                      ", " + std::to_string(hi) + "]");
        }
      }
    }
    point.report.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    point.report.kinds = group_kinds(point.report.stages);
    result.points.push_back(std::move(point));
  }
  return result;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  throw ValidationError("unknown report format '" + std::string(name) + "' (expected json or csv)");
}

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kSchema = "spev-profile/1";

ordered_json ops_json(const OpCount& ops) {
  ordered_json j;
  j["multiply_accumulates"] = ops.multiply_accumulates;
  j["sites_processed"] = ops.sites_processed;
  j["rulebook_pairs"] = ops.rulebook_pairs;
  return j;
}

OpCount ops_from(const ordered_json& j) {
  return {j.at("multiply_accumulates").get<std::uint64_t>(), j.at("sites_processed").get<std::uint64_t>(),
          j.at("rulebook_pairs").get<std::uint64_t>()};
}

std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string emit_report(const ProfileReport& r, ReportFormat format) {
  if (format == ReportFormat::csv) {
    std::ostringstream os;
    os << "metric,backend,batch_size,sequences,samples";
    for (const auto& k : r.kinds) os << ',' << k.kind;
    os << '\n';
    const auto row = [&](const char* metric, auto value) {
      os << metric << ',' << r.backend << ',' << r.batch_size << ',' << r.sequences << ',' << r.samples;
      for (const auto& k : r.kinds) os << ',' << value(k);
      os << '\n';
    };
    row("seconds", [](const KindTotals& k) { return csv_number(k.seconds); });
    row("multiply_accumulates", [](const KindTotals& k) { return k.ops.multiply_accumulates; });
    row("sites_processed", [](const KindTotals& k) { return k.ops.sites_processed; });
    row("rulebook_pairs", [](const KindTotals& k) { return k.ops.rulebook_pairs; });
    return os.str();
  }

  ordered_json j;
  j["schema"] = kSchema;
  j["backend"] = r.backend;
  j["batch_size"] = r.batch_size;
  j["sequences"] = r.sequences;
  j["threads"] = r.threads;
  j["samples"] = r.samples;
  j["seed"] = r.seed;
  j["density"] = r.density;
  j["started_at"] = r.started_at;
  j["wall_seconds"] = r.wall_seconds;
  j["kinds"] = ordered_json::array();
  for (const auto& k : r.kinds) {
    ordered_json e;
    e["kind"] = k.kind;
    e["seconds"] = k.seconds;
    e.update(ops_json(k.ops));
    j["kinds"].push_back(std::move(e));
  }
  j["stages"] = ordered_json::array();
  for (const auto& s : r.stages) {
    ordered_json e;
    e["stage"] = s.stage;
    e["layer"] = s.layer;
    e["kind"] = s.kind;
    e["seconds"] = s.seconds;
    e.update(ops_json(s.ops));
    j["stages"].push_back(std::move(e));
  }
  ordered_json totals;
  totals["seconds"] = r.total_seconds();
  totals.update(ops_json(r.total_ops()));
  j["totals"] = std::move(totals);
  return j.dump(2) + "\n";
}

ProfileReport parse_report_json(std::string_view text) {
  try {
    const auto j = ordered_json::parse(text);
    if (j.at("schema").get<std::string>() != kSchema) {
      throw FormatError("profile report: unsupported schema '" + j.at("schema").get<std::string>() + "'");
    }
    ProfileReport r;
    r.backend = j.at("backend").get<std::string>();
    r.batch_size = j.at("batch_size").get<int>();
    r.sequences = j.at("sequences").get<int>();
    r.threads = j.at("threads").get<int>();
    r.samples = j.at("samples").get<std::uint64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.density = j.at("density").get<double>();
    r.started_at = j.at("started_at").get<std::string>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    for (const auto& e : j.at("kinds")) {
      r.kinds.push_back({e.at("kind").get<std::string>(), e.at("seconds").get<double>(), ops_from(e)});
    }
    for (const auto& e : j.at("stages")) {
      r.stages.push_back({e.at("stage").get<std::size_t>(), e.at("layer").get<int>(), e.at("kind").get<std::string>(),
                          e.at("seconds").get<double>(), ops_from(e)});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("profile report: ") + e.what());
  }
}

std::vector<EventStream> random_samples(int width, int height, double density, std::uint64_t seed,
                                        std::size_t count) {
  Rng rng(seed);
  std::vector<EventStream> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(random_event_sample(width, height, density, rng));
  return out;
}

}  // namespace spev
