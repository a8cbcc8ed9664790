#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spev/events.hpp"
#include "spev/op_count.hpp"
#include "spev/pipeline.hpp"
#include "spev/weights.hpp"

namespace spev {

struct KindTotals {
  std::string kind;
  double seconds = 0;
  OpCount ops;

  friend bool operator==(const KindTotals&, const KindTotals&) = default;
};

struct StageTotals {
  std::size_t stage = 0;
  int layer = -1;
  std::string kind;
  double seconds = 0;
  OpCount ops;

  friend bool operator==(const StageTotals&, const StageTotals&) = default;
};

struct ProfileReport {
  std::string backend;
  int batch_size = 1;
  int sequences = 1;
  int threads = 1;
  std::uint64_t samples = 0;
  // Caller-supplied provenance of the sample corpus.
  std::uint64_t seed = 0;
  double density = 0;
  // Wall-clock metadata.
  std::string started_at;
  double wall_seconds = 0;
  // Kinds in order of first appearance in the pipeline.
  std::vector<KindTotals> kinds;
  std::vector<StageTotals> stages;

  OpCount total_ops() const;
  double total_seconds() const;
  // Copy with every timing field zeroed; two seeded runs compare equal here.
  ProfileReport without_timing() const;
  // Adds another report's counters (same pipeline) into this one.
  ProfileReport& merge(const ProfileReport& other);

  friend bool operator==(const ProfileReport&, const ProfileReport&) = default;
};

struct ProfileOptions {
  int batch_size = 1;
  // Async backend only: each sample is split into this many equal-time slices.
  int sequences = 1;
  // > 1 distributes contiguous sample ranges over workers; reports merge
  // additively. Timings are only comparable within one setting.
  int threads = 1;
};

// Per-stage exclusive times and op counts over all samples. Sample
// histograms are built before timing starts. Dense and sparse backends run
// layer-major batches of batch_size; the async backend runs samples one at a
// time. Throws ValidationError if batch_size, sequences or threads < 1.
ProfileReport profile(const Pipeline& p, const WeightStore& ws, std::span<const EventStream> samples,
                      ProfileOptions options = {});

struct SweepPoint {
  int sequences = 1;
  ProfileReport report;
  // Per stage, summed over samples: async processed sites and the
  // synchronous sparse baseline.
  std::vector<std::uint64_t> async_sites;
  std::vector<std::uint64_t> sync_sites;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  // One entry per (count, sample, stage) where
  // N_sync <= N_async <= count * N_sync fails; empty when the bound holds.
  std::vector<std::string> violations;

  bool bound_holds() const { return violations.empty(); }
};

// Runs the async pipeline at each sequence count and checks the op-count
// sandwich per sample and sparse stage against the synchronous sparse run.
SweepResult sweep_sequences(const Pipeline& async, const WeightStore& ws, std::span<const EventStream> samples,
                            std::span<const int> counts);

enum class ReportFormat { json, csv };

ReportFormat parse_report_format(std::string_view name);

// JSON: object with fixed key order (schema "spev-profile/1").
// CSV: header `metric,backend,batch_size,sequences,samples,<kind>...` and one
// row per metric (seconds, multiply_accumulates, sites_processed,
// rulebook_pairs).
std::string emit_report(const ProfileReport& report, ReportFormat format);
inline constexpr int kCsvMetadataColumns = 5;

// Reads the JSON form back; throws FormatError on schema violations.
ProfileReport parse_report_json(std::string_view text);

// Samples of `width` x `height` with the given active-pixel density, drawn
// from one seeded generator.
std::vector<EventStream> random_samples(int width, int height, double density, std::uint64_t seed, std::size_t count);

}  // namespace spev
