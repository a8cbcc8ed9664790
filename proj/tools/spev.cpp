// spev: event synthesis, histogram slicing, inference, evaluation and
// profiling on one command line.

#include <algorithm>
#include <climits>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "spev/async_layers.hpp"
#include "spev/bench.hpp"
#include "spev/dataio.hpp"
#include "spev/detection.hpp"
#include "spev/equivalence.hpp"
#include "spev/error.hpp"
#include "spev/events.hpp"
#include "spev/pipeline.hpp"
#include "spev/synth.hpp"
#include "spev/weights.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitFormat = 2;

bool has_image_extension(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

void write_file(const fs::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw spev::FormatError("cannot open '" + path.string() + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw spev::FormatError("failed writing '" + path.string() + "'");
}

spev::EventStream load_events(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw spev::FormatError("cannot open '" + path.string() + "'");
  return spev::read_events(in);
}

spev::NetworkSpec load_spec(const fs::path& path) { return spev::parse_network_spec(spev::read_file_text(path)); }

spev::WeightStore load_or_init_weights(const std::string& path, const spev::NetworkSpec& spec,
                                       std::uint64_t seed) {
  if (path.empty()) return spev::random_weights(spec, seed);
  return spev::load_weights(spev::read_file_bytes(path), spec);
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string frames;
  std::int64_t dt_us = 0;
  double threshold = spev::kDefaultContrastThreshold;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.frames)) {
    if (e.is_regular_file() && has_image_extension(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::int64_t> ts;
  std::vector<spev::DenseGrid> frames;
  for (std::size_t i = 0; i < files.size(); ++i) {
    ts.push_back(static_cast<std::int64_t>(i) * a.dt_us);
    frames.push_back(spev::load_pnm(spev::read_file_bytes(files[i])));
  }
  const auto events = spev::synthesize(spev::FrameSequence(std::move(ts), std::move(frames)),
                                       spev::ContrastThreshold(a.threshold));
  std::ostringstream out;
  spev::write_events(out, events);
  write_file(a.out, out.str());
  std::cerr << "wrote " << events.size() << " events from " << files.size() << " frames\n";
  return 0;
}

// --- hist --------------------------------------------------------------------

struct HistArgs {
  std::string events;
  int width = 0;
  int height = 0;
  std::int64_t window_us = 0;
  std::string out_dir;
};

int run_hist(const HistArgs& a) {
  auto stream = load_events(a.events);
  if (stream.width() != a.width || stream.height() != a.height) stream = spev::rescale(stream, a.width, a.height);
  fs::create_directories(a.out_dir);
  const auto windows = spev::slice_windows(stream, a.window_us);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto grid = spev::sparsify(spev::histogram(windows[i], a.width, a.height));
    std::ostringstream name;
    name << "window_" << std::setw(6) << std::setfill('0') << i << ".hist";
    std::ostringstream body;
    spev::write_sparse_grid(body, grid);
    write_file(fs::path(a.out_dir) / name.str(), body.str());
  }
  std::cerr << "wrote " << windows.size() << " histograms\n";
  return 0;
}

// --- infer -------------------------------------------------------------------

struct InferArgs {
  std::string spec;
  std::string weights;
  std::string backend = "sparse";
  int sequences = 1;
  std::string input;
  double conf = 0.2;
  double iou = 0.5;
  int image_width = 0;
  int image_height = 0;
};

ordered_json detection_json(const spev::Detection& d, const spev::ClassTable& classes) {
  ordered_json j;
  j["class"] = d.class_id < classes.size() ? classes.name_of(d.class_id) : "class_" + std::to_string(d.class_id);
  j["class_id"] = d.class_id;
  j["score"] = d.score;
  j["xmin"] = d.xmin;
  j["ymin"] = d.ymin;
  j["xmax"] = d.xmax;
  j["ymax"] = d.ymax;
  return j;
}

int run_infer(const InferArgs& a) {
  const auto spec = load_spec(a.spec);
  const auto ws = spev::load_weights(spev::read_file_bytes(a.weights), spec);
  const auto backend = spev::parse_backend(a.backend);
  const auto pipeline = spev::lower(spec, backend);
  const fs::path input(a.input);
  const int in_w = spec.input.width;
  const int in_h = spec.input.height;

  std::vector<float> raw;
  if (input.extension() == ".hist") {
    std::ifstream in(input);
    if (!in) throw spev::FormatError("cannot open '" + input.string() + "'");
    raw = spev::forward(pipeline, ws, spev::densify(spev::read_sparse_grid(in)));
  } else if (has_image_extension(input)) {
    raw = spev::forward(pipeline, ws, spev::load_pnm(spev::read_file_bytes(input)));
  } else {
    auto stream = load_events(input);
    if (stream.width() != in_w || stream.height() != in_h) stream = spev::rescale(stream, in_w, in_h);
    if (backend == spev::Backend::async) {
      raw = spev::async_run(pipeline, ws, spev::split_equal_time(stream, a.sequences)).raw;
    } else {
      raw = spev::forward(pipeline, ws, spev::histogram(stream, in_w, in_h));
    }
  }
  const spev::ImageDims dims{a.image_width > 0 ? a.image_width : in_w, a.image_height > 0 ? a.image_height : in_h};
  const auto dets = spev::nms(spev::decode(raw, spec.head, a.conf, dims), a.iou);
  const spev::ClassTable classes;
  for (const auto& d : dets) std::cout << detection_json(d, classes).dump() << '\n';
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string pred;
  std::string gt;
  int width = 0;
  int height = 0;
  double iou = 0.5;
};

std::vector<spev::Detection> read_detections(const fs::path& path, const spev::ClassTable& classes) {
  std::vector<spev::Detection> out;
  std::istringstream in(spev::read_file_text(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = ordered_json::parse(line);
      spev::Detection d;
      if (j.contains("class_id")) {
        d.class_id = j.at("class_id").get<int>();
      } else {
        const auto name = j.at("class").get<std::string>();
        const auto id = classes.id_of(name);
        if (!id) throw spev::FormatError(path.string() + " line " + std::to_string(line_no) + ": unknown class '" + name + "'");
        d.class_id = *id;
      }
      d.score = j.at("score").get<double>();
      d.xmin = j.at("xmin").get<double>();
      d.ymin = j.at("ymin").get<double>();
      d.xmax = j.at("xmax").get<double>();
      d.ymax = j.at("ymax").get<double>();
      out.push_back(d);
    } catch (const nlohmann::json::exception& e) {
      throw spev::FormatError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

int run_eval(const EvalArgs& a) {
  const spev::ClassTable classes;
  // Without explicit dims the label boxes are used unclamped.
  const spev::ImageDims dims{a.width > 0 ? a.width : INT_MAX, a.height > 0 ? a.height : INT_MAX};
  std::map<std::string, std::pair<fs::path, fs::path>> samples;
  for (const auto& e : fs::directory_iterator(a.gt)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") samples[e.path().stem().string()].second = e.path();
  }
  for (const auto& e : fs::directory_iterator(a.pred)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".jsonl" || ext == ".json")) {
      samples[e.path().stem().string()].first = e.path();
    }
  }
  std::vector<std::vector<spev::Detection>> dets;
  std::vector<std::vector<spev::GroundTruthBox>> gts;
  for (const auto& [stem, files] : samples) {
    dets.push_back(files.first.empty() ? std::vector<spev::Detection>{} : read_detections(files.first, classes));
    gts.push_back(files.second.empty() ? std::vector<spev::GroundTruthBox>{}
                                       : spev::parse_kitti_labels(spev::read_file_text(files.second), dims, classes));
  }
  const auto result = spev::evaluate_map(dets, gts, classes.size(), a.iou);
  ordered_json j;
  j["samples"] = samples.size();
  j["iou"] = a.iou;
  j["classes"] = ordered_json::array();
  for (const auto& c : result.per_class) {
    ordered_json e;
    e["class"] = classes.name_of(c.class_id);
    e["class_id"] = c.class_id;
    e["ground_truths"] = c.ground_truths;
    e["ap"] = c.ap;
    j["classes"].push_back(std::move(e));
  }
  j["map"] = result.map;
  std::cout << j.dump(2) << '\n';
  return 0;
}

// --- bench -------------------------------------------------------------------

struct BenchArgs {
  std::string spec;
  std::string weights;
  std::string backend = "sparse";
  std::size_t samples = 16;
  int batch = 1;
  int sequences = 1;
  int threads = 1;
  double density = 0.05;
  std::uint64_t seed = 1;
  std::string format = "json";
  std::string out;
};

int run_bench(const BenchArgs& a) {
  const auto spec = load_spec(a.spec);
  const auto ws = load_or_init_weights(a.weights, spec, a.seed);
  const auto pipeline = spev::lower(spec, spev::parse_backend(a.backend));
  const auto format = spev::parse_report_format(a.format);
  const auto samples = spev::random_samples(spec.input.width, spec.input.height, a.density, a.seed, a.samples);
  auto report = spev::profile(pipeline, ws, samples, {a.batch, a.sequences, a.threads});
  report.seed = a.seed;
  report.density = a.density;
  const auto text = spev::emit_report(report, format);
  if (a.out.empty() || a.out == "-") {
    std::cout << text;
  } else {
    write_file(a.out, text);
  }
  return 0;
}

// --- equiv-check -------------------------------------------------------------

struct EquivArgs {
  std::string spec;
  std::uint64_t seed = 1;
  int trials = 10;
};

int run_equiv(const EquivArgs& a) {
  const auto spec = load_spec(a.spec);
  const auto r = spev::check_equivalence(spec, a.seed, a.trials);
  std::cout << "trials: " << r.trials << "\n"
            << "async vs sparse max |diff|: " << r.async_vs_sparse << "\n"
            << "per-layer vs dense max |diff|: " << r.layer_vs_dense << "\n";
  if (r.dense_vs_sparse) {
    std::cout << "dense vs full-mode sparse max |diff|: " << *r.dense_vs_sparse << "\n";
  } else {
    std::cout << "dense vs full-mode sparse: skipped (pooling over signed activations)\n";
  }
  for (const auto& f : r.failures) std::cout << "MISMATCH " << f << "\n";
  std::cout << (r.passed() ? "PASS" : "FAIL") << "\n";
  return r.passed() ? 0 : kExitValidation;
}

// --- init-weights ------------------------------------------------------------

struct InitArgs {
  std::string spec;
  std::uint64_t seed = 1;
  bool zero_preserving = false;
  std::string out;
};

int run_init(const InitArgs& a) {
  const auto spec = load_spec(a.spec);
  const auto ws = spev::random_weights(spec, a.seed, {.zero_preserving = a.zero_preserving});
  const auto bytes = spev::save_weights(ws, spec);
  write_file(a.out, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse and asynchronous event-camera detection toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Convert a frame directory into an event stream");
  s->add_option("--frames", synth.frames, "Directory of PGM/PPM frames (lexicographic order)")->required();
  s->add_option("--dt-us", synth.dt_us, "Frame interval in microseconds")->required()->check(CLI::PositiveNumber);
  s->add_option("--threshold", synth.threshold, "Contrast threshold")->capture_default_str();
  s->add_option("--out", synth.out, "Output event file")->required();

  HistArgs hist;
  auto* h = app.add_subcommand("hist", "Slice events into windows and write per-window histograms");
  h->add_option("--events", hist.events, "Event file")->required();
  h->add_option("--width", hist.width, "Histogram width")->required()->check(CLI::PositiveNumber);
  h->add_option("--height", hist.height, "Histogram height")->required()->check(CLI::PositiveNumber);
  h->add_option("--window-us", hist.window_us, "Window length in microseconds")->required()->check(CLI::PositiveNumber);
  h->add_option("--out-dir", hist.out_dir, "Output directory")->required();

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Run a network on one input and print detections as JSON lines");
  i->add_option("--spec", infer.spec, "Network spec file")->required();
  i->add_option("--weights", infer.weights, "Weight file")->required();
  i->add_option("--backend", infer.backend, "dense, sparse or async")->capture_default_str();
  i->add_option("--sequences", infer.sequences, "Async sequence count")->capture_default_str()->check(CLI::PositiveNumber);
  i->add_option("--input", infer.input, "Event file, .hist histogram or PGM/PPM image")->required();
  i->add_option("--conf", infer.conf, "Score threshold")->capture_default_str();
  i->add_option("--iou", infer.iou, "NMS IoU threshold")->capture_default_str();
  i->add_option("--image-width", infer.image_width, "Output box scale (default: network width)");
  i->add_option("--image-height", infer.image_height, "Output box scale (default: network height)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Per-class AP and mAP of predictions against KITTI labels");
  e->add_option("--pred", eval.pred, "Directory of <stem>.jsonl detections")->required();
  e->add_option("--gt", eval.gt, "Directory of <stem>.txt KITTI labels")->required();
  e->add_option("--width", eval.width, "Image width for clamping labels");
  e->add_option("--height", eval.height, "Image height for clamping labels");
  e->add_option("--iou", eval.iou, "Matching IoU threshold")->capture_default_str();

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Profile a backend on seeded synthetic samples");
  b->add_option("--spec", bench.spec, "Network spec file")->required();
  b->add_option("--weights", bench.weights, "Weight file (default: seeded random weights)");
  b->add_option("--backend", bench.backend, "dense, sparse or async")->capture_default_str();
  b->add_option("--samples", bench.samples, "Sample count")->capture_default_str();
  b->add_option("--batch", bench.batch, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
  b->add_option("--sequences", bench.sequences, "Async sequence count")->capture_default_str()->check(CLI::PositiveNumber);
  b->add_option("--threads", bench.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  b->add_option("--density", bench.density, "Active-pixel density")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  b->add_option("--seed", bench.seed, "Sample and weight seed")->capture_default_str();
  b->add_option("--format", bench.format, "json or csv")->capture_default_str();
  b->add_option("--out", bench.out, "Report file (default: stdout)");

  EquivArgs equiv;
  auto* q = app.add_subcommand("equiv-check", "Randomized dense/sparse/async agreement check");
  q->add_option("--spec", equiv.spec, "Network spec file")->required();
  q->add_option("--seed", equiv.seed, "Seed")->capture_default_str();
  q->add_option("--trials", equiv.trials, "Trial count")->capture_default_str()->check(CLI::PositiveNumber);

  InitArgs init;
  auto* w = app.add_subcommand("init-weights", "Write seeded random weights for a spec");
  w->add_option("--spec", init.spec, "Network spec file")->required();
  w->add_option("--seed", init.seed, "Seed")->capture_default_str();
  w->add_flag("--zero-preserving", init.zero_preserving, "Zero biases and batchnorm offsets");
  w->add_option("--out", init.out, "Output weight file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*s) return run_synth(synth);
    if (*h) return run_hist(hist);
    if (*i) return run_infer(infer);
    if (*e) return run_eval(eval);
    if (*b) return run_bench(bench);
    if (*q) return run_equiv(equiv);
    if (*w) return run_init(init);
  } catch (const spev::ValidationError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitValidation;
  } catch (const spev::FormatError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitFormat;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitFormat;
  }
  return kExitValidation;
}
