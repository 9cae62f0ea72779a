// ovldiar: overlap-aware speaker diarization command line.
#include <CLI11.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "ovl/corpus.h"
#include "ovl/error.h"
#include "ovl/pipeline.h"

namespace fs = std::filesystem;
using namespace ovl;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception is
// rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

PipelineConfig config_from(const std::string& path) {
  return path.empty() ? PipelineConfig{} : load_config(path);
}

std::vector<ManifestEntry> entries_in(const std::string& manifest, Partition partition) {
  std::vector<ManifestEntry> out;
  for (auto& e : read_manifest(manifest)) {
    if (e.partition == partition) out.push_back(std::move(e));
  }
  return out;
}

std::string uri_of(const std::string& audio_path) { return fs::path(audio_path).stem().string(); }

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  int speakers = 2;
  double duration = 60.0;
  double overlap = 0.19;
  std::uint64_t seed = 0;
  std::string out;
  int count = 1;
  std::string prefix = "synth";
  std::string partition = "train";
  std::string manifest;
  double baseline_swap = -1.0;
  bool vad = false;
  std::string encoding = "float32";
};

void cmd_synth(const SynthArgs& a, unsigned jobs) {
  if (a.count < 1) throw UsageError("--count must be at least 1");
  const Partition partition = parse_partition(a.partition);
  fs::create_directories(a.out);
  const WavEncoding encoding = a.encoding == "pcm16" ? WavEncoding::pcm16 : WavEncoding::float32;
  std::vector<ManifestEntry> written(static_cast<std::size_t>(a.count));
  parallel_for(written.size(), jobs, [&](std::size_t i) {
    SyntheticSpec spec;
    spec.n_speakers = a.speakers;
    spec.duration = a.duration;
    spec.overlap_fraction = a.overlap;
    spec.seed = a.seed + i;
    spec.uri = a.count == 1 ? a.prefix : a.prefix + "_" + std::to_string(i);
    const Conversation c = generate_conversation(spec);
    const fs::path base = fs::path(a.out) / spec.uri;
    ManifestEntry& e = written[i];
    e.partition = partition;
    e.audio_path = base.string() + ".wav";
    e.reference_rttm_path = base.string() + ".rttm";
    write_wav(c.recording.audio, e.audio_path, encoding);
    write_rttm(c.recording.reference, e.reference_rttm_path);
    write_rttm_timeline(c.overlap, spec.uri, "overlap", base.string() + ".overlap.rttm");
    if (a.vad) {
      e.vad_path = base.string() + ".vad.rttm";
      write_rttm_timeline(c.recording.reference.support(), spec.uri, "speech", e.vad_path);
    }
    if (a.baseline_swap >= 0.0) {
      Annotation baseline = degrade_reference(c.recording.reference, a.baseline_swap, spec.seed);
      baseline.set_uri(spec.uri);
      write_rttm(baseline, base.string() + ".baseline.rttm");
    }
  });
  if (!a.manifest.empty()) {
    for (const auto& e : written) append_manifest(a.manifest, e);
  }
  for (const auto& e : written) std::cout << e.audio_path << '\n';
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string config;
  std::string model;
  std::string loss_trace;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
};

void cmd_train(const TrainArgs& a, unsigned jobs) {
  PipelineConfig config = config_from(a.config);
  if (a.epochs) config.training.epochs = *a.epochs;
  if (a.seed) config.training.seed = *a.seed;
  const auto entries = entries_in(a.manifest, Partition::train);
  if (entries.empty()) throw DataError("manifest '" + a.manifest + "' has no train entries");
  std::vector<Recording> corpus(entries.size());
  parallel_for(entries.size(), jobs, [&](std::size_t i) { corpus[i] = load_recording(entries[i]); });

  std::ofstream trace;
  if (!a.loss_trace.empty()) {
    trace.open(a.loss_trace);
    if (!trace) throw DataError("cannot write '" + a.loss_trace + "'");
    trace << "epoch,loss\n";
  }
  const TrainResult r = train(corpus, config.labeler, config.training, config.batches,
                              [&](std::size_t epoch, double loss) {
                                std::cerr << "epoch " << epoch + 1 << " loss " << loss << '\n';
                                if (trace) trace << epoch + 1 << ',' << loss << '\n';
                              });
  save_model(r.model, a.model);
}

// ---- detect -----------------------------------------------------------------

struct DetectArgs {
  std::string model;
  std::vector<std::string> audio;
  std::string manifest;
  std::string partition = "eval";
  std::string config;
  std::optional<double> threshold;
  bool tune = false;
  std::string dev_manifest;
  std::string format = "rttm";
  std::string out;
  std::string out_dir;
};

void write_detection(const Timeline& t, const std::string& uri, const std::string& format,
                     const std::string& path) {
  if (format == "csv") {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    write_timeline_csv(t, out);
  } else {
    write_rttm_timeline(t, uri, "overlap", path);
  }
}

void cmd_detect(const DetectArgs& a, unsigned jobs) {
  PipelineConfig config = config_from(a.config);
  const LabelerModel model = load_model(a.model);
  if (model.config.input_dim != config.detector_features.dim()) {
    throw UsageError("model input_dim does not match the detector feature configuration");
  }
  if (a.threshold && a.tune) throw UsageError("--threshold and --tune are exclusive");
  if (a.threshold) config.sliding.threshold = *a.threshold;
  if (a.tune) {
    if (a.dev_manifest.empty()) throw UsageError("--tune needs --dev");
    const auto dev = entries_in(a.dev_manifest, Partition::dev);
    if (dev.empty()) throw DataError("manifest '" + a.dev_manifest + "' has no dev entries");
    std::vector<ScoreSequence> scores(dev.size());
    std::vector<Timeline> refs(dev.size());
    parallel_for(dev.size(), jobs, [&](std::size_t i) {
      scores[i] = detect_scores(model, read_wav(dev[i].audio_path), config);
      refs[i] = overlap_regions(read_rttm(dev[i].reference_rttm_path));
    });
    const ThresholdTuning t = tune_threshold(scores, refs, config.target_precision);
    if (!t.attainable) {
      throw DataError("no threshold reaches " + std::to_string(config.target_precision) +
                      "% precision on the development set");
    }
    config.sliding.threshold = t.threshold;
    std::cerr << "threshold " << t.threshold << " dev precision " << t.precision << " recall "
              << t.recall << '\n';
  }

  std::vector<std::string> inputs = a.audio;
  if (!a.manifest.empty()) {
    for (const auto& e : entries_in(a.manifest, parse_partition(a.partition))) {
      inputs.push_back(e.audio_path);
    }
  }
  if (inputs.empty()) throw UsageError("nothing to detect: give --audio or --manifest");
  if (!a.out.empty() && inputs.size() != 1) throw UsageError("--out takes a single input");
  if (a.out.empty() && a.out_dir.empty()) throw UsageError("give --out or --out-dir");
  if (!a.out_dir.empty()) fs::create_directories(a.out_dir);
  const std::string ext = a.format == "csv" ? ".overlap.csv" : ".overlap.rttm";
  parallel_for(inputs.size(), jobs, [&](std::size_t i) {
    const std::string uri = uri_of(inputs[i]);
    const ScoreSequence s = detect_scores(model, read_wav(inputs[i]), config);
    const Timeline t = binarize(s, config.sliding);
    const std::string path = a.out.empty() ? (fs::path(a.out_dir) / (uri + ext)).string() : a.out;
    write_detection(t, uri, a.format, path);
  });
  std::cout << "threshold " << config.sliding.threshold << '\n';
}

// ---- resegment --------------------------------------------------------------

struct ResegArgs {
  std::string audio;
  std::string baseline;
  std::string vad;
  std::string overlap_rttm;
  std::string reference;
  std::string overlap = "detected";
  std::string assign = "posterior";
  std::string config;
  std::string out;
  std::string dump_q;
};

void cmd_resegment(const ResegArgs& a) {
  const PipelineConfig config = config_from(a.config);
  const OverlapSource overlap = parse_overlap_source(a.overlap);
  const AssignSource assign = parse_assign_source(a.assign);
  const Waveform audio = read_wav(a.audio);
  ResegmentInputs in;
  in.audio = &audio;
  in.baseline = read_rttm(a.baseline);
  in.baseline.set_uri(uri_of(a.audio));
  if (!a.reference.empty()) in.reference = read_rttm(a.reference);
  if (!a.vad.empty()) {
    in.vad = read_rttm_timeline(a.vad);
  } else {
    in.vad = in.baseline.support();
  }
  if (overlap == OverlapSource::detected) {
    if (a.overlap_rttm.empty()) throw UsageError("--overlap detected needs --overlap-rttm");
    in.detected_overlap = read_rttm_timeline(a.overlap_rttm);
  }
  const ResegmentOutcome r = run_resegmentation(in, config, overlap, assign);
  write_rttm(r.assignment.annotation, a.out);
  if (!a.dump_q.empty()) {
    std::ofstream q(a.dump_q);
    if (!q) throw DataError("cannot write '" + a.dump_q + "'");
    write_posteriors(r.posterior, q);
  }
  const auto& d = r.assignment.diagnostics;
  std::cerr << "voiced frames " << d.voiced_frames << ", overlap frames " << d.overlap_frames
            << ", two-speaker frames " << d.two_speaker_frames << ", overlap outside VAD "
            << d.overlap_frames_outside_vad << '\n';
}

// ---- score ------------------------------------------------------------------

struct ScoreArgs {
  std::vector<std::string> reference;
  std::vector<std::string> hypothesis;
  std::string mode = "der";
  std::string config;
  std::optional<double> collar;
  bool reference_timeline = false;
  std::string json;
};

// Pools every file's annotations by uri.
std::map<std::string, Annotation> load_all(const std::vector<std::string>& paths) {
  std::map<std::string, Annotation> out;
  for (const auto& p : paths) {
    for (auto& [uri, ann] : read_rttm_all(p)) {
      auto [it, inserted] = out.emplace(uri, ann);
      if (!inserted) {
        for (const auto& t : ann.turns()) it->second.add(t.segment, t.speaker);
      }
    }
  }
  return out;
}

void cmd_score(const ScoreArgs& a) {
  const PipelineConfig config = config_from(a.config);
  const double collar = a.collar.value_or(config.collar);
  const auto refs = load_all(a.reference);
  const auto hyps = load_all(a.hypothesis);
  if (refs.empty()) throw DataError("reference files contain no SPEAKER records");
  std::ofstream json_file;
  if (!a.json.empty()) {
    json_file.open(a.json);
    if (!json_file) throw DataError("cannot write '" + a.json + "'");
  }
  std::ostream& json = a.json.empty() ? std::cout : json_file;

  if (a.mode == "detection") {
    std::vector<DetectionReport> reports;
    for (const auto& [uri, ref] : refs) {
      const Timeline truth = a.reference_timeline ? ref.support() : overlap_regions(ref);
      const auto it = hyps.find(uri);
      const Timeline detected = it == hyps.end() ? Timeline{} : it->second.support();
      reports.push_back(precision_recall(truth, detected));
      json << to_json(reports.back(), uri) << '\n';
    }
    const DetectionReport total = aggregate(reports);
    json << to_json(total, "ALL") << '\n';
    std::cout << "precision " << total.precision << "% recall " << total.recall << "%"
              << (total.zero_detection ? " (nothing detected)" : "") << '\n';
    return;
  }
  if (a.mode != "der") throw UsageError("--mode must be der or detection");
  std::vector<std::pair<std::string, DerReport>> rows;
  std::vector<DerReport> reports;
  for (const auto& [uri, ref] : refs) {
    const auto it = hyps.find(uri);
    const DerReport r = der(ref, it == hyps.end() ? Annotation(uri) : it->second, collar);
    json << to_json(r, uri) << '\n';
    rows.emplace_back(uri, r);
    reports.push_back(r);
  }
  const DerReport total = aggregate(reports);
  json << to_json(total, "ALL") << '\n';
  rows.emplace_back("ALL", total);
  write_der_table(std::cout, rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Overlap-aware speaker diarization"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned jobs = 1;
  app.add_option("--jobs", jobs, "Files processed in parallel")->check(CLI::PositiveNumber);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate synthetic conversations");
  synth->add_option("--speakers", sa.speakers, "Speakers per conversation")->capture_default_str();
  synth->add_option("--duration", sa.duration, "Seconds per conversation")->capture_default_str();
  synth->add_option("--overlap", sa.overlap, "Overlapped share of speech")->capture_default_str();
  synth->add_option("--seed", sa.seed, "Seed of the first conversation")->capture_default_str();
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--count", sa.count, "Number of conversations (seeds seed..seed+count-1)")
      ->capture_default_str();
  synth->add_option("--prefix", sa.prefix, "File name prefix")->capture_default_str();
  synth->add_option("--partition", sa.partition, "Manifest partition: train, dev or eval")
      ->capture_default_str();
  synth->add_option("--manifest", sa.manifest, "Append entries to this manifest");
  synth->add_option("--baseline-swap", sa.baseline_swap,
                    "Also write a single-speaker baseline with this share of relabeled turns");
  synth->add_flag("--vad", sa.vad, "Also write an oracle VAD timeline");
  synth->add_option("--encoding", sa.encoding, "float32 or pcm16")
      ->check(CLI::IsMember({"float32", "pcm16"}))
      ->capture_default_str();

  TrainArgs ta;
  std::size_t epochs = 0;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train the overlap detector");
  train_cmd->add_option("--manifest", ta.manifest, "Manifest; train entries are used")->required();
  train_cmd->add_option("--config", ta.config, "JSON configuration");
  train_cmd->add_option("--model", ta.model, "Output model file")->required();
  train_cmd->add_option("--loss-trace", ta.loss_trace, "CSV of per-epoch mean loss");
  auto* epochs_opt = train_cmd->add_option("--epochs", epochs, "Override training.epochs");
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Override training.seed");

  DetectArgs da;
  double threshold = 0.5;
  auto* detect = app.add_subcommand("detect", "Detect overlapped speech");
  detect->add_option("--model", da.model, "Model file")->required();
  detect->add_option("--audio", da.audio, "Input WAV file(s)");
  detect->add_option("--manifest", da.manifest, "Take inputs from a manifest");
  detect->add_option("--partition", da.partition, "Manifest partition to process")
      ->capture_default_str();
  detect->add_option("--config", da.config, "JSON configuration");
  auto* threshold_opt = detect->add_option("--threshold", threshold, "Decision threshold")
                            ->check(CLI::Range(0.0, 1.0));
  detect->add_flag("--tune", da.tune, "Tune the threshold for the target precision on --dev");
  detect->add_option("--dev", da.dev_manifest, "Manifest whose dev entries drive --tune");
  detect->add_option("--format", da.format, "rttm or csv")
      ->check(CLI::IsMember({"rttm", "csv"}))
      ->capture_default_str();
  detect->add_option("--out", da.out, "Output file (single input)");
  detect->add_option("--out-dir", da.out_dir, "Output directory, one file per input");

  ResegArgs ra;
  auto* reseg = app.add_subcommand("resegment", "Resegment a baseline and assign overlap speakers");
  reseg->add_option("--audio", ra.audio, "Input WAV file")->required();
  reseg->add_option("--baseline", ra.baseline, "Baseline diarization RTTM")->required();
  reseg->add_option("--vad", ra.vad, "Speech timeline RTTM (default: baseline support)");
  reseg->add_option("--overlap-rttm", ra.overlap_rttm, "Detected overlap timeline RTTM");
  reseg->add_option("--reference", ra.reference, "Reference RTTM for the oracle ablations");
  reseg->add_option("--overlap", ra.overlap, "none, detected or oracle")
      ->check(CLI::IsMember({"none", "detected", "oracle"}))
      ->capture_default_str();
  reseg->add_option("--assign", ra.assign, "posterior or oracle")
      ->check(CLI::IsMember({"posterior", "oracle"}))
      ->capture_default_str();
  reseg->add_option("--config", ra.config, "JSON configuration");
  reseg->add_option("--out", ra.out, "Output hypothesis RTTM")->required();
  reseg->add_option("--dump-q", ra.dump_q, "Write the posterior matrix as text");

  ScoreArgs sc;
  double collar = 0.0;
  auto* score = app.add_subcommand("score", "Score hypotheses against references");
  score->add_option("--reference", sc.reference, "Reference RTTM file(s)")->required();
  score->add_option("--hypothesis", sc.hypothesis, "Hypothesis RTTM file(s)")->required();
  score->add_option("--mode", sc.mode, "der or detection")
      ->check(CLI::IsMember({"der", "detection"}))
      ->capture_default_str();
  score->add_option("--config", sc.config, "JSON configuration (scoring section)");
  auto* collar_opt = score->add_option("--collar", collar, "Collar in seconds");
  score->add_flag("--reference-timeline", sc.reference_timeline,
                  "Detection mode: the reference already is an overlap timeline");
  score->add_option("--json", sc.json, "Write JSON records here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*synth) {
      cmd_synth(sa, jobs);
    } else if (*train_cmd) {
      if (*epochs_opt) ta.epochs = epochs;
      if (*seed_opt) ta.seed = train_seed;
      cmd_train(ta, jobs);
    } else if (*detect) {
      if (*threshold_opt) da.threshold = threshold;
      cmd_detect(da, jobs);
    } else if (*reseg) {
      cmd_resegment(ra);
    } else if (*score) {
      if (*collar_opt) sc.collar = collar;
      cmd_score(sc);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
