#include "ovl/augment.h"

#include <cmath>

#include "ovl/error.h"

namespace ovl {

LabelSequence labels_from_regions(const SpeakerRegions& regions, std::size_t num_frames,
                                  double frame_step, double start_time) {
  LabelSequence out;
  out.frame_step = frame_step;
  out.start_time = start_time;
  out.labels.assign(num_frames, 0);
  const FrameGrid grid{start_time, frame_step, num_frames};
  std::vector<int> active(num_frames, 0);
  for (const auto& [speaker, timeline] : regions) {
    const auto mask = rasterize(timeline, grid);
    for (std::size_t t = 0; t < num_frames; ++t) active[t] += mask[t];
  }
  for (std::size_t t = 0; t < num_frames; ++t) out.labels[t] = active[t] >= 2 ? 1 : 0;
  return out;
}

LabeledChunk mix_chunks(const LabeledChunk& a, const LabeledChunk& b, double gain_db) {
  if (a.waveform.sample_rate != b.waveform.sample_rate) {
    throw DataError("cannot mix chunks with different sample rates");
  }
  if (a.waveform.samples.size() != b.waveform.samples.size()) {
    throw DataError("cannot mix chunks with different durations");
  }
  const double gain = std::pow(10.0, gain_db / 20.0);
  LabeledChunk out;
  out.waveform.sample_rate = a.waveform.sample_rate;
  out.waveform.samples.resize(a.waveform.samples.size());
  for (std::size_t i = 0; i < out.waveform.samples.size(); ++i) {
    out.waveform.samples[i] = a.waveform.samples[i] + gain * b.waveform.samples[i];
  }
  for (const auto& [speaker, timeline] : a.speaker_regions) {
    out.speaker_regions["a:" + speaker] = timeline;
  }
  for (const auto& [speaker, timeline] : b.speaker_regions) {
    out.speaker_regions["b:" + speaker] = timeline;
  }
  return out;
}

std::size_t count_saturated(const Waveform& waveform) {
  std::size_t n = 0;
  for (double s : waveform.samples) n += std::abs(s) > 1.0;
  return n;
}

LabeledChunk extract_chunk(const Recording& recording, double onset, double duration) {
  const auto& audio = recording.audio;
  const auto first = static_cast<std::size_t>(std::llround(onset * audio.sample_rate));
  const auto length = static_cast<std::size_t>(std::llround(duration * audio.sample_rate));
  if (first + length > audio.samples.size()) throw DataError("chunk exceeds recording");
  LabeledChunk chunk;
  chunk.waveform.sample_rate = audio.sample_rate;
  chunk.waveform.samples.assign(audio.samples.begin() + static_cast<std::ptrdiff_t>(first),
                                audio.samples.begin() +
                                    static_cast<std::ptrdiff_t>(first + length));
  const double t0 = static_cast<double>(first) / audio.sample_rate;
  const double t1 = t0 + static_cast<double>(length) / audio.sample_rate;
  for (const auto& speaker : recording.reference.speakers()) {
    const Timeline cropped = recording.reference.speaker_timeline(speaker).crop({t0, t1});
    if (cropped.empty()) continue;
    std::vector<Segment> shifted;
    for (const auto& s : cropped.segments()) shifted.push_back({s.onset - t0, s.offset - t0});
    chunk.speaker_regions[speaker] = Timeline(std::move(shifted));
  }
  return chunk;
}

namespace {

LabeledChunk draw_chunk(std::span<const Recording> corpus, const std::vector<double>& weights,
                        double duration, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  const Recording& rec = corpus[pick(rng)];
  const double room = rec.audio.duration() - duration;
  std::uniform_real_distribution<double> offset(0.0, room);
  const double onset = room > 0.0 ? offset(rng) : 0.0;
  return extract_chunk(rec, onset, duration);
}

}  // namespace

std::vector<TrainingItem> sample_batch(std::span<const Recording> corpus, std::size_t batch_size,
                                       const BatchOptions& options, std::mt19937_64& rng) {
  if (corpus.empty()) throw DataError("empty corpus");
  if (batch_size < 1) throw DataError("batch size must be at least 1");
  std::vector<double> weights;
  for (const auto& rec : corpus) {
    if (rec.audio.duration() + 1e-9 < options.chunk_duration) {
      throw DataError("recording '" + rec.uri + "' is shorter than one chunk");
    }
    weights.push_back(rec.audio.duration());
  }
  std::bernoulli_distribution artificial(options.p_artificial);
  std::uniform_real_distribution<double> gain(options.min_gain_db, options.max_gain_db);

  std::vector<TrainingItem> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    TrainingItem item;
    LabeledChunk chunk = draw_chunk(corpus, weights, options.chunk_duration, rng);
    if (artificial(rng)) {
      LabeledChunk other = draw_chunk(corpus, weights, options.chunk_duration, rng);
      chunk = mix_chunks(chunk, other, gain(rng));
      item.artificial = true;
    }
    item.saturated_samples = count_saturated(chunk.waveform);
    item.features = extract_features(chunk.waveform, options.features);
    item.labels = labels_from_regions(chunk.speaker_regions, item.features.num_frames(),
                                      item.features.frame_step, item.features.start_time);
    item.speaker_regions = std::move(chunk.speaker_regions);
    batch.push_back(std::move(item));
  }
  return batch;
}

}  // namespace ovl
