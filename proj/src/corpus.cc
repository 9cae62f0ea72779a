#include "ovl/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "ovl/error.h"

namespace ovl {
namespace fs = std::filesystem;

// ---- WAV ------------------------------------------------------------------

namespace {

std::uint32_t read_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

std::uint16_t read_u16(const char* p) {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("'" + path + "' is not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* chunk = bytes.data() + pos;
    const std::size_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(chunk, "data", 4) != 0) {
      throw DataError("truncated chunk in '" + path + "'");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw DataError("short fmt chunk in '" + path + "'");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == 0xFFFE && size >= 40) format = read_u16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = std::min(size, bytes.size() - body);
    }
    pos = body + size + (size & 1);
  }
  if (format == 0 || data == nullptr) throw DataError("missing fmt or data chunk in '" + path + "'");
  if (channels != 1) throw DataError("'" + path + "' is not mono");
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    w.samples.resize(data_size / 2);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      std::int16_t s;
      std::memcpy(&s, data + 2 * i, 2);
      w.samples[i] = s / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    w.samples.resize(data_size / 4);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      float s;
      std::memcpy(&s, data + 4 * i, 4);
      w.samples[i] = s;
    }
  } else {
    throw DataError("'" + path + "' must be 16-bit PCM or 32-bit float");
  }
  w.validate();
  return w;
}

void write_wav(const Waveform& waveform, const std::string& path, WavEncoding encoding) {
  waveform.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write WAV file '" + path + "'");
  const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
  const std::uint16_t format = encoding == WavEncoding::pcm16 ? 1 : 3;
  const auto data_size = static_cast<std::uint32_t>(waveform.samples.size() * (bits / 8));
  out.write("RIFF", 4);
  put<std::uint32_t>(out, 36 + data_size);
  out.write("WAVEfmt ", 8);
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, format);
  put<std::uint16_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(waveform.sample_rate));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(waveform.sample_rate) * (bits / 8));
  put<std::uint16_t>(out, bits / 8);
  put<std::uint16_t>(out, bits);
  out.write("data", 4);
  put<std::uint32_t>(out, data_size);
  for (double s : waveform.samples) {
    if (encoding == WavEncoding::pcm16) {
      put<std::int16_t>(out, static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0, 32767.0 / 32768.0) * 32768.0)));
    } else {
      put<float>(out, static_cast<float>(s));
    }
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

// ---- RTTM -----------------------------------------------------------------

std::map<std::string, Annotation> read_rttm_all(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open RTTM file '" + path + "'");
  std::map<std::string, Annotation> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream fields(line);
    std::vector<std::string> f;
    for (std::string tok; fields >> tok;) f.push_back(tok);
    if (f.empty() || f[0].starts_with("#")) continue;
    if (f[0] != "SPEAKER") continue;
    auto fail = [&](const std::string& why) {
      return DataError(path + ":" + std::to_string(number) + ": " + why);
    };
    if (f.size() < 8) throw fail("SPEAKER record needs at least 8 fields");
    double onset = 0.0, duration = 0.0;
    try {
      std::size_t used = 0;
      onset = std::stod(f[3], &used);
      if (used != f[3].size()) throw std::invalid_argument("onset");
      duration = std::stod(f[4], &used);
      if (used != f[4].size()) throw std::invalid_argument("duration");
    } catch (const std::exception&) {
      throw fail("onset and duration must be numbers");
    }
    if (!std::isfinite(onset) || !std::isfinite(duration)) throw fail("non-finite time");
    if (duration < 0.0) throw fail("negative duration");
    if (onset < 0.0) throw fail("negative onset");
    auto& annotation = out.try_emplace(f[1], f[1]).first->second;
    if (duration > 0.0) annotation.add({onset, onset + duration}, f[7]);
  }
  return out;
}

Annotation read_rttm(const std::string& path) {
  const auto all = read_rttm_all(path);
  if (all.empty()) return {};
  Annotation merged(all.begin()->first);
  for (const auto& [uri, annotation] : all) {
    for (const auto& t : annotation.turns()) merged.add(t.segment, t.speaker);
  }
  return merged;
}

std::string format_rttm(const Annotation& annotation) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  const std::string uri = annotation.uri().empty() ? "file" : annotation.uri();
  for (const auto& t : annotation.turns()) {
    out << "SPEAKER " << uri << " 1 " << t.segment.onset << ' ' << t.segment.duration()
        << " <NA> <NA> " << t.speaker << " <NA> <NA>\n";
  }
  return out.str();
}

void write_rttm(const Annotation& annotation, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write RTTM file '" + path + "'");
  out << format_rttm(annotation);
}

Timeline read_rttm_timeline(const std::string& path) { return read_rttm(path).support(); }

void write_rttm_timeline(const Timeline& timeline, const std::string& uri,
                         const std::string& label, const std::string& path) {
  Annotation a(uri);
  for (const auto& s : timeline.segments()) a.add(s, label);
  write_rttm(a, path);
}

// ---- Manifests --------------------------------------------------------------

std::string to_string(Partition partition) {
  switch (partition) {
    case Partition::train: return "train";
    case Partition::dev: return "dev";
    case Partition::eval: return "eval";
  }
  return "train";
}

Partition parse_partition(const std::string& text) {
  if (text == "train") return Partition::train;
  if (text == "dev") return Partition::dev;
  if (text == "eval") return Partition::eval;
  throw DataError("unknown partition '" + text + "'");
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&base](const std::string& p) {
    const fs::path q(p);
    return (q.is_absolute() ? q : base / q).lexically_normal().string();
  };
  std::vector<ManifestEntry> out;
  std::map<std::string, Partition> seen;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream fields(line);
    std::vector<std::string> f;
    for (std::string tok; fields >> tok;) f.push_back(tok);
    if (f.empty() || f[0].starts_with("#")) continue;
    const std::string where = path + ":" + std::to_string(number) + ": ";
    if (f.size() < 3 || f.size() > 4) {
      throw DataError(where + "expected '<partition> <audio> <reference.rttm> [<vad.rttm>]'");
    }
    ManifestEntry e;
    try {
      e.partition = parse_partition(f[0]);
    } catch (const DataError& err) {
      throw DataError(where + err.what());
    }
    e.audio_path = resolve(f[1]);
    e.reference_rttm_path = resolve(f[2]);
    if (f.size() == 4) e.vad_path = resolve(f[3]);
    for (const auto& p : {e.audio_path, e.reference_rttm_path, e.vad_path}) {
      if (!p.empty() && !fs::exists(p)) throw DataError(where + "missing file '" + p + "'");
    }
    auto [it, inserted] = seen.emplace(e.audio_path, e.partition);
    if (!inserted && it->second != e.partition) {
      throw DataError(where + "'" + e.audio_path + "' appears in two partitions");
    }
    out.push_back(std::move(e));
  }
  return out;
}

void append_manifest(const std::string& path, const ManifestEntry& entry) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  out << to_string(entry.partition) << ' ' << entry.audio_path << ' '
      << entry.reference_rttm_path;
  if (!entry.vad_path.empty()) out << ' ' << entry.vad_path;
  out << '\n';
}

Recording load_recording(const ManifestEntry& entry) {
  Recording r;
  r.uri = fs::path(entry.audio_path).stem().string();
  r.audio = read_wav(entry.audio_path);
  r.reference = read_rttm(entry.reference_rttm_path);
  r.reference.set_uri(r.uri);
  return r;
}

// ---- Synthetic conversations -----------------------------------------------

namespace {

using Centis = std::int64_t;  // 10 ms units

double seconds(Centis c) { return static_cast<double>(c) / 100.0; }

struct PlannedTurn {
  Centis onset;
  Centis offset;
  int speaker;
};

// Cascade of two-pole resonators driven by a pulse train with slow pitch
// drift and syllable-rate changes of pitch, formants and amplitude.
std::vector<double> synthesize_voice(const SpeakerSignature& sig, std::size_t n, int rate,
                                     std::mt19937_64& rng) {
  std::vector<double> out(n, 0.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double fs = rate;
  const double drift_phase = 2.0 * std::numbers::pi * unit(rng);
  double pulse_phase = unit(rng);
  std::array<double, 3> y1{}, y2{};

  std::size_t i = 0;
  while (i < n) {
    const auto syllable =
        static_cast<std::size_t>((0.12 + 0.18 * unit(rng)) * fs);
    const std::size_t end = std::min(n, i + std::max<std::size_t>(syllable, 1));
    const double pitch_scale = 0.94 + 0.12 * unit(rng);
    const double level = 0.45 + 0.55 * unit(rng);
    std::array<double, 3> a1{}, a2{}, gain{};
    for (int k = 0; k < 3; ++k) {
      const double f = sig.formants[k] * (0.92 + 0.16 * unit(rng));
      const double r = std::exp(-std::numbers::pi * sig.bandwidths[k] / fs);
      a1[k] = 2.0 * r * std::cos(2.0 * std::numbers::pi * f / fs);
      a2[k] = -r * r;
      gain[k] = 1.0 - r;
    }
    for (std::size_t j = i; j < end; ++j) {
      const double t = static_cast<double>(j) / fs;
      const double f0 =
          sig.f0 * pitch_scale * (1.0 + 0.05 * std::sin(2.0 * std::numbers::pi * 0.6 * t + drift_phase));
      pulse_phase += f0 / fs;
      double x = sig.breathiness * noise(rng);
      if (pulse_phase >= 1.0) {
        pulse_phase -= 1.0;
        x += 1.0;
      }
      for (int k = 0; k < 3; ++k) {
        const double y = gain[k] * x + a1[k] * y1[k] + a2[k] * y2[k];
        y2[k] = y1[k];
        y1[k] = y;
        x = y;
      }
      const double u = static_cast<double>(j - i) / static_cast<double>(end - i);
      out[j] = x * level * (0.35 + 0.65 * std::sin(std::numbers::pi * u));
    }
    i = end;
  }
  double energy = 0.0;
  for (double s : out) energy += s * s;
  const double rms = std::sqrt(energy / static_cast<double>(std::max<std::size_t>(1, n)));
  if (rms > 0.0) {
    const double target = 0.05 * std::pow(10.0, (6.0 * unit(rng) - 3.0) / 20.0);
    for (double& s : out) s *= target / rms;
  }
  const std::size_t fade = std::min<std::size_t>(n / 2, static_cast<std::size_t>(0.005 * fs));
  for (std::size_t j = 0; j < fade; ++j) {
    const double g = static_cast<double>(j) / static_cast<double>(fade);
    out[j] *= g;
    out[n - 1 - j] *= g;
  }
  return out;
}

}  // namespace

std::vector<SpeakerSignature> voice_bank(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<SpeakerSignature> bank;
  // Stratify pitch and formant ranges so voices stay distinct; shuffle the
  // strata independently per parameter.
  std::vector<std::size_t> order[4];
  for (auto& o : order) {
    o.resize(n);
    for (std::size_t i = 0; i < n; ++i) o[i] = i;
    std::shuffle(o.begin(), o.end(), rng);
  }
  auto stratum = [&](std::size_t which, std::size_t i, double lo, double hi) {
    const double width = (hi - lo) / static_cast<double>(std::max<std::size_t>(n, 1));
    return lo + width * (static_cast<double>(order[which][i]) + 0.2 + 0.6 * unit(rng));
  };
  for (std::size_t i = 0; i < n; ++i) {
    SpeakerSignature s;
    s.name = "spk" + std::to_string(i);
    s.f0 = stratum(0, i, 90.0, 260.0);
    s.formants = {stratum(1, i, 300.0, 900.0), stratum(2, i, 1000.0, 2300.0),
                  stratum(3, i, 2400.0, 3800.0)};
    s.bandwidths = {60.0 + 60.0 * unit(rng), 80.0 + 80.0 * unit(rng), 100.0 + 100.0 * unit(rng)};
    s.breathiness = 0.02 + 0.06 * unit(rng);
    bank.push_back(s);
  }
  return bank;
}

void SyntheticSpec::validate() const {
  if (n_speakers < 1) throw DataError("need at least one speaker");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw DataError("overlap fraction must lie in [0, 1)");
  }
  if (n_speakers == 1 && overlap_fraction > 0.0) {
    throw DataError("a single speaker cannot overlap with anyone");
  }
  if (!(duration > 0.0)) throw DataError("duration must be positive");
  if (sample_rate <= 0) throw DataError("sample rate must be positive");
  if (!signatures.empty() && signatures.size() < static_cast<std::size_t>(n_speakers)) {
    throw DataError("fewer voice signatures than speakers");
  }
  if (!(mean_turn > 1.0) || !(mean_gap > 0.0)) throw DataError("invalid turn statistics");
}

Conversation generate_conversation(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> turn_extra(1.0 / (spec.mean_turn - 1.0));
  std::exponential_distribution<double> gap_length(1.0 / spec.mean_gap);
  const auto signatures =
      spec.signatures.empty() ? voice_bank(static_cast<std::size_t>(spec.n_speakers), spec.seed)
                              : spec.signatures;

  const auto total = static_cast<Centis>(std::llround(spec.duration * 100.0));
  const Centis tail = 30;
  std::vector<PlannedTurn> turns;
  Centis t = 20 + static_cast<Centis>(80 * unit(rng));
  int previous = -1;
  while (true) {
    int speaker = 0;
    if (spec.n_speakers > 1) {
      std::uniform_int_distribution<int> pick(0, spec.n_speakers - 2);
      speaker = pick(rng);
      if (previous >= 0 && speaker >= previous) ++speaker;
    }
    Centis length = 100 + std::llround(turn_extra(rng) * 100.0);
    length = std::min<Centis>(length, 800);
    if (t + length > total - tail) length = total - tail - t;
    if (length < 50) break;
    turns.push_back({t, t + length, speaker});
    previous = speaker;
    t += length + std::max<Centis>(5, std::llround(gap_length(rng) * 100.0));
  }
  if (turns.empty()) throw DataError("duration too short for a conversation");

  Centis speech = 0;
  for (const auto& turn : turns) speech += turn.offset - turn.onset;
  Centis remaining = std::llround(spec.overlap_fraction * static_cast<double>(speech));
  constexpr Centis kMinInterjection = 30;
  std::vector<PlannedTurn> interjections;
  std::vector<std::vector<std::pair<Centis, Centis>>> used(turns.size());
  std::vector<double> weights;
  for (const auto& turn : turns) weights.push_back(static_cast<double>(turn.offset - turn.onset));
  std::discrete_distribution<std::size_t> pick_turn(weights.begin(), weights.end());
  for (int attempt = 0; remaining >= kMinInterjection && attempt < 200000; ++attempt) {
    const std::size_t k = pick_turn(rng);
    const PlannedTurn& host = turns[k];
    const Centis room = host.offset - host.onset - 20;
    if (room < kMinInterjection) continue;
    std::uniform_int_distribution<Centis> pick_len(50, 150);
    Centis length = std::min({pick_len(rng), remaining, room});
    if (remaining - length < kMinInterjection && remaining <= room) length = remaining;
    if (length < kMinInterjection) continue;
    std::uniform_int_distribution<Centis> pick_pos(host.onset + 10, host.offset - 10 - length);
    const Centis on = pick_pos(rng);
    const Centis off = on + length;
    bool clash = false;
    for (const auto& [a, b] : used[k]) clash = clash || (on < b + 10 && a < off + 10);
    if (clash) continue;
    std::uniform_int_distribution<int> pick(0, spec.n_speakers - 2);
    int speaker = pick(rng);
    if (speaker >= host.speaker) ++speaker;
    used[k].emplace_back(on, off);
    interjections.push_back({on, off, speaker});
    remaining -= length;
  }
  if (remaining >= kMinInterjection) {
    throw DataError("overlap target of " + std::to_string(spec.overlap_fraction) +
                    " is unattainable for this conversation");
  }

  Conversation out;
  Recording& rec = out.recording;
  rec.uri = spec.uri;
  rec.reference.set_uri(spec.uri);
  rec.audio.sample_rate = spec.sample_rate;
  const auto n_samples = static_cast<std::size_t>(std::llround(spec.duration * spec.sample_rate));
  rec.audio.samples.assign(n_samples, 0.0);
  std::normal_distribution<double> background(0.0, 0.002);
  for (double& s : rec.audio.samples) s = background(rng);

  std::vector<PlannedTurn> all = turns;
  all.insert(all.end(), interjections.begin(), interjections.end());
  for (const auto& turn : all) {
    const auto& sig = signatures[static_cast<std::size_t>(turn.speaker)];
    rec.reference.add({seconds(turn.onset), seconds(turn.offset)}, sig.name);
    const auto first = static_cast<std::size_t>(turn.onset * spec.sample_rate / 100);
    const auto last = std::min(n_samples, static_cast<std::size_t>(turn.offset * spec.sample_rate / 100));
    const auto voice = synthesize_voice(sig, last - first, spec.sample_rate, rng);
    for (std::size_t i = 0; i < voice.size(); ++i) rec.audio.samples[first + i] += voice[i];
  }
  out.overlap = overlap_regions(rec.reference);
  return out;
}

Annotation degrade_reference(const Annotation& reference, double swap_fraction,
                             std::uint64_t seed) {
  const Annotation ref = reference.normalized();
  const auto speakers = ref.speakers();
  Annotation out(reference.uri());
  if (speakers.empty()) return out;
  // Walk elementary intervals; keep the speaker whose segment started first.
  std::set<double> cuts;
  for (const auto& t : ref.turns()) {
    cuts.insert(t.segment.onset);
    cuts.insert(t.segment.offset);
  }
  std::vector<std::pair<Segment, std::string>> pieces;
  for (auto it = cuts.begin(); std::next(it) != cuts.end(); ++it) {
    const Segment piece{*it, *std::next(it)};
    const Turn* keep = nullptr;
    for (const auto& t : ref.turns()) {
      if (t.segment.onset <= piece.onset && piece.offset <= t.segment.offset &&
          (keep == nullptr || t.segment.onset < keep->segment.onset)) {
        keep = &t;
      }
    }
    if (keep == nullptr) continue;
    if (!pieces.empty() && pieces.back().second == keep->speaker &&
        pieces.back().first.offset == piece.onset) {
      pieces.back().first.offset = piece.offset;
    } else {
      pieces.emplace_back(piece, keep->speaker);
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& [segment, speaker] : pieces) {
    if (speakers.size() > 1 && unit(rng) < swap_fraction) {
      std::uniform_int_distribution<std::size_t> pick(0, speakers.size() - 2);
      const auto current = static_cast<std::size_t>(
          std::find(speakers.begin(), speakers.end(), speaker) - speakers.begin());
      std::size_t other = pick(rng);
      if (other >= current) ++other;
      speaker = speakers[other];
    }
    out.add(segment, speaker);
  }
  return out.normalized();
}

}  // namespace ovl
