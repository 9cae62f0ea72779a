#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ovl/augment.h"
#include "ovl/features.h"
#include "ovl/timeline.h"

namespace ovl {

// ---- WAV ------------------------------------------------------------------

enum class WavEncoding { pcm16, float32 };

/// Mono PCM16 or float32 (plain or extensible header). Samples are scaled to
/// [-1, 1] for PCM16.
Waveform read_wav(const std::string& path);
void write_wav(const Waveform& waveform, const std::string& path,
               WavEncoding encoding = WavEncoding::float32);

// ---- RTTM -----------------------------------------------------------------

/// SPEAKER records only; other record types are skipped. Zero-length turns
/// are dropped. Throws DataError naming the line for malformed records.
std::map<std::string, Annotation> read_rttm_all(const std::string& path);
/// All SPEAKER records of the file as one annotation (uri of the first record).
Annotation read_rttm(const std::string& path);
/// "SPEAKER <uri> 1 <onset> <duration> <NA> <NA> <speaker> <NA> <NA>", times
/// with three decimals.
void write_rttm(const Annotation& annotation, const std::string& path);
std::string format_rttm(const Annotation& annotation);

/// Timelines travel as RTTM with a fixed speaker label.
Timeline read_rttm_timeline(const std::string& path);
void write_rttm_timeline(const Timeline& timeline, const std::string& uri,
                         const std::string& label, const std::string& path);

// ---- Manifests --------------------------------------------------------------

enum class Partition { train, dev, eval };

struct ManifestEntry {
  std::string audio_path;
  std::string reference_rttm_path;
  std::string vad_path;  // optional, empty when absent
  Partition partition = Partition::train;
};

/// One entry per line: "<partition> <audio> <reference.rttm> [<vad.rttm>]".
/// Blank lines and lines starting with '#' are ignored; relative paths are
/// resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::string& path);
void append_manifest(const std::string& path, const ManifestEntry& entry);
std::string to_string(Partition partition);
Partition parse_partition(const std::string& text);

Recording load_recording(const ManifestEntry& entry);

// ---- Synthetic conversations -----------------------------------------------

/// Source-filter voice: glottal pulse train at f0 through three formant
/// resonators, plus aspiration noise.
struct SpeakerSignature {
  std::string name;
  double f0 = 120.0;
  std::array<double, 3> formants{500.0, 1500.0, 2500.0};
  std::array<double, 3> bandwidths{80.0, 100.0, 120.0};
  double breathiness = 0.05;
};

/// n well-separated voices derived from `seed`.
std::vector<SpeakerSignature> voice_bank(std::size_t n, std::uint64_t seed);

struct SyntheticSpec {
  int n_speakers = 2;
  double duration = 60.0;
  // Overlapped speech as a fraction of total speech duration.
  double overlap_fraction = 0.19;
  // Empty: use voice_bank(n_speakers, seed). Otherwise the first n_speakers
  // entries are used.
  std::vector<SpeakerSignature> signatures;
  std::uint64_t seed = 0;
  int sample_rate = 16000;
  double mean_turn = 3.0;
  double mean_gap = 0.4;
  std::string uri = "synth";

  void validate() const;
};

struct Conversation {
  Recording recording;
  Timeline overlap;
};

/// Alternating turns with interjections from other speakers placed inside
/// turns until the overlapped share of speech reaches the target. All
/// boundaries fall on a 10 ms grid and the ground truth is exact by
/// construction. Throws DataError when the target cannot be met.
Conversation generate_conversation(const SyntheticSpec& spec);

/// Single-speaker baseline derived from a reference: each overlapped instant
/// keeps only the speaker whose turn started first; then a `swap_fraction` of
/// the resulting segments is relabeled to a different speaker.
Annotation degrade_reference(const Annotation& reference, double swap_fraction,
                             std::uint64_t seed);

}  // namespace ovl
