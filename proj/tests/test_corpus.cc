#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

#include "oracles.h"
#include "ovl/corpus.h"
#include "ovl/error.h"

using namespace ovl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("ovl_corpus_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

double overlap_share(const Conversation& c) {
  return c.overlap.duration() / c.recording.reference.support().duration();
}

}  // namespace

TEST_CASE("RTTM parsing") {
  TempDir dir;
  const auto path = dir.file("a.rttm");
  write_text(path, "SPEAKER f1 1 0.000 2.500 <NA> <NA> spkA <NA> <NA>\n");
  const Annotation a = read_rttm(path);
  REQUIRE(a.turns().size() == 1);
  CHECK(a.uri() == "f1");
  CHECK(a.turns()[0].segment.onset == 0.0);
  CHECK(a.turns()[0].segment.offset == 2.5);
  CHECK(a.turns()[0].speaker == "spkA");

  write_text(path, "");
  CHECK(read_rttm(path).empty());

  write_text(path, "# comment\nSPKR-INFO f1 1 <NA> <NA> <NA> unknown spkA <NA> <NA>\n"
                   "SPEAKER f1 1 1.000 0.000 <NA> <NA> spkA <NA> <NA>\n"
                   "SPEAKER f1 1 1.000 1.000 <NA> <NA> spkB <NA> <NA>\n");
  CHECK(read_rttm(path).turns().size() == 1);

  write_text(path, "SPEAKER f1 1 0.000 1.000 <NA> <NA> A <NA> <NA>\n"
                   "SPEAKER f2 1 0.000 2.000 <NA> <NA> B <NA> <NA>\n");
  const auto all = read_rttm_all(path);
  CHECK(all.size() == 2);
  CHECK(all.at("f2").turns()[0].speaker == "B");
}

TEST_CASE("malformed RTTM lines name the line") {
  TempDir dir;
  const auto path = dir.file("bad.rttm");
  auto message = [&](const std::string& text) {
    write_text(path, text);
    try {
      read_rttm(path);
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  const std::string ok = "SPEAKER f1 1 0.000 1.000 <NA> <NA> A <NA> <NA>\n";
  CHECK(message(ok + "SPEAKER f1 1 0.000 -1.000 <NA> <NA> A <NA> <NA>\n").find(":2:") != std::string::npos);
  CHECK(message(ok + ok + "SPEAKER f1 1 abc 1.000 <NA> <NA> A <NA> <NA>\n").find(":3:") != std::string::npos);
  CHECK(message("SPEAKER f1 1 0.0\n").find(":1:") != std::string::npos);
  CHECK(message("SPEAKER f1 1 -2.0 1.0 <NA> <NA> A <NA> <NA>\n").find(":1:") != std::string::npos);
  CHECK_THROWS_AS(read_rttm(dir.file("missing.rttm")), DataError);
}

TEST_CASE("RTTM round trip on random annotations") {
  TempDir dir;
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Annotation a = oracle::random_annotation(rng, 5, 300.0, 6, "spk");
    a.set_uri("rec" + std::to_string(trial));
    const auto path = dir.file("r.rttm");
    write_rttm(a, path);
    const Annotation b = read_rttm(path);
    CHECK(b.uri() == a.uri());
    REQUIRE(b.turns().size() == a.turns().size());
    for (std::size_t i = 0; i < a.turns().size(); ++i) {
      CHECK(b.turns()[i].speaker == a.turns()[i].speaker);
      CHECK(std::abs(b.turns()[i].segment.onset - a.turns()[i].segment.onset) < 1e-9);
      CHECK(std::abs(b.turns()[i].segment.offset - a.turns()[i].segment.offset) < 1e-9);
    }
    CHECK(format_rttm(b) == format_rttm(a));
  }
}

TEST_CASE("timeline RTTM") {
  TempDir dir;
  const Timeline t({{0.5, 1.25}, {3.0, 4.0}});
  write_rttm_timeline(t, "f", "overlap", dir.file("o.rttm"));
  CHECK(read_rttm_timeline(dir.file("o.rttm")) == t);
  write_rttm_timeline(Timeline{}, "f", "overlap", dir.file("e.rttm"));
  CHECK(read_rttm_timeline(dir.file("e.rttm")).empty());
}

TEST_CASE("WAV round trip") {
  TempDir dir;
  Waveform w;
  w.sample_rate = 8000;
  for (int i = 0; i < 1000; ++i) w.samples.push_back(0.8 * std::sin(0.01 * i));

  write_wav(w, dir.file("f.wav"), WavEncoding::float32);
  const Waveform f = read_wav(dir.file("f.wav"));
  CHECK(f.sample_rate == 8000);
  REQUIRE(f.samples.size() == 1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    CHECK(f.samples[i] == static_cast<double>(static_cast<float>(w.samples[i])));
  }

  write_wav(w, dir.file("p.wav"), WavEncoding::pcm16);
  const Waveform p = read_wav(dir.file("p.wav"));
  REQUIRE(p.samples.size() == 1000);
  for (std::size_t i = 0; i < 1000; ++i) CHECK(std::abs(p.samples[i] - w.samples[i]) <= 1.0 / 32767.0);

  write_text(dir.file("junk.wav"), "RIFFxxxxWAVEjunk");
  CHECK_THROWS_AS(read_wav(dir.file("junk.wav")), DataError);
  CHECK_THROWS_AS(read_wav(dir.file("none.wav")), DataError);
}

TEST_CASE("manifests") {
  TempDir dir;
  write_text(dir.file("a.wav"), "");
  write_text(dir.file("a.rttm"), "");
  write_text(dir.file("b.wav"), "");
  write_text(dir.file("b.rttm"), "");
  write_text(dir.file("m.txt"), "# corpus\ntrain a.wav a.rttm\n\ndev b.wav b.rttm a.rttm\n");
  const auto m = read_manifest(dir.file("m.txt"));
  REQUIRE(m.size() == 2);
  CHECK(m[0].partition == Partition::train);
  CHECK(m[0].audio_path == dir.file("a.wav"));
  CHECK(m[0].vad_path.empty());
  CHECK(m[1].partition == Partition::dev);
  CHECK(m[1].vad_path == dir.file("a.rttm"));

  write_text(dir.file("dup.txt"), "train a.wav a.rttm\neval a.wav a.rttm\n");
  CHECK_THROWS_AS(read_manifest(dir.file("dup.txt")), DataError);
  write_text(dir.file("missing.txt"), "train c.wav a.rttm\n");
  CHECK_THROWS_AS(read_manifest(dir.file("missing.txt")), DataError);
  write_text(dir.file("part.txt"), "test a.wav a.rttm\n");
  CHECK_THROWS_AS(read_manifest(dir.file("part.txt")), DataError);

  append_manifest(dir.file("new.txt"), {dir.file("a.wav"), dir.file("a.rttm"), "", Partition::eval});
  const auto n = read_manifest(dir.file("new.txt"));
  REQUIRE(n.size() == 1);
  CHECK(n[0].partition == Partition::eval);
  CHECK(to_string(Partition::dev) == "dev");
  CHECK(parse_partition("train") == Partition::train);
}

TEST_CASE("generator: no overlap") {
  SyntheticSpec spec;
  spec.overlap_fraction = 0.0;
  spec.duration = 30.0;
  spec.seed = 3;
  const Conversation c = generate_conversation(spec);
  CHECK(c.overlap.empty());
  CHECK(overlap_regions(c.recording.reference).empty());
  CHECK(c.recording.reference.speakers().size() == 2);
}

TEST_CASE("generator: one speaker") {
  SyntheticSpec spec;
  spec.n_speakers = 1;
  CHECK_THROWS_AS(generate_conversation(spec), DataError);
  spec.overlap_fraction = 0.0;
  const Conversation c = generate_conversation(spec);
  CHECK(c.recording.reference.speakers().size() == 1);
  CHECK(c.overlap.empty());
}

TEST_CASE("generator: AMI-like overlap regime") {
  SyntheticSpec spec;
  spec.duration = 60.0;
  spec.overlap_fraction = 0.19;
  spec.seed = 7;
  const Conversation c = generate_conversation(spec);
  const double share = overlap_share(c);
  CHECK(share >= 0.14);
  CHECK(share <= 0.24);
  CHECK(c.recording.audio.samples.size() == 60 * 16000);
  CHECK(c.recording.audio.sample_rate == 16000);
  CHECK(c.overlap == overlap_regions(c.recording.reference));
  for (const auto& t : c.recording.reference.turns()) {
    CHECK(t.segment.onset >= 0.0);
    CHECK(t.segment.offset <= 60.0);
    CHECK(std::abs(t.segment.onset * 100.0 - std::round(t.segment.onset * 100.0)) < 1e-6);
  }
  for (double x : c.recording.audio.samples) REQUIRE(std::isfinite(x));
}

TEST_CASE("generator: self-consistency and determinism across seeds") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    SyntheticSpec spec;
    spec.duration = 40.0;
    spec.seed = seed;
    spec.n_speakers = 2 + static_cast<int>(seed % 3);
    const Conversation a = generate_conversation(spec);
    const Conversation b = generate_conversation(spec);
    CHECK(a.overlap == overlap_regions(a.recording.reference));
    CHECK(a.recording.reference == b.recording.reference);
    CHECK(a.recording.audio.samples == b.recording.audio.samples);
    CHECK(std::abs(overlap_share(a) - 0.19) <= 0.05);
  }
}

TEST_CASE("generator rejects unattainable targets") {
  SyntheticSpec spec;
  spec.duration = 10.0;
  spec.overlap_fraction = 0.95;
  CHECK_THROWS_AS(generate_conversation(spec), DataError);
}

TEST_CASE("voice bank") {
  const auto v = voice_bank(4, 1);
  REQUIRE(v.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(v[i].name == "spk" + std::to_string(i));
    for (std::size_t j = 0; j < i; ++j) CHECK(v[i].f0 != v[j].f0);
  }
  CHECK(voice_bank(4, 1)[2].f0 == v[2].f0);
}

TEST_CASE("degraded reference is single-speaker") {
  SyntheticSpec spec;
  spec.seed = 11;
  const Conversation c = generate_conversation(spec);
  const Annotation base = degrade_reference(c.recording.reference, 0.0, 1);
  CHECK(overlap_regions(base).empty());
  CHECK(base.support() == c.recording.reference.support());
  const Annotation swapped = degrade_reference(c.recording.reference, 0.3, 1);
  CHECK(swapped.support() == base.support());
  CHECK_FALSE(swapped == base);
  CHECK(degrade_reference(c.recording.reference, 0.3, 1) == swapped);
}
