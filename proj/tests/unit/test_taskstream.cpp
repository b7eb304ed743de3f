#include <algorithm>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "kwscl/dsp/audio.hpp"
#include "kwscl/taskstream/taskstream.hpp"
#include "kwscl/taskstream/workload.hpp"
#include "test_support.hpp"

using namespace kwscl;
using namespace kwscl::data;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::vector<std::string>> make_listing(std::size_t keywords, std::size_t clips) {
  std::map<std::string, std::vector<std::string>> listing;
  for (std::size_t k = 0; k < keywords; ++k)
    for (std::size_t c = 0; c < clips; ++c) listing[synth_keyword_name(k)].push_back(synth_clip_path(k, c));
  return listing;
}

std::set<std::string> paths_of(const std::vector<SampleRef>& refs) {
  std::set<std::string> out;
  for (const auto& r : refs) out.insert(r.path);
  return out;
}

}  // namespace

TEST_CASE("split is exact, disjoint and pure in (paths, seed)") {
  std::vector<std::string> paths;
  for (int i = 0; i < 50; ++i) paths.push_back("kw/clip" + std::to_string(i) + ".wav");
  std::vector<std::string> tr, te, tr2, te2;
  split_clips(paths, 7, 0.8, tr, te);
  CHECK(tr.size() == 40);
  CHECK(te.size() == 10);
  std::set<std::string> all(tr.begin(), tr.end());
  for (const auto& p : te) CHECK(all.insert(p).second);
  CHECK(all.size() == 50);

  auto shuffled = paths;
  std::reverse(shuffled.begin(), shuffled.end());
  split_clips(shuffled, 7, 0.8, tr2, te2);
  CHECK(std::set<std::string>(te.begin(), te.end()) == std::set<std::string>(te2.begin(), te2.end()));

  split_clips(paths, 8, 0.8, tr2, te2);
  CHECK(std::set<std::string>(te.begin(), te.end()) != std::set<std::string>(te2.begin(), te2.end()));
}

TEST_CASE("stream layout: one pretrain task and T disjoint incremental tasks") {
  const auto stream = build_stream(make_listing(30, 10), 3, StreamConfig{});
  REQUIRE(stream.tasks.size() == 6);
  CHECK(stream.tasks[0].is_pretrain);
  CHECK(stream.tasks[0].keywords.size() == 15);
  CHECK(stream.total_classes() == 30);
  std::set<std::string> seen;
  int offset = 0;
  for (const auto& t : stream.tasks) {
    CHECK(t.class_offset == offset);
    offset += static_cast<int>(t.keywords.size());
    for (const auto& k : t.keywords) CHECK(seen.insert(k).second);
    CHECK(t.train.size() == 8 * t.keywords.size());
    CHECK(t.test.size() == 2 * t.keywords.size());
    for (const auto& r : t.test) CHECK(paths_of(t.train).count(r.path) == 0);
  }
  for (std::size_t t = 1; t < 6; ++t) CHECK(stream.tasks[t].keywords.size() == 3);
}

TEST_CASE("stream construction is deterministic in the seed") {
  const auto listing = make_listing(30, 10);
  const auto a = build_stream(listing, 11, StreamConfig{});
  const auto b = build_stream(listing, 11, StreamConfig{});
  const auto c = build_stream(listing, 12, StreamConfig{});
  CHECK(stream_to_json(a) == stream_to_json(b));
  CHECK(stream_to_json(a) != stream_to_json(c));
}

TEST_CASE("too few keywords or clips is a configuration error") {
  CHECK_THROWS_AS(build_stream(make_listing(29, 10), 0, StreamConfig{}), ConfigError);
  CHECK_THROWS_AS(build_stream(make_listing(30, 1), 0, StreamConfig{}), ConfigError);
  StreamConfig bad;
  bad.train_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  SynthConfig few;
  few.syllables = 7;  // 49 well-separated words at most, fewer than 2 x 30
  CHECK_THROWS_AS(few.validate(), ConfigError);
}

TEST_CASE("stream json round trip") {
  SynthConfig synth;
  synth.clips_per_keyword = 5;
  synth.variability = 0.2;
  const auto s = synth_stream(synth, 4, StreamConfig{});
  const auto j = stream_to_json(s);
  const auto back = stream_from_json(j);
  CHECK(stream_to_json(back) == j);
  CHECK(back.synth.variability == 0.2);
  CHECK(back.tasks[2].keywords == s.tasks[2].keywords);
}

TEST_CASE("synthetic clips are deterministic, bounded and keyword-specific") {
  const auto a = render_synth_clip(3, 1, 9);
  const auto b = render_synth_clip(3, 1, 9);
  CHECK(a.samples == b.samples);
  CHECK(a.samples.size() == dsp::kClipSamples);
  double peak = 0.0, energy = 0.0;
  for (float v : a.samples) {
    peak = std::max(peak, std::abs(static_cast<double>(v)));
    energy += static_cast<double>(v) * v;
  }
  CHECK(peak <= 1.0);
  CHECK(energy > 0.0);
  CHECK(render_synth_clip(3, 2, 9).samples != a.samples);
  CHECK(render_synth_clip(4, 1, 9).samples != a.samples);
  CHECK(render_synth_clip(3, 1, 10).samples != a.samples);
}

TEST_CASE("synthetic corpus on disk matches the in-memory stream") {
  const auto dir = test::scratch_dir("synth_corpus");
  SynthConfig synth;
  synth.clips_per_keyword = 3;
  write_synth_corpus(dir, synth, 5);
  std::size_t folders = 0;
  for (const auto& e : fs::directory_iterator(dir)) folders += e.is_directory();
  CHECK(folders == 30);

  const auto disk = split_gsc(dir, 5, StreamConfig{});
  const auto mem = synth_stream(synth, 5, StreamConfig{});
  CHECK(disk.tasks[1].keywords == mem.tasks[1].keywords);
  const auto& ref = mem.tasks[1].train.front();
  const auto from_disk = load_clip(disk, ref);
  const auto rendered = load_clip(mem, ref);
  REQUIRE(from_disk.samples.size() == rendered.samples.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < rendered.samples.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(from_disk.samples[i] - rendered.samples[i])));
  CHECK(worst <= 1.0 / 32767.0);
}

TEST_CASE("corpus errors") {
  CHECK_THROWS_AS(split_gsc(test::scratch_dir("missing") / "nope", 0, StreamConfig{}), IoError);
  const auto dir = test::scratch_dir("small_corpus");
  fs::create_directories(dir / "_background_noise_");
  fs::create_directories(dir / "yes");
  dsp::write_wav(dir / "yes" / "a.wav", render_synth_clip(0, 0, 0));
  CHECK_THROWS_AS(split_gsc(dir, 0, StreamConfig{}), IoError);
}

TEST_CASE("materialized workload") {
  SynthConfig synth;
  synth.clips_per_keyword = 5;
  const auto stream = synth_stream(synth, 2, StreamConfig{});
  const auto w = materialize(stream, dsp::FrontendConfig{});
  CHECK(w.total_classes == 30);
  CHECK(w.n_mfcc == 40);
  CHECK(w.bytes_per_sample() == 40 * w.n_frames * 4);
  REQUIRE(w.tasks.size() == 6);
  CHECK(w.tasks[3].class_begin == 21);
  CHECK(w.tasks[3].class_count == 3);
  for (const auto& e : w.tasks[3].train) {
    CHECK(e.label >= 21);
    CHECK(e.label < 24);
    CHECK(e.task == 3);
  }
  const auto x = w.batch(std::span(w.tasks[3].test).first(2));
  CHECK(x.shape() == ad::Shape{2, 40, w.n_frames});
}
