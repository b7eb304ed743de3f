#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "kwscl/dsp/audio.hpp"

namespace kwscl::data {

/// Relative clip path `<keyword>/<clip>.wav`.
struct SampleRef {
  std::string path;
  std::string keyword;
};

struct TaskSpec {
  int id = 0;
  bool is_pretrain = false;
  std::vector<std::string> keywords;  // local label i <-> keywords[i]
  int class_offset = 0;               // global class id of keywords[0]
  std::vector<SampleRef> train;
  std::vector<SampleRef> test;
};

struct StreamConfig {
  std::size_t pretrain_keywords = 15;  // C_0
  std::size_t n_tasks = 5;             // T
  std::size_t keywords_per_task = 3;   // C_t
  double train_fraction = 0.8;

  std::size_t keywords_needed() const { return pretrain_keywords + n_tasks * keywords_per_task; }
  void validate() const;
};

/// Synthetic keywords are sequences of three syllables from a shared
/// inventory, so different keywords reuse the same sounds in new orders.
struct SynthConfig {
  std::size_t n_keywords = 30;
  std::size_t clips_per_keyword = 80;
  std::size_t syllables = 10;  // inventory size
  double variability = 0.12;   // relative speaker pitch and speaking-rate spread
  double snr_min_db = 0.0;
  double snr_max_db = 15.0;

  void validate() const;
};

enum class SourceKind { kSynthetic, kCorpus };

struct TaskStream {
  SourceKind source = SourceKind::kSynthetic;
  std::filesystem::path corpus_root;  // only for kCorpus
  SynthConfig synth;                  // only for kSynthetic
  std::uint64_t seed = 0;
  StreamConfig config;
  std::vector<TaskSpec> tasks;  // tasks[0] is the pretrain task

  std::size_t total_classes() const;
};

/// Splits clips of each keyword 80/20 by ranking a seeded hash of the path.
/// Pure in (paths, seed).
void split_clips(const std::vector<std::string>& paths, std::uint64_t seed, double train_fraction,
                 std::vector<std::string>& train, std::vector<std::string>& test);

/// Builds the stream from a keyword -> clip-path listing. Keywords are drawn
/// by a seeded shuffle: the first C_0 form the pretrain task, the rest are
/// grouped into T tasks of C_t.
TaskStream build_stream(const std::map<std::string, std::vector<std::string>>& listing, std::uint64_t seed,
                        const StreamConfig& cfg);

/// `<root>/<keyword>/<clip>.wav` layout.
TaskStream split_gsc(const std::filesystem::path& corpus_dir, std::uint64_t seed, const StreamConfig& cfg);

std::string synth_keyword_name(std::size_t index);
std::string synth_clip_path(std::size_t keyword, std::size_t clip);

/// Synthetic stand-in corpus with the same layout as the real one.
TaskStream synth_stream(const SynthConfig& synth, std::uint64_t seed, const StreamConfig& cfg);

/// Renders one second of audio for keyword `keyword`, variant `clip`.
dsp::AudioClip render_synth_clip(std::size_t keyword, std::size_t clip, std::uint64_t seed, const SynthConfig& synth = {});

/// Writes every synthetic clip as 16-bit WAV under `out_dir`.
void write_synth_corpus(const std::filesystem::path& out_dir, const SynthConfig& synth, std::uint64_t seed);

/// Resolves a sample reference to audio (rendering or reading from disk).
dsp::AudioClip load_clip(const TaskStream& stream, const SampleRef& ref);

nlohmann::json stream_to_json(const TaskStream& stream);
TaskStream stream_from_json(const nlohmann::json& j);

}  // namespace kwscl::data
