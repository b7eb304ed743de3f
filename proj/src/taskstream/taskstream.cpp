#include "kwscl/taskstream/taskstream.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "kwscl/common.hpp"

namespace kwscl::data {

namespace fs = std::filesystem;

void StreamConfig::validate() const {
  if (pretrain_keywords < 2) throw ConfigError("stream.pretrain_keywords must be >= 2");
  if (keywords_per_task < 2) throw ConfigError("stream.keywords_per_task must be >= 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("stream.train_fraction must be in (0, 1)");
}

std::size_t TaskStream::total_classes() const {
  std::size_t n = 0;
  for (const auto& t : tasks) n += t.keywords.size();
  return n;
}

void split_clips(const std::vector<std::string>& paths, std::uint64_t seed, double train_fraction,
                 std::vector<std::string>& train, std::vector<std::string>& test) {
  std::vector<std::pair<std::uint64_t, std::string>> ranked;
  ranked.reserve(paths.size());
  for (const auto& p : paths) ranked.emplace_back(derive_seed(seed, "split:" + p), p);
  std::sort(ranked.begin(), ranked.end());
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(paths.size()) + 0.5));
  train.clear();
  test.clear();
  for (std::size_t i = 0; i < ranked.size(); ++i) (i < n_train ? train : test).push_back(ranked[i].second);
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
}

TaskStream build_stream(const std::map<std::string, std::vector<std::string>>& listing, std::uint64_t seed,
                        const StreamConfig& cfg) {
  cfg.validate();
  const std::size_t needed = cfg.keywords_needed();
  if (listing.size() < needed) {
    throw ConfigError("stream: need " + std::to_string(needed) + " keywords, corpus has " +
                      std::to_string(listing.size()));
  }
  std::vector<std::string> keywords;
  for (const auto& [kw, clips] : listing) keywords.push_back(kw);  // map order is sorted
  Rng rng(derive_seed(seed, "keyword-order"));
  rng.shuffle(keywords);
  keywords.resize(needed);

  TaskStream stream;
  stream.seed = seed;
  stream.config = cfg;
  std::size_t next = 0;
  int offset = 0;
  for (std::size_t t = 0; t <= cfg.n_tasks; ++t) {
    TaskSpec task;
    task.id = static_cast<int>(t);
    task.is_pretrain = t == 0;
    task.class_offset = offset;
    const std::size_t count = t == 0 ? cfg.pretrain_keywords : cfg.keywords_per_task;
    for (std::size_t i = 0; i < count; ++i) task.keywords.push_back(keywords[next++]);
    for (const auto& kw : task.keywords) {
      std::vector<std::string> train, test;
      split_clips(listing.at(kw), seed, cfg.train_fraction, train, test);
      if (train.empty() || test.empty()) {
        throw ConfigError("stream: keyword '" + kw + "' has too few clips for a train/test split");
      }
      for (auto& p : train) task.train.push_back({std::move(p), kw});
      for (auto& p : test) task.test.push_back({std::move(p), kw});
    }
    offset += static_cast<int>(count);
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

TaskStream split_gsc(const fs::path& corpus_dir, std::uint64_t seed, const StreamConfig& cfg) {
  if (!fs::is_directory(corpus_dir)) throw IoError("corpus directory '" + corpus_dir.string() + "' not found");
  std::map<std::string, std::vector<std::string>> listing;
  for (const auto& entry : fs::directory_iterator(corpus_dir)) {
    if (!entry.is_directory()) continue;
    const std::string kw = entry.path().filename().string();
    if (kw.empty() || kw[0] == '_' || kw[0] == '.') continue;  // e.g. _background_noise_
    std::vector<std::string> clips;
    for (const auto& f : fs::directory_iterator(entry.path())) {
      if (f.is_regular_file() && f.path().extension() == ".wav") clips.push_back(kw + "/" + f.path().filename().string());
    }
    if (!clips.empty()) {
      std::sort(clips.begin(), clips.end());
      listing.emplace(kw, std::move(clips));
    }
  }
  if (listing.size() < cfg.keywords_needed()) {
    throw IoError("corpus '" + corpus_dir.string() + "' has " + std::to_string(listing.size()) +
                  " keyword folders, need " + std::to_string(cfg.keywords_needed()));
  }
  TaskStream stream = build_stream(listing, seed, cfg);
  stream.source = SourceKind::kCorpus;
  stream.corpus_root = corpus_dir;
  return stream;
}

std::string synth_keyword_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "kw%02zu", index);
  return buf;
}

std::string synth_clip_path(std::size_t keyword, std::size_t clip) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%03zu.wav", clip);
  return synth_keyword_name(keyword) + "/" + buf;
}

TaskStream synth_stream(const SynthConfig& synth, std::uint64_t seed, const StreamConfig& cfg) {
  if (synth.n_keywords < cfg.keywords_needed()) {
    throw ConfigError("synth: stream layout needs " + std::to_string(cfg.keywords_needed()) + " keywords, got " +
                      std::to_string(synth.n_keywords));
  }
  if (synth.clips_per_keyword < 2) throw ConfigError("synth: clips_per_keyword must be >= 2");
  std::map<std::string, std::vector<std::string>> listing;
  for (std::size_t k = 0; k < synth.n_keywords; ++k) {
    auto& clips = listing[synth_keyword_name(k)];
    for (std::size_t c = 0; c < synth.clips_per_keyword; ++c) clips.push_back(synth_clip_path(k, c));
  }
  TaskStream stream = build_stream(listing, seed, cfg);
  stream.source = SourceKind::kSynthetic;
  stream.synth = synth;
  return stream;
}

void SynthConfig::validate() const {
  if (syllables < 3) throw ConfigError("synth: at least 3 syllables are needed");
  // Keywords differ in at least two syllable positions, so at most syllables^2 exist;
  // half of that keeps the seeded rejection sampling fast.
  const double words = static_cast<double>(syllables) * static_cast<double>(syllables);
  if (static_cast<double>(n_keywords) > words / 2.0) {
    throw ConfigError("synth: " + std::to_string(syllables) + " syllables cannot spell " + std::to_string(n_keywords) +
                      " well-separated keywords (need syllables^2 >= 2 * keywords)");
  }
  if (!(variability >= 0.0 && variability < 0.5)) throw ConfigError("synth: variability must be in [0, 0.5)");
  if (!(snr_min_db <= snr_max_db)) throw ConfigError("synth: snr_min_db must not exceed snr_max_db");
}

namespace {

constexpr std::size_t kSyllablesPerKeyword = 3;

struct Syllable {
  double f1_start, f1_end;  // lower resonance glide (Hz)
  double f2_start, f2_end;  // upper resonance glide (Hz)
  double f2_gain;
  double duration;  // seconds at nominal rate
};

Syllable make_syllable(std::size_t index, std::uint64_t seed) {
  Rng r(derive_seed(seed, "synth-syllable:" + std::to_string(index)));
  Syllable s{};
  s.f1_start = r.uniform(250.0, 900.0);
  s.f1_end = std::clamp(s.f1_start * r.uniform(0.7, 1.4), 200.0, 1000.0);
  s.f2_start = r.uniform(900.0, 2800.0);
  s.f2_end = std::clamp(s.f2_start * r.uniform(0.7, 1.4), 800.0, 3200.0);
  s.f2_gain = r.uniform(0.3, 0.9);
  s.duration = r.uniform(0.12, 0.2);
  return s;
}

// Syllable sequences for keywords 0..n-1, distinct from one another.
std::vector<std::array<std::size_t, kSyllablesPerKeyword>> make_lexicon(std::size_t n, const SynthConfig& synth,
                                                                        std::uint64_t seed) {
  Rng r(derive_seed(seed, "synth-lexicon"));
  std::vector<std::array<std::size_t, kSyllablesPerKeyword>> words;
  while (words.size() < n) {
    std::array<std::size_t, kSyllablesPerKeyword> w{};
    for (auto& s : w) s = static_cast<std::size_t>(r.below(synth.syllables));
    const bool separated = std::all_of(words.begin(), words.end(), [&](const auto& other) {
      std::size_t shared = 0;
      for (std::size_t i = 0; i < w.size(); ++i) shared += w[i] == other[i];
      return shared + 2 <= w.size();
    });
    if (separated) words.push_back(w);
  }
  return words;
}

}  // namespace

dsp::AudioClip render_synth_clip(std::size_t keyword, std::size_t clip, std::uint64_t seed, const SynthConfig& synth) {
  synth.validate();
  const auto word = make_lexicon(keyword + 1, synth, seed)[keyword];
  Rng r(derive_seed(seed, "synth-clip:" + std::to_string(keyword) + ":" + std::to_string(clip)));
  const double pitch = 1.0 + r.uniform(-synth.variability, synth.variability);
  const double rate = 1.0 + r.uniform(-synth.variability, synth.variability);
  const double f0 = r.uniform(90.0, 220.0);

  struct Segment {
    Syllable syl;
    double start, length, gain;
  };
  std::vector<Segment> segs;
  double total = 0.0;
  for (std::size_t i = 0; i < kSyllablesPerKeyword; ++i) {
    const double gap = i == 0 ? 0.0 : r.uniform(0.01, 0.06);
    Segment seg{make_syllable(word[i], seed), 0.0, 0.0, r.uniform(0.7, 1.0)};
    seg.length = seg.syl.duration * rate;
    seg.start = total + gap;
    total = seg.start + seg.length;
    segs.push_back(seg);
  }
  const double onset = r.uniform(0.05, std::max(0.06, 0.95 - total));
  const double snr_db = r.uniform(synth.snr_min_db, synth.snr_max_db);

  dsp::AudioClip out;
  out.source_id = synth_clip_path(keyword, clip);
  out.label = static_cast<int>(keyword);
  std::vector<double> voice(dsp::kClipSamples, 0.0);
  const double dt = 1.0 / dsp::kSampleRate;
  double ph1 = r.uniform(0.0, 2.0 * std::numbers::pi);
  double ph2 = r.uniform(0.0, 2.0 * std::numbers::pi);
  double ph0 = 0.0;
  double energy = 0.0;
  std::size_t voiced = 0;
  for (std::size_t n = 0; n < dsp::kClipSamples; ++n) {
    const double t = static_cast<double>(n) * dt - onset;
    ph0 += 2.0 * std::numbers::pi * f0 * pitch * dt;
    for (const auto& seg : segs) {
      const double local = (t - seg.start) / seg.length;
      if (local < 0.0 || local > 1.0) continue;
      const double f1 = pitch * (seg.syl.f1_start + (seg.syl.f1_end - seg.syl.f1_start) * local);
      const double f2 = pitch * (seg.syl.f2_start + (seg.syl.f2_end - seg.syl.f2_start) * local);
      ph1 += 2.0 * std::numbers::pi * f1 * dt;
      ph2 += 2.0 * std::numbers::pi * f2 * dt;
      const double env = std::pow(std::sin(std::numbers::pi * local), 2.0);
      const double glottal = 0.5 + 0.5 * std::cos(ph0);
      voice[n] = seg.gain * env * glottal * (std::sin(ph1) + seg.syl.f2_gain * std::sin(ph2));
      energy += voice[n] * voice[n];
      ++voiced;
    }
  }
  const double rms = voiced ? std::sqrt(energy / static_cast<double>(voiced)) : 1.0;
  const double level = r.uniform(0.1, 0.3);  // RMS of the voiced part
  const double noise = level * std::pow(10.0, -snr_db / 20.0);
  out.samples.resize(dsp::kClipSamples);
  for (std::size_t n = 0; n < dsp::kClipSamples; ++n) {
    const double s = level * voice[n] / std::max(rms, 1e-12) + noise * r.normal();
    out.samples[n] = static_cast<float>(std::clamp(s, -1.0, 1.0));
  }
  return out;
}

void write_synth_corpus(const fs::path& out_dir, const SynthConfig& synth, std::uint64_t seed) {
  for (std::size_t k = 0; k < synth.n_keywords; ++k) {
    fs::create_directories(out_dir / synth_keyword_name(k));
    for (std::size_t c = 0; c < synth.clips_per_keyword; ++c) {
      dsp::write_wav(out_dir / synth_clip_path(k, c), render_synth_clip(k, c, seed, synth));
    }
  }
}

dsp::AudioClip load_clip(const TaskStream& stream, const SampleRef& ref) {
  if (stream.source == SourceKind::kCorpus) {
    return dsp::pad_or_trim(dsp::read_wav(stream.corpus_root / ref.path), dsp::kClipSamples);
  }
  unsigned keyword = 0, clip = 0;
  if (std::sscanf(ref.path.c_str(), "kw%u/clip_%u.wav", &keyword, &clip) != 2) {
    throw IoError("synthetic sample reference '" + ref.path + "' is malformed");
  }
  return render_synth_clip(keyword, clip, stream.seed, stream.synth);
}

nlohmann::json stream_to_json(const TaskStream& stream) {
  nlohmann::json j;
  j["version"] = 1;
  j["source"] = stream.source == SourceKind::kCorpus ? "corpus" : "synthetic";
  if (stream.source == SourceKind::kCorpus) j["corpus_root"] = stream.corpus_root.string();
  j["synth"] = {{"keywords", stream.synth.n_keywords},
                {"clips_per_keyword", stream.synth.clips_per_keyword},
                {"syllables", stream.synth.syllables},
                {"variability", stream.synth.variability},
                {"snr_min_db", stream.synth.snr_min_db},
                {"snr_max_db", stream.synth.snr_max_db}};
  j["seed"] = stream.seed;
  j["config"] = {{"pretrain_keywords", stream.config.pretrain_keywords},
                 {"tasks", stream.config.n_tasks},
                 {"keywords_per_task", stream.config.keywords_per_task},
                 {"train_fraction", stream.config.train_fraction}};
  auto& tasks = j["tasks"] = nlohmann::json::array();
  for (const auto& t : stream.tasks) {
    nlohmann::json jt{{"id", t.id}, {"pretrain", t.is_pretrain}, {"keywords", t.keywords}, {"class_offset", t.class_offset}};
    auto paths = [](const std::vector<SampleRef>& refs) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& r : refs) a.push_back(r.path);
      return a;
    };
    jt["train"] = paths(t.train);
    jt["test"] = paths(t.test);
    tasks.push_back(std::move(jt));
  }
  return j;
}

TaskStream stream_from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != 1) throw ConfigError("stream manifest: unsupported version");
  TaskStream s;
  s.source = j.at("source").get<std::string>() == "corpus" ? SourceKind::kCorpus : SourceKind::kSynthetic;
  if (s.source == SourceKind::kCorpus) s.corpus_root = j.at("corpus_root").get<std::string>();
  s.synth.n_keywords = j.at("synth").at("keywords").get<std::size_t>();
  s.synth.clips_per_keyword = j.at("synth").at("clips_per_keyword").get<std::size_t>();
  s.synth.syllables = j.at("synth").at("syllables").get<std::size_t>();
  s.synth.variability = j.at("synth").at("variability").get<double>();
  s.synth.snr_min_db = j.at("synth").at("snr_min_db").get<double>();
  s.synth.snr_max_db = j.at("synth").at("snr_max_db").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  const auto& c = j.at("config");
  s.config.pretrain_keywords = c.at("pretrain_keywords").get<std::size_t>();
  s.config.n_tasks = c.at("tasks").get<std::size_t>();
  s.config.keywords_per_task = c.at("keywords_per_task").get<std::size_t>();
  s.config.train_fraction = c.at("train_fraction").get<double>();
  for (const auto& jt : j.at("tasks")) {
    TaskSpec t;
    t.id = jt.at("id").get<int>();
    t.is_pretrain = jt.at("pretrain").get<bool>();
    t.keywords = jt.at("keywords").get<std::vector<std::string>>();
    t.class_offset = jt.at("class_offset").get<int>();
    auto refs = [](const nlohmann::json& a) {
      std::vector<SampleRef> out;
      for (const auto& p : a) {
        const auto path = p.get<std::string>();
        out.push_back({path, path.substr(0, path.find('/'))});
      }
      return out;
    };
    t.train = refs(jt.at("train"));
    t.test = refs(jt.at("test"));
    s.tasks.push_back(std::move(t));
  }
  return s;
}

}  // namespace kwscl::data
