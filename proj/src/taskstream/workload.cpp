#include "kwscl/taskstream/workload.hpp"

#include <algorithm>

#include "kwscl/common.hpp"

namespace kwscl::data {

ad::Tensor Workload::batch(std::span<const Example> examples) const {
  std::vector<double> values(examples.size() * n_mfcc * n_frames);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& fm = features.at(examples[i].feature);
    double* dst = values.data() + i * n_mfcc * n_frames;
    for (std::size_t f = 0; f < n_frames; ++f)
      for (std::size_t c = 0; c < n_mfcc; ++c) dst[c * n_frames + f] = fm.data[f * n_mfcc + c];
  }
  return ad::Tensor({examples.size(), n_mfcc, n_frames}, std::move(values));
}

std::vector<int> Workload::labels(std::span<const Example> examples) const {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.label);
  return out;
}

std::vector<ad::ClassRange> Workload::ranges(std::span<const Example> examples) const {
  std::vector<ad::ClassRange> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(tasks.at(static_cast<std::size_t>(e.task)).range());
  return out;
}

Workload materialize(const TaskStream& stream, const dsp::FrontendConfig& frontend) {
  Workload w;
  w.total_classes = stream.total_classes();
  w.n_mfcc = frontend.n_mfcc;
  w.n_frames = frontend.frame_count(dsp::kClipSamples);
  for (const auto& spec : stream.tasks) {
    TaskData td;
    td.task = spec.id;
    td.class_begin = spec.class_offset;
    td.class_count = static_cast<int>(spec.keywords.size());
    auto load = [&](const std::vector<SampleRef>& refs, std::vector<Example>& out) {
      for (const auto& ref : refs) {
        const auto it = std::find(spec.keywords.begin(), spec.keywords.end(), ref.keyword);
        if (it == spec.keywords.end()) throw Error("workload: sample '" + ref.path + "' has a foreign keyword");
        const int label = spec.class_offset + static_cast<int>(it - spec.keywords.begin());
        auto fm = dsp::mfcc(load_clip(stream, ref), frontend);
        if (fm.n_frames != w.n_frames) throw ShapeError("workload: unexpected frame count for '" + ref.path + "'");
        out.push_back({w.features.size(), label, spec.id});
        w.features.push_back(std::move(fm));
      }
    };
    load(spec.train, td.train);
    load(spec.test, td.test);
    w.tasks.push_back(std::move(td));
  }
  return w;
}

}  // namespace kwscl::data
