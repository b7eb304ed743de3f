#pragma once

#include <span>
#include <vector>

#include "kwscl/autodiff/ops.hpp"
#include "kwscl/dsp/mfcc.hpp"
#include "kwscl/taskstream/taskstream.hpp"

namespace kwscl::data {

struct Example {
  std::size_t feature = 0;  // index into Workload::features
  int label = 0;            // global class id
  int task = 0;
};

struct TaskData {
  int task = 0;
  int class_begin = 0;
  int class_count = 0;
  std::vector<Example> train;
  std::vector<Example> test;

  ad::ClassRange range() const { return {class_begin, class_begin + class_count}; }
};

/// A task stream with every clip turned into MFCC features.
struct Workload {
  std::vector<dsp::FeatureMatrix> features;
  std::vector<TaskData> tasks;
  std::size_t total_classes = 0;
  std::size_t n_mfcc = 0;
  std::size_t n_frames = 0;

  /// Stored size of one example: raw float32 features.
  std::size_t bytes_per_sample() const { return n_mfcc * n_frames * sizeof(float); }

  /// [N, n_mfcc, n_frames] model input.
  ad::Tensor batch(std::span<const Example> examples) const;
  std::vector<int> labels(std::span<const Example> examples) const;
  std::vector<ad::ClassRange> ranges(std::span<const Example> examples) const;
};

Workload materialize(const TaskStream& stream, const dsp::FrontendConfig& frontend);

}  // namespace kwscl::data
