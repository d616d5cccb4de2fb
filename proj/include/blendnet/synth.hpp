#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "blendnet/matrix.hpp"
#include "blendnet/sample.hpp"

namespace blendnet {

struct SynthSpec {
  std::size_t d = 32;
  std::size_t num_clips = 2;
  std::size_t frames_per_clip = 4;
  std::size_t num_event_types = 4;
  Task task = Task::open_ended;
  std::size_t num_samples = 200;
  std::size_t answer_vocab = 4;
  std::size_t num_candidates = 5;  // multi_choice only
  double noise_std = 0.05;         // per component, in units of the (unit) signature norm
  std::uint64_t seed = 0;

  // UsageError on an impossible spec.
  void validate() const;
  std::size_t total_frames() const { return num_clips * frames_per_clip; }
};

// Fixed vectors shared by every sample of a spec: one unit signature per event
// type, a background signature and the task's unit query vector, all mutually
// orthogonal.
struct EventBank {
  std::vector<Matrix<float>> signatures;  // E x (d x 1)
  Matrix<float> background;               // d x 1
  Matrix<float> query;                    // d x 1
};

EventBank make_event_bank(const SynthSpec& spec);

struct DatasetHeader {
  Task task = Task::open_ended;
  std::size_t d = 0;
  std::size_t num_clips = 0;
  std::size_t frames_per_clip = 0;
  std::size_t num_candidates = 0;  // 0 unless multi_choice
  std::size_t answer_vocab = 0;

  std::size_t floats_per_sample() const;
  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<VideoSample> samples;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// open_ended: a dominant event fills more than half the frames, the rest show
//   one other event; label = dominant event.
// count: `label` frames (0..total) show the queried event, the rest show the
//   background signature; question = count query + queried signature.
// multi_choice: frames as in open_ended; candidates = dominant signature among
//   other signatures in random order; label = its index.
Dataset generate(const SynthSpec& spec);

// Writes <base>.manifest and <base>.blob.
void write_dataset(const Dataset& data, const std::filesystem::path& base);
Dataset read_dataset(const std::filesystem::path& base);

std::filesystem::path manifest_path(const std::filesystem::path& base);
std::filesystem::path blob_path(const std::filesystem::path& base);

}  // namespace blendnet
