#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "blendnet/matrix.hpp"

namespace blendnet {

enum class Task { open_ended, count, multi_choice };

std::string to_string(Task t);
Task parse_task(const std::string& s);

// One synthetic QA item. Features are stored in single precision, the same
// representation used on disk.
struct VideoSample {
  std::vector<Matrix<float>> clip_frames;  // num_clips x (d x frames_per_clip)
  std::vector<Matrix<float>> clip_motion;  // num_clips x (d x 1)
  Matrix<float> video_motion;              // d x 1
  Matrix<float> question;                  // d x 1
  std::vector<Matrix<float>> candidates;   // multi_choice only, each d x 1
  std::int64_t label = 0;  // answer index, count, or correct-candidate index

  friend bool operator==(const VideoSample&, const VideoSample&) = default;
};

}  // namespace blendnet
