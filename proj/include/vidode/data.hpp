#pragma once

// Dataset ingestion: clips of frames with normalized timestamps, the on-disk
// layout, and irregular frame sampling for training batches.
//
// On-disk layout:
//   <root>/descriptions.tsv          clip_id <TAB> text
//   <root>/<clip_id>/frame_00000.png numbered frames (gaps allowed)
//   <root>/<clip_id>/timestamps.txt  optional, one normalized time per frame

#include "vidode/image.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace vidode {

/// Immutable sequence of frames. Invariants are checked on construction:
/// at least one frame, equal frame sizes, timestamps[0] == 0, strictly
/// increasing, and the last timestamp no greater than `max_time`.
class VideoClip {
 public:
  VideoClip(std::string clip_id, std::vector<Image> frames, std::vector<double> timestamps,
            std::optional<std::string> description = std::nullopt, double max_time = 1.0);

  const std::string& id() const { return id_; }
  const std::vector<Image>& frames() const { return frames_; }
  const Image& frame(std::size_t i) const { return frames_.at(i); }
  const std::vector<double>& timestamps() const { return timestamps_; }
  const std::optional<std::string>& description() const { return description_; }
  std::size_t size() const { return frames_.size(); }
  int height() const { return frames_.front().height; }
  int width() const { return frames_.front().width; }

  /// Sub-clip with the given (sorted, distinct) frame indices. Timestamps are
  /// kept as-is, shifted so the first selected frame is at 0 when `rebase`.
  VideoClip select(const std::vector<std::size_t>& indices, bool rebase = false) const;

 private:
  std::string id_;
  std::vector<Image> frames_;
  std::vector<double> timestamps_;
  std::optional<std::string> description_;
};

using ClipPtr = std::shared_ptr<const VideoClip>;

struct TrainingBatch {
  std::vector<ClipPtr> clips;
  /// Per clip: k distinct sorted frame indices.
  std::vector<std::vector<std::size_t>> sampled_indices;
  /// Per clip: description drawn from another clip in the batch.
  std::vector<std::string> target_descriptions;
};

enum class Split { Train, Test };

struct DatasetOptions {
  double split_fraction = 0.8;
  std::uint64_t seed = 0;
  /// Multiplies the per-clip normalized timestamps.
  double time_scale = 1.0;
};

/// Affine map of strictly increasing frame indices onto [0, 1]; first -> 0.
std::vector<double> normalize_timestamps(const std::vector<long long>& frame_indices);

/// Reads one clip directory. `description` comes from the table.
VideoClip load_clip(const std::filesystem::path& dir, const std::string& clip_id,
                    std::optional<std::string> description, double time_scale = 1.0);

std::vector<VideoClip> load_dataset(const std::filesystem::path& root, Split split,
                                    const DatasetOptions& options = {});

/// Writes clips in the layout above (timestamps.txt is always written).
void write_dataset(const std::filesystem::path& root, const std::vector<VideoClip>& clips);

TrainingBatch sample_batch(const std::vector<ClipPtr>& clips, std::size_t batch_size, std::size_t k,
                           std::mt19937_64& rng);
TrainingBatch sample_batch(const std::vector<ClipPtr>& clips, std::size_t batch_size, std::size_t k,
                           std::uint64_t seed);

struct SyntheticOptions {
  int clips = 5;
  int frames = 8;
  int height = 32;
  int width = 24;
  std::uint64_t seed = 1;
};

/// Clips of a colored Gaussian blob translating at constant velocity over a
/// dark background. Each clip gets a description naming its color and heading.
std::vector<VideoClip> make_blob_clips(const SyntheticOptions& options);

}  // namespace vidode
