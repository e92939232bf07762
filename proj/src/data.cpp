#include "vidode/data.hpp"

#include "vidode/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <regex>
#include <sstream>

namespace vidode {

namespace fs = std::filesystem;

VideoClip::VideoClip(std::string clip_id, std::vector<Image> frames, std::vector<double> timestamps,
                     std::optional<std::string> description, double max_time)
    : id_(std::move(clip_id)),
      frames_(std::move(frames)),
      timestamps_(std::move(timestamps)),
      description_(std::move(description)) {
  if (frames_.empty()) throw DatasetError("clip '" + id_ + "' has no frames");
  if (frames_.size() != timestamps_.size()) {
    throw DatasetError("clip '" + id_ + "': " + std::to_string(frames_.size()) + " frames but " +
                       std::to_string(timestamps_.size()) + " timestamps");
  }
  if (timestamps_.front() != 0.0) throw DatasetError("clip '" + id_ + "': first timestamp must be 0");
  for (std::size_t i = 1; i < timestamps_.size(); ++i) {
    if (!(timestamps_[i] > timestamps_[i - 1])) {
      throw DatasetError("clip '" + id_ + "': timestamps must be strictly increasing");
    }
  }
  if (timestamps_.back() > max_time) {
    throw DatasetError("clip '" + id_ + "': timestamp exceeds " + std::to_string(max_time));
  }
  for (const auto& f : frames_) {
    if (!f.same_size(frames_.front())) throw DatasetError("clip '" + id_ + "': frames differ in size");
  }
}

VideoClip VideoClip::select(const std::vector<std::size_t>& indices, bool rebase) const {
  std::vector<Image> frames;
  std::vector<double> times;
  for (std::size_t i : indices) {
    if (i >= frames_.size()) throw ValidationError("clip '" + id_ + "': frame index out of range");
    frames.push_back(frames_[i]);
    times.push_back(timestamps_[i]);
  }
  if (!times.empty() && rebase) {
    const double t0 = times.front();
    for (auto& t : times) t -= t0;
  }
  const double max_time = times.empty() ? 1.0 : std::max(1.0, times.back());
  return VideoClip(id_, std::move(frames), std::move(times), description_, max_time);
}

std::vector<double> normalize_timestamps(const std::vector<long long>& frame_indices) {
  if (frame_indices.empty()) throw ValidationError("normalize_timestamps: no frame indices");
  for (std::size_t i = 1; i < frame_indices.size(); ++i) {
    if (frame_indices[i] <= frame_indices[i - 1]) {
      throw ValidationError("normalize_timestamps: indices must be strictly increasing");
    }
  }
  if (frame_indices.size() == 1) return {0.0};
  const double first = static_cast<double>(frame_indices.front());
  const double span = static_cast<double>(frame_indices.back()) - first;
  std::vector<double> out;
  out.reserve(frame_indices.size());
  for (long long idx : frame_indices) out.push_back((static_cast<double>(idx) - first) / span);
  out.back() = 1.0;
  return out;
}

namespace {

std::map<std::string, std::string> read_descriptions(const fs::path& root) {
  const fs::path table = root / "descriptions.tsv";
  std::ifstream f(table);
  if (!f) throw DatasetError("missing descriptions table " + table.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DatasetError("descriptions.tsv: line without TAB: " + line);
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

std::vector<double> read_timestamps(const fs::path& file) {
  std::ifstream f(file);
  std::vector<double> out;
  std::string tok;
  while (f >> tok) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw DatasetError(file.string() + ": not a number: " + tok);
    }
  }
  return out;
}

}  // namespace

VideoClip load_clip(const fs::path& dir, const std::string& clip_id, std::optional<std::string> description,
                    double time_scale) {
  static const std::regex frame_re(R"(frame_(\d+)\.png)");
  std::vector<std::pair<long long, fs::path>> entries;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && std::regex_match(name, m, frame_re)) {
      entries.emplace_back(std::stoll(m[1].str()), e.path());
    }
  }
  if (entries.empty()) throw DatasetError("clip directory " + dir.string() + " contains no frames");
  std::sort(entries.begin(), entries.end());

  std::vector<long long> indices;
  std::vector<Image> frames;
  for (const auto& [idx, path] : entries) {
    indices.push_back(idx);
    frames.push_back(load_png(path));
  }
  std::vector<double> times;
  if (fs::exists(dir / "timestamps.txt")) {
    times = read_timestamps(dir / "timestamps.txt");
  } else {
    times = normalize_timestamps(indices);
  }
  for (auto& t : times) t *= time_scale;
  return VideoClip(clip_id, std::move(frames), std::move(times), std::move(description),
                   std::max(1.0, time_scale));
}

std::vector<VideoClip> load_dataset(const fs::path& root, Split split, const DatasetOptions& options) {
  if (!fs::is_directory(root)) throw DatasetError("dataset root not found: " + root.string());
  if (!(options.split_fraction >= 0.0 && options.split_fraction <= 1.0)) {
    throw ValidationError("split fraction must lie in [0, 1]");
  }
  const auto descriptions = read_descriptions(root);

  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) ids.push_back(e.path().filename().string());
  }
  // Directory enumeration order is unspecified; sort before the seeded shuffle.
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(options.seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(options.split_fraction * ids.size()));
  std::vector<std::string> chosen = split == Split::Train
                                        ? std::vector<std::string>(ids.begin(), ids.begin() + n_train)
                                        : std::vector<std::string>(ids.begin() + n_train, ids.end());
  std::sort(chosen.begin(), chosen.end());

  std::vector<VideoClip> clips;
  for (const auto& id : chosen) {
    auto it = descriptions.find(id);
    if (it == descriptions.end()) throw DatasetError("no description for clip '" + id + "'");
    clips.push_back(load_clip(root / id, id, it->second, options.time_scale));
  }
  return clips;
}

void write_dataset(const fs::path& root, const std::vector<VideoClip>& clips) {
  fs::create_directories(root);
  std::ofstream table(root / "descriptions.tsv");
  for (const auto& clip : clips) {
    const fs::path dir = root / clip.id();
    fs::create_directories(dir);
    std::ofstream ts(dir / "timestamps.txt");
    ts << std::setprecision(17);
    for (std::size_t i = 0; i < clip.size(); ++i) {
      std::ostringstream name;
      name << "frame_" << std::setw(5) << std::setfill('0') << i << ".png";
      save_png(clip.frame(i), dir / name.str());
      ts << clip.timestamps()[i] << '\n';
    }
    table << clip.id() << '\t' << clip.description().value_or("") << '\n';
  }
}

TrainingBatch sample_batch(const std::vector<ClipPtr>& clips, std::size_t batch_size, std::size_t k,
                           std::mt19937_64& rng) {
  if (clips.empty()) throw ValidationError("sample_batch: no clips");
  if (batch_size == 0 || k == 0) throw ValidationError("sample_batch: batch_size and k must be positive");
  for (const auto& c : clips) {
    if (c->size() < k) {
      throw ValidationError("sample_batch: clip '" + c->id() + "' has " + std::to_string(c->size()) +
                            " frames, fewer than k=" + std::to_string(k));
    }
  }

  TrainingBatch batch;
  std::vector<std::size_t> order(clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<std::size_t> picked;
  std::sample(order.begin(), order.end(), std::back_inserter(picked), std::min(batch_size, clips.size()), rng);

  for (std::size_t idx : picked) {
    const auto& clip = clips[idx];
    std::vector<std::size_t> frames(clip->size());
    for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = i;
    std::vector<std::size_t> chosen;
    std::sample(frames.begin(), frames.end(), std::back_inserter(chosen), k, rng);
    batch.clips.push_back(clip);
    batch.sampled_indices.push_back(std::move(chosen));
  }

  for (std::size_t i = 0; i < batch.clips.size(); ++i) {
    const auto& own = batch.clips[i]->description();
    std::vector<std::string> candidates;
    for (std::size_t j = 0; j < batch.clips.size(); ++j) {
      const auto& other = batch.clips[j]->description();
      if (j != i && other && other != own) candidates.push_back(*other);
    }
    if (candidates.empty()) {
      batch.target_descriptions.push_back(own.value_or(""));
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      batch.target_descriptions.push_back(candidates[pick(rng)]);
    }
  }
  return batch;
}

TrainingBatch sample_batch(const std::vector<ClipPtr>& clips, std::size_t batch_size, std::size_t k,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_batch(clips, batch_size, k, rng);
}

std::vector<VideoClip> make_blob_clips(const SyntheticOptions& options) {
  static const std::vector<std::pair<std::string, std::array<double, 3>>> colors = {
      {"red", {0.9, 0.15, 0.1}},   {"green", {0.1, 0.85, 0.2}}, {"blue", {0.15, 0.25, 0.9}},
      {"yellow", {0.9, 0.85, 0.1}}, {"purple", {0.65, 0.2, 0.8}}, {"cyan", {0.1, 0.8, 0.85}},
      {"orange", {0.95, 0.55, 0.1}}, {"white", {0.9, 0.9, 0.9}},
  };
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double h = options.height, w = options.width;
  const double sigma = 0.12 * std::min(h, w);

  std::vector<VideoClip> clips;
  for (int c = 0; c < options.clips; ++c) {
    const auto& [color_name, rgb] = colors[static_cast<std::size_t>(c) % colors.size()];
    const double y0 = h * (0.3 + 0.4 * unit(rng));
    const double x0 = w * (0.3 + 0.4 * unit(rng));
    const double angle = 2.0 * 3.14159265358979323846 * unit(rng);
    const double speed = 0.35 * std::min(h, w) * (0.5 + 0.5 * unit(rng));
    const double vy = speed * std::sin(angle), vx = speed * std::cos(angle);
    const double background = 0.1 + 0.1 * unit(rng);

    std::vector<Image> frames;
    std::vector<long long> idx;
    for (int f = 0; f < options.frames; ++f) {
      const double t = options.frames > 1 ? static_cast<double>(f) / (options.frames - 1) : 0.0;
      const double cy = y0 + vy * (t - 0.5), cx = x0 + vx * (t - 0.5);
      Image img(options.height, options.width);
      for (int y = 0; y < options.height; ++y)
        for (int x = 0; x < options.width; ++x) {
          const double d2 = ((y + 0.5 - cy) * (y + 0.5 - cy) + (x + 0.5 - cx) * (x + 0.5 - cx));
          const double a = std::exp(-d2 / (2.0 * sigma * sigma));
          for (int ch = 0; ch < Image::kChannels; ++ch) {
            img.at(y, x, ch) = background * (1.0 - a) + rgb[ch] * a;
          }
        }
      frames.push_back(std::move(img));
      idx.push_back(f);
    }
    const char* heading = std::abs(vx) > std::abs(vy) ? (vx > 0 ? "right" : "left") : (vy > 0 ? "down" : "up");
    std::ostringstream id;
    id << "clip_" << std::setw(3) << std::setfill('0') << c;
    clips.emplace_back(id.str(), std::move(frames), normalize_timestamps(idx),
                       color_name + " blob moving " + heading);
  }
  return clips;
}

}  // namespace vidode
