#include "vidode/metrics.hpp"

#include "vidode/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>
#include <sstream>

namespace vidode {

FlowOracle zero_flow_oracle() {
  return [](const Image& prev, const Image&) { return FlowField(prev.height, prev.width); };
}

FlowOracle constant_shift_oracle(double dx, double dy) {
  return [dx, dy](const Image& prev, const Image&) { return FlowField(prev.height, prev.width, dx, dy); };
}

FlowOracle exhaustive_flow_oracle(int radius, int half_block) {
  if (radius < 0 || half_block < 0) throw ValidationError("exhaustive flow: radius and block must be non-negative");
  return [radius, half_block](const Image& prev, const Image& next) {
    const int h = next.height, w = next.width;
    FlowField f(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double best = std::numeric_limits<double>::infinity();
        int best_mag = 0, bdx = 0, bdy = 0;
        for (int dy = -radius; dy <= radius; ++dy) {
          for (int dx = -radius; dx <= radius; ++dx) {
            if (y + dy < 0 || y + dy >= h || x + dx < 0 || x + dx >= w) continue;
            double sad = 0.0;
            int n = 0;
            for (int by = -half_block; by <= half_block; ++by) {
              for (int bx = -half_block; bx <= half_block; ++bx) {
                const int qy = y + by, qx = x + bx, sy = qy + dy, sx = qx + dx;
                if (qy < 0 || qy >= h || qx < 0 || qx >= w || sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                for (int c = 0; c < Image::kChannels; ++c) sad += std::abs(next.at(qy, qx, c) - prev.at(sy, sx, c));
                ++n;
              }
            }
            const double cost = sad / n;
            const int mag = dx * dx + dy * dy;
            if (cost < best || (cost == best && mag < best_mag)) {
              best = cost;
              best_mag = mag;
              bdx = dx;
              bdy = dy;
            }
          }
        }
        f.dx[static_cast<std::size_t>(y) * w + x] = bdx;
        f.dy[static_cast<std::size_t>(y) * w + x] = bdy;
      }
    }
    return f;
  };
}

FlowOracle flow_oracle_from_name(const std::string& name) {
  if (name == "zero") return zero_flow_oracle();
  if (name == "exhaustive" || name == "exhaustive-small-displacement") return exhaustive_flow_oracle();
  const std::string prefix = "constant-shift:";
  if (name.rfind(prefix, 0) == 0) {
    std::istringstream in(name.substr(prefix.size()));
    double dx = 0, dy = 0;
    char comma = 0;
    if (in >> dx >> comma >> dy && comma == ',' && in.peek() == EOF) return constant_shift_oracle(dx, dy);
  }
  throw ValidationError("unknown flow oracle '" + name + "' (expected zero, constant-shift:<dx>,<dy> or exhaustive)");
}

WarpResult warp_backward(const Image& prev, const FlowField& flow) {
  if (flow.height != prev.height || flow.width != prev.width) throw ShapeError("flow field size does not match frame");
  const int h = prev.height, w = prev.width;
  WarpResult r{Image(h, w), std::vector<bool>(static_cast<std::size_t>(h) * w, false)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double sx = x + flow.dx[i], sy = y + flow.dy[i];
      if (!(sx >= 0.0 && sx <= w - 1 && sy >= 0.0 && sy <= h - 1)) continue;
      const int x0 = std::min(static_cast<int>(std::floor(sx)), w - 1), y0 = std::min(static_cast<int>(std::floor(sy)), h - 1);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double ax = sx - x0, ay = sy - y0;
      for (int c = 0; c < Image::kChannels; ++c) {
        const double top = (1 - ax) * prev.at(y0, x0, c) + ax * prev.at(y0, x1, c);
        const double bot = (1 - ax) * prev.at(y1, x0, c) + ax * prev.at(y1, x1, c);
        r.warped.at(y, x, c) = (1 - ay) * top + ay * bot;
      }
      r.valid[i] = true;
    }
  }
  return r;
}

double warping_error(const std::vector<Image>& frames, const FlowOracle& oracle) {
  if (frames.size() < 2) throw ValidationError("warping_error needs at least 2 frames");
  double total = 0.0;
  int pairs = 0;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    const Image& prev = frames[t];
    const Image& next = frames[t + 1];
    if (!prev.same_size(next)) throw ShapeError("warping_error: frames differ in size");
    const WarpResult wr = warp_backward(prev, oracle(prev, next));
    double err = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < next.height; ++y) {
      for (int x = 0; x < next.width; ++x) {
        if (!wr.valid[static_cast<std::size_t>(y) * next.width + x]) continue;
        for (int c = 0; c < Image::kChannels; ++c) err += std::abs(next.at(y, x, c) - wr.warped.at(y, x, c));
        n += Image::kChannels;
      }
    }
    if (n == 0) continue;
    total += err / static_cast<double>(n);
    ++pairs;
  }
  if (pairs == 0) throw ValidationError("warping_error: flow leaves no valid pixels");
  return total / pairs;
}

double embedding_consistency(const JointEmbedder& embedder, const std::vector<Image>& frames) {
  if (frames.size() < 2) throw ValidationError("embedding_consistency needs at least 2 frames");
  std::vector<std::vector<double>> e;
  for (const auto& f : frames) e.push_back(embedder.embed_image(f).values);
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      sum += 1.0 - cosine(e[i], e[j]);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

double manipulation_accuracy(const std::vector<std::vector<double>>& embeddings, const std::vector<double>& gt,
                             const std::vector<double>& target) {
  if (embeddings.empty()) throw ValidationError("manipulation_accuracy needs at least one frame");
  if (gt == target) throw ValidationError("manipulation_accuracy: target and ground-truth embeddings are identical");
  std::size_t hits = 0;
  for (const auto& e : embeddings) {
    if (cosine(e, target) > cosine(e, gt)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(embeddings.size());
}

double manipulation_accuracy(const JointEmbedder& embedder, const std::vector<Image>& frames, const std::string& gt_text,
                             const std::string& tgt_text) {
  if (gt_text == tgt_text) throw ValidationError("manipulation_accuracy: target and ground-truth texts are identical");
  std::vector<std::vector<double>> e;
  for (const auto& f : frames) e.push_back(embedder.embed_image(f).values);
  return manipulation_accuracy(e, embedder.embed_text(gt_text).values, embedder.embed_text(tgt_text).values);
}

std::string MetricReport::to_json() const {
  using nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  ordered_json j;
  j["frames"] = frames;
  j["warping_error"] = opt(warping_error);
  if (warping_error) j["flow_oracle"] = flow_oracle;
  j["embedding_consistency"] = opt(embedding_consistency);
  j["manipulation_accuracy"] = opt(manipulation_accuracy);
  if (manipulation_accuracy) {
    j["gt_text"] = gt_text;
    j["tgt_text"] = tgt_text;
  }
  for (const char* k : {"fvd", "is", "fid", "akd", "aed"}) j[k] = nullptr;
  return j.dump(2) + "\n";
}

}  // namespace vidode
