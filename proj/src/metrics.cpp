#include "uvtex/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "uvtex/errors.hpp"

namespace uvtex {

double asr(const std::vector<FrameEval>& frames, double tau_iou, double tau_conf,
           const std::string& label) {
  if (frames.empty()) throw ConfigError("asr: no frames");
  std::size_t detected = 0;
  for (const auto& f : frames) {
    if (!f.has_gt) continue;
    for (const auto& d : f.dets) {
      if (d.label == label && d.conf > tau_conf && iou(d.box, f.gt) > tau_iou) {
        ++detected;
        break;
      }
    }
  }
  return 1.0 - static_cast<double>(detected) / static_cast<double>(frames.size());
}

double physical_asr(int n_frames_detected, int n_total) {
  if (n_total <= 0 || n_frames_detected < 0 || n_frames_detected > n_total)
    throw ConfigError("physical_asr: need 0 <= detected <= total, total > 0");
  return 1.0 - static_cast<double>(n_frames_detected) / static_cast<double>(n_total);
}

double map_metric(const std::vector<FrameEval>& frames, double tau_iou) {
  if (frames.empty()) throw ConfigError("map_metric: no frames");
  struct Pooled {
    double conf;
    std::size_t frame;
    std::size_t index;
  };
  std::vector<Pooled> pool;
  std::size_t n_gt = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].has_gt) ++n_gt;
    for (std::size_t i = 0; i < frames[f].dets.size(); ++i)
      pool.push_back({frames[f].dets[i].conf, f, i});
  }
  if (pool.empty() || n_gt == 0) return 0.0;
  std::sort(pool.begin(), pool.end(), [](const Pooled& a, const Pooled& b) {
    if (a.conf != b.conf) return a.conf > b.conf;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.index < b.index;
  });

  std::vector<bool> matched(frames.size(), false);
  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (const auto& p : pool) {
    const auto& frame = frames[p.frame];
    const bool hit = frame.has_gt && !matched[p.frame] &&
                     iou(frame.dets[p.index].box, frame.gt) > tau_iou;
    if (hit) {
      matched[p.frame] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }

  // 101-point interpolation: mean over r in {0, 0.01, ..., 1} of the best
  // precision at recall >= r.
  double ap = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    double best = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i)
      if (recall[i] >= level) best = std::max(best, precision[i]);
    ap += best;
  }
  return ap / 101.0;
}

double total_variation(const Image& image) {
  if (image.width < 2 || image.height < 2)
    throw ConfigError("total_variation: image must be at least 2 x 2");
  double sum = 0.0;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      if (x + 1 < image.width) {
        double d2 = 0;
        for (int c = 0; c < 3; ++c) {
          const double d = image.at(x + 1, y, c) - image.at(x, y, c);
          d2 += d * d;
        }
        sum += std::sqrt(d2);
      }
      if (y + 1 < image.height) {
        double d2 = 0;
        for (int c = 0; c < 3; ++c) {
          const double d = image.at(x, y + 1, c) - image.at(x, y, c);
          d2 += d * d;
        }
        sum += std::sqrt(d2);
      }
    }
  return sum / static_cast<double>(image.pixel_count());
}

}  // namespace uvtex
