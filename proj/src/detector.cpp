#include "uvtex/detector.hpp"

#include <algorithm>
#include <cmath>

#include "uvtex/errors.hpp"

namespace uvtex {

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

int detection_loss_pick(const std::vector<Detection>& dets, const BBox& gt,
                        const std::string& label) {
  int best = -1;
  double best_iou = 0.0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].label != label) continue;
    const double v = iou(dets[i].box, gt);
    if (v > best_iou) {
      best_iou = v;
      best = static_cast<int>(i);
    }
  }
  return best;  // -1 when every IoU is 0 or no labeled detection exists
}

double detection_loss(const std::vector<Detection>& dets, const BBox& gt,
                      const std::string& label) {
  const int pick = detection_loss_pick(dets, gt, label);
  return pick < 0 ? 0.0 : dets[pick].conf;
}

void ToyDetector::validate() const {
  if (tmpl.width < 1 || tmpl.width != tmpl.height)
    throw ConfigError("toy detector: template must be square and nonempty");
  if (stride < 1) throw ConfigError("toy detector: stride must be >= 1");
}

std::vector<Detection> toy_forward(const ToyDetector& det, const Image& image) {
  det.validate();
  const int t = det.window();
  if (image.width < t || image.height < t)
    throw ConfigError("toy detector: image smaller than the window");
  std::vector<Detection> out;
  for (int y0 = 0; y0 + t <= image.height; y0 += det.stride)
    for (int x0 = 0; x0 + t <= image.width; x0 += det.stride) {
      double score = det.bias;
      for (int y = 0; y < t; ++y)
        for (int x = 0; x < t; ++x)
          for (int c = 0; c < 3; ++c)
            score += det.tmpl.at(x, y, c) * image.at(x0 + x, y0 + y, c);
      const double conf = logistic(score);
      if (conf > 0.01) {
        Detection d;
        d.box = {static_cast<double>(x0), static_cast<double>(y0),
                 static_cast<double>(x0 + t), static_cast<double>(y0 + t)};
        d.conf = conf;
        d.label = "person";
        out.push_back(std::move(d));
      }
    }
  return out;
}

Image toy_backward(const ToyDetector& det, const Image& image,
                   const std::vector<double>& d_conf) {
  det.validate();
  const int t = det.window();
  Image grad(image.width, image.height);
  std::size_t idx = 0;
  for (int y0 = 0; y0 + t <= image.height; y0 += det.stride)
    for (int x0 = 0; x0 + t <= image.width; x0 += det.stride) {
      double score = det.bias;
      for (int y = 0; y < t; ++y)
        for (int x = 0; x < t; ++x)
          for (int c = 0; c < 3; ++c)
            score += det.tmpl.at(x, y, c) * image.at(x0 + x, y0 + y, c);
      const double conf = logistic(score);
      if (conf <= 0.01) continue;  // window emitted no detection
      if (idx >= d_conf.size())
        throw ConfigError("toy_backward: upstream gradient shorter than detection list");
      const double up = d_conf[idx++];
      if (up != 0.0) {
        const double d_score = up * conf * (1.0 - conf);
        for (int y = 0; y < t; ++y)
          for (int x = 0; x < t; ++x)
            for (int c = 0; c < 3; ++c)
              grad.at(x0 + x, y0 + y, c) += d_score * det.tmpl.at(x, y, c);
      }
    }
  if (idx != d_conf.size())
    throw ConfigError("toy_backward: upstream gradient longer than detection list");
  return grad;
}

double ensemble_loss(const std::vector<double>& losses, const std::vector<double>& weights) {
  if (losses.empty() || losses.size() != weights.size())
    throw ConfigError("ensemble_loss: losses and weights must be nonempty and aligned");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (weights[i] < 0) throw ConfigError("ensemble_loss: weights must be nonnegative");
    num += weights[i] * losses[i];
    den += weights[i];
  }
  if (den <= 0) throw ConfigError("ensemble_loss: weights sum to zero");
  return num / den;
}

}  // namespace uvtex
