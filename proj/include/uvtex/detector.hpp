#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "uvtex/image.hpp"

namespace uvtex {

struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double area() const { return (x2 - x1) * (y2 - y1); }
  bool valid() const { return x1 <= x2 && y1 <= y2; }
};

// Intersection over union; 0 when the union is empty.
double iou(const BBox& a, const BBox& b);

struct Detection {
  BBox box;
  double conf = 0.0;
  std::string label;
};

// Among detections carrying the target label, picks the one with the highest
// IoU against gt (ties resolved to the lowest index) and returns its index;
// -1 when no labeled detection overlaps gt.
int detection_loss_pick(const std::vector<Detection>& dets, const BBox& gt,
                        const std::string& label);
// Confidence of the picked detection; 0 when nothing qualifies.
double detection_loss(const std::vector<Detection>& dets, const BBox& gt,
                      const std::string& label);

// Sliding-window linear scorer: one template at one scale, logistic
// confidence, a detection per stride-aligned window with conf > 0.01.
struct ToyDetector {
  Image tmpl;        // T x T x 3 weights (any real values)
  double bias = 0.0;
  int stride = 1;

  int window() const { return tmpl.width; }
  void validate() const;
};

std::vector<Detection> toy_forward(const ToyDetector& det, const Image& image);

// Exact input gradient: `d_conf` is aligned with the detections returned by
// toy_forward on the same image.
Image toy_backward(const ToyDetector& det, const Image& image,
                   const std::vector<double>& d_conf);

// Weighted mean of per-detector losses.
double ensemble_loss(const std::vector<double>& losses, const std::vector<double>& weights);

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace uvtex
