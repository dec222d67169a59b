#pragma once

#include <string>
#include <vector>

#include "uvtex/detector.hpp"
#include "uvtex/image.hpp"

namespace uvtex {

struct FrameEval {
  std::vector<Detection> dets;
  BBox gt;
  bool has_gt = true;
};

// Attack success rate: the fraction of frames with no detection matching the
// label whose IoU with gt exceeds tau_iou and whose confidence exceeds
// tau_conf. Frames without gt count as evaded.
double asr(const std::vector<FrameEval>& frames, double tau_iou, double tau_conf,
           const std::string& label = "person");

// 1 - detected / total.
double physical_asr(int n_frames_detected, int n_total);

// Single-class average precision: detections pooled and sorted by confidence,
// greedily matched to each frame's gt at IoU > tau_iou, 101-point
// interpolated area under the precision-recall curve.
double map_metric(const std::vector<FrameEval>& frames, double tau_iou);

// Mean over pixels of the L2 norm of RGB differences across all horizontally
// and vertically adjacent pixel pairs.
double total_variation(const Image& image);

}  // namespace uvtex
