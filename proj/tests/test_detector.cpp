#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "uvtex/detector.hpp"
#include "uvtex/rng.hpp"

using namespace uvtex;

TEST_CASE("iou: identity, disjoint, and hand-computed overlap") {
  const BBox a{0, 0, 2, 2};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou(a, {5, 5, 6, 6}) == 0.0);
  // Intersection 2, union 6.
  CHECK(iou(a, {1, 0, 3, 2}) == doctest::Approx(1.0 / 3.0));
  CHECK(iou({1, 0, 3, 2}, a) == doctest::Approx(1.0 / 3.0));  // symmetry
  CHECK(iou({1, 1, 1, 1}, {1, 1, 1, 1}) == 0.0);              // empty union
}

TEST_CASE("detection_loss: basic selection rules") {
  const BBox gt{10, 10, 30, 30};
  SUBCASE("single overlapping person box returns its confidence") {
    std::vector<Detection> dets{{{12, 12, 28, 28}, 0.9, "person"}};
    CHECK(detection_loss(dets, gt, "person") == doctest::Approx(0.9));
  }
  SUBCASE("no detections means the attack already succeeded") {
    CHECK(detection_loss({}, gt, "person") == 0.0);
  }
  SUBCASE("argmax is on IoU, not confidence") {
    std::vector<Detection> dets{
        {{11, 11, 29, 29}, 0.2, "person"},  // high IoU, low conf
        {{25, 25, 60, 60}, 0.9, "person"},  // low IoU, high conf
    };
    CHECK(detection_loss(dets, gt, "person") == doctest::Approx(0.2));
  }
  SUBCASE("other labels are ignored") {
    std::vector<Detection> dets{{{12, 12, 28, 28}, 0.9, "bicycle"}};
    CHECK(detection_loss(dets, gt, "person") == 0.0);
  }
  SUBCASE("zero-IoU detections leave the frame evaded") {
    std::vector<Detection> dets{{{50, 50, 60, 60}, 0.99, "person"}};
    CHECK(detection_loss(dets, gt, "person") == 0.0);
  }
}

TEST_CASE("detection_loss is monotone in the selected confidence") {
  const BBox gt{0, 0, 10, 10};
  std::vector<Detection> dets{{{1, 1, 9, 9}, 0.3, "person"}};
  const double lo = detection_loss(dets, gt, "person");
  dets[0].conf = 0.8;
  CHECK(detection_loss(dets, gt, "person") >= lo);
}

TEST_CASE("toy_forward: zero image with zero bias gives conf 0.5 per window") {
  ToyDetector det;
  det.tmpl = Image(4, 4, 0.3);
  det.bias = 0.0;
  det.stride = 2;
  const Image img(8, 8, 0.0);
  const auto dets = toy_forward(det, img);
  REQUIRE(dets.size() == 9);  // 3 x 3 stride-aligned windows
  for (const auto& d : dets) {
    CHECK(d.conf == doctest::Approx(0.5));
    CHECK(d.label == "person");
    CHECK(d.conf > 0.0);
    CHECK(d.conf < 1.0);
  }
}

TEST_CASE("toy_forward: the matching window scores logistic(|template|^2)") {
  Rng rng(3);
  ToyDetector det;
  det.tmpl = Image(4, 4);
  for (double& v : det.tmpl.data) v = rng.uniform(0.05, 0.4);  // nonnegative, nonzero
  det.bias = 0.0;
  det.stride = 4;
  Image img(8, 8, 0.0);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) img.at(4 + x, 4 + y, c) = det.tmpl.at(x, y, c);
  const auto dets = toy_forward(det, img);
  double norm2 = 0;
  for (double v : det.tmpl.data) norm2 += v * v;
  double best_conf = 0;
  std::size_t best = 0;
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (dets[i].conf > best_conf) {
      best_conf = dets[i].conf;
      best = i;
    }
  CHECK(best_conf == doctest::Approx(logistic(norm2)));
  CHECK(dets[best].box.x1 == 4.0);
  CHECK(dets[best].box.y1 == 4.0);
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (i != best) CHECK(dets[i].conf < best_conf);
}

TEST_CASE("toy_backward: zero upstream gives a zero gradient") {
  ToyDetector det;
  det.tmpl = Image(4, 4, 0.2);
  det.stride = 2;
  Image img(8, 8, 0.5);
  const auto dets = toy_forward(det, img);
  const Image grad = toy_backward(det, img, std::vector<double>(dets.size(), 0.0));
  for (double v : grad.data) CHECK(v == 0.0);
}

TEST_CASE("toy_backward: single window closed form") {
  ToyDetector det;
  det.tmpl = Image(4, 4);
  Rng rng(5);
  for (double& v : det.tmpl.data) v = rng.uniform(-0.3, 0.3);
  det.bias = 0.1;
  det.stride = 4;
  Image img(4, 4);
  for (double& v : img.data) v = rng.uniform();
  const auto dets = toy_forward(det, img);
  REQUIRE(dets.size() == 1);
  const Image grad = toy_backward(det, img, {1.0});
  const double conf = dets[0].conf;
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    CHECK(grad.data[i] ==
          doctest::Approx(conf * (1.0 - conf) * det.tmpl.data[i]).epsilon(1e-12));
}

TEST_CASE("toy gradients match finite differences through the detection loss") {
  // d detection_loss / d image on random 16 x 16 images across 20 seeds.
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    ToyDetector det;
    det.tmpl = Image(6, 6);
    for (double& v : det.tmpl.data) v = rng.uniform(-0.2, 0.2);
    det.bias = rng.uniform(-0.5, 0.5);
    det.stride = 5;
    Image img(16, 16);
    for (double& v : img.data) v = rng.uniform();
    const BBox gt{3, 3, 12, 12};

    const auto dets = toy_forward(det, img);
    const int pick = detection_loss_pick(dets, gt, "person");
    if (pick < 0) continue;
    std::vector<double> upstream(dets.size(), 0.0);
    upstream[static_cast<std::size_t>(pick)] = 1.0;
    const Image grad = toy_backward(det, img, upstream);

    const double h = 1e-4;
    Rng pick_rng(seed * 77 + 1);
    for (int probe = 0; probe < 12; ++probe) {
      const std::size_t i = pick_rng.next_u64() % img.data.size();
      Image plus = img, minus = img;
      plus.data[i] += h;
      minus.data[i] -= h;
      const double fd = (detection_loss(toy_forward(det, plus), gt, "person") -
                         detection_loss(toy_forward(det, minus), gt, "person")) /
                        (2 * h);
      const double an = grad.data[i];
      const double scale = std::max({std::abs(fd), std::abs(an), 1e-8});
      CHECK(std::abs(fd - an) / scale < 1e-4);
    }
  }
}

TEST_CASE("ensemble_loss: weighted mean semantics") {
  CHECK(ensemble_loss({0.4}, {1.0}) == doctest::Approx(0.4));
  CHECK(ensemble_loss({0.2, 0.4}, {1.0, 1.0}) == doctest::Approx(0.3));
  // Zero-weight entries are ignored.
  CHECK(ensemble_loss({0.2, 0.9}, {1.0, 0.0}) == doctest::Approx(0.2));
  CHECK_THROWS(ensemble_loss({0.2}, {0.0}));
  CHECK_THROWS(ensemble_loss({}, {}));
  CHECK_THROWS(ensemble_loss({0.1, 0.2}, {1.0}));
}
