#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "chartx/geometry.hpp"
#include "chartx/selftest.hpp"

using namespace chartx;
using geom::Box;

TEST_CASE("iou identities") {
  Box a{3, 4, 10, 6};
  CHECK(geom::iou(a, a) == 1.0);
  CHECK(geom::iou(Box{0, 0, 2, 2}, Box{5, 5, 2, 2}) == 0.0);
  CHECK(geom::iou(Box{0, 0, 2, 2}, Box{1, 1, 2, 2}) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  // symmetry on random boxes
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    Box p{rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(0.5, 20), rng.uniform(0.5, 20)};
    Box q{rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(0.5, 20), rng.uniform(0.5, 20)};
    double ab = geom::iou(p, q), ba = geom::iou(q, p);
    CHECK(ab == ba);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(geom::iou(p, p) == 1.0);
  }
}

TEST_CASE("iou equals rational oracle on integer boxes") {
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    int ax = static_cast<int>(rng.uniform_int(0, 40)), ay = static_cast<int>(rng.uniform_int(0, 40));
    int aw = static_cast<int>(rng.uniform_int(1, 30)), ah = static_cast<int>(rng.uniform_int(1, 30));
    int bx = static_cast<int>(rng.uniform_int(0, 40)), by = static_cast<int>(rng.uniform_int(0, 40));
    int bw = static_cast<int>(rng.uniform_int(1, 30)), bh = static_cast<int>(rng.uniform_int(1, 30));
    double got = geom::iou(Box{double(ax), double(ay), double(aw), double(ah)},
                           Box{double(bx), double(by), double(bw), double(bh)});
    CHECK(got == selftest::iou_integer_oracle(ax, ay, aw, ah, bx, by, bw, bh));
  }
}

TEST_CASE("anchor generation counts and geometry") {
  geom::AnchorConfig cfg;  // defaults: 7 ratios x 5 scales
  CHECK(cfg.anchors_per_cell() == 35);
  CHECK(geom::generate_anchors(1, 1, cfg).size() == 35);
  CHECK(geom::generate_anchors(2, 3, cfg).size() == 210);

  // anchor count law over random sizes
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    int h = static_cast<int>(rng.uniform_int(1, 64));
    int w = static_cast<int>(rng.uniform_int(1, 64));
    CHECK(geom::generate_anchors(h, w, cfg).size() ==
          static_cast<size_t>(h) * static_cast<size_t>(w) * 35);
  }

  geom::AnchorConfig one;
  one.aspect_ratios = {1.0};
  one.scales = {4.0};
  one.stride = 8;
  auto a = geom::generate_anchors(1, 1, one);
  CHECK(a[0].w == doctest::Approx(32.0));  // 4x4 feature-map pixels at stride 8
  CHECK(a[0].h == doctest::Approx(32.0));
  CHECK(a[0].cx() == doctest::Approx(4.0));
  CHECK(a[0].cy() == doctest::Approx(4.0));

  // area and ratio law for every anchor
  geom::AnchorConfig full;
  auto anchors = geom::generate_anchors(2, 2, full);
  size_t idx = 0;
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (double r : full.aspect_ratios)
        for (double s : full.scales) {
          const Box& b = anchors[idx++];
          CHECK(b.area() == doctest::Approx(s * 8 * s * 8).epsilon(1e-9));
          CHECK(b.h / b.w == doctest::Approx(r).epsilon(1e-9));
        }
}

TEST_CASE("anchor assignment rules") {
  geom::AnchorConfig cfg;
  auto anchors = geom::generate_anchors(4, 4, cfg);

  SUBCASE("anchor equal to gt is positive with zero offsets") {
    std::vector<Box> gts = {anchors[17]};
    auto a = geom::assign_anchors(anchors, gts, 0.7, 0.3);
    CHECK(a.labels[17] == 0);
    for (int d = 0; d < 4; ++d) CHECK(a.offsets[17][d] == doctest::Approx(0.0));
  }

  SUBCASE("argmax fallback keeps low-iou gt positive") {
    std::vector<Box> gts = {Box{1, 1, 2, 1}};  // tiny box, all IoU below neg thresh
    auto a = geom::assign_anchors(anchors, gts, 0.7, 0.3);
    CHECK(a.positive_count >= 1);
  }

  SUBCASE("empty gt means all negative") {
    auto a = geom::assign_anchors(anchors, {}, 0.7, 0.3);
    CHECK(a.positive_count == 0);
    for (int l : a.labels) CHECK(l == geom::AssignmentSet::kNegative);
  }

  SUBCASE("labels equal exhaustive reference on random instances") {
    Rng rng(7);
    std::vector<Box> rand_anchors;
    for (int i = 0; i < 200; ++i)
      rand_anchors.push_back(
          Box{rng.uniform(0, 80), rng.uniform(0, 80), rng.uniform(2, 30), rng.uniform(2, 30)});
    std::vector<Box> gts;
    for (int i = 0; i < 5; ++i)
      gts.push_back(
          Box{rng.uniform(0, 80), rng.uniform(0, 80), rng.uniform(2, 30), rng.uniform(2, 30)});
    auto got = geom::assign_anchors(rand_anchors, gts, 0.7, 0.3);

    // brute-force re-derivation
    for (size_t i = 0; i < rand_anchors.size(); ++i) {
      double best = 0;
      int best_g = -1;
      for (size_t g = 0; g < gts.size(); ++g) {
        double v = geom::iou(rand_anchors[i], gts[g]);
        if (v > best) {
          best = v;
          best_g = static_cast<int>(g);
        }
      }
      bool argmax_of_some = false;
      int argmax_gt = -1;
      for (size_t g = 0; g < gts.size(); ++g) {
        double gbest = -1;
        size_t garg = 0;
        for (size_t j = 0; j < rand_anchors.size(); ++j) {
          double v = geom::iou(rand_anchors[j], gts[g]);
          if (v > gbest) {
            gbest = v;
            garg = j;
          }
        }
        if (garg == i) {
          argmax_of_some = true;
          argmax_gt = static_cast<int>(g);
        }
      }
      int want;
      if (argmax_of_some)
        want = argmax_gt;
      else if (best > 0.7)
        want = best_g;
      else if (best <= 0.3)
        want = geom::AssignmentSet::kNegative;
      else
        want = geom::AssignmentSet::kIgnore;
      CHECK(got.labels[i] == want);
    }
  }
}

TEST_CASE("offset encode/decode roundtrip") {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    Box anchor{rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(2, 30), rng.uniform(2, 30)};
    Box gt{rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(2, 30), rng.uniform(2, 30)};
    Box back = geom::decode_offsets(anchor, geom::encode_offsets(anchor, gt));
    CHECK(back.x == doctest::Approx(gt.x).epsilon(1e-9));
    CHECK(back.y == doctest::Approx(gt.y).epsilon(1e-9));
    CHECK(back.w == doctest::Approx(gt.w).epsilon(1e-9));
    CHECK(back.h == doctest::Approx(gt.h).epsilon(1e-9));
  }
}

TEST_CASE("nms basics and reference equivalence") {
  SUBCASE("single box survives") {
    auto out = geom::nms({{Box{0, 0, 4, 4}, 0.5, 0}}, 0.5);
    CHECK(out.size() == 1);
  }
  SUBCASE("identical boxes keep the higher score") {
    auto out = geom::nms({{Box{0, 0, 4, 4}, 0.8, 0}, {Box{0, 0, 4, 4}, 0.9, 1}}, 0.5);
    REQUIRE(out.size() == 1);
    CHECK(out[0].score == 0.9);
  }
  SUBCASE("matches the O(n^2) greedy reference on random instances") {
    Rng rng(9);
    for (int inst = 0; inst < 50; ++inst) {
      std::vector<geom::Scored> boxes;
      for (int i = 0; i < 50; ++i)
        boxes.push_back(geom::Scored{
            Box{rng.uniform(0, 60), rng.uniform(0, 60), rng.uniform(2, 30), rng.uniform(2, 30)},
            rng.uniform(0, 1), i});
      auto got = geom::nms(boxes, 0.5);
      auto want = selftest::nms_reference(boxes, 0.5);
      REQUIRE(got.size() == want.size());
      for (size_t i = 0; i < got.size(); ++i) CHECK(got[i].index == want[i].index);
      // no kept pair exceeds the threshold; output sorted by score
      for (size_t i = 0; i < got.size(); ++i) {
        if (i > 0) CHECK(got[i - 1].score >= got[i].score);
        for (size_t j = i + 1; j < got.size(); ++j)
          CHECK(geom::iou(got[i].box, got[j].box) <= 0.5);
      }
      // idempotence
      auto twice = geom::nms(got, 0.5);
      CHECK(twice.size() == got.size());
    }
  }
}

TEST_CASE("map_box semantics") {
  CHECK(geom::map_box(Box{7, 3, 5, 9}, 1, geom::MapDir::ImageToFeature).x == 7);
  Box f = geom::map_box(Box{16, 16, 32, 32}, 8, geom::MapDir::ImageToFeature);
  CHECK(f.x == 2);
  CHECK(f.y == 2);
  CHECK(f.w == 4);
  CHECK(f.h == 4);

  Rng rng(10);
  for (int i = 0; i < 200; ++i) {
    Box b{rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0.5, 40), rng.uniform(0.5, 40)};
    double stride = rng.uniform(1, 16);
    Box fm = geom::map_box(b, stride, geom::MapDir::ImageToFeature);
    Box back = geom::map_box(fm, stride, geom::MapDir::FeatureToImage);
    // round trip covers the original box
    CHECK(back.x <= b.x + 1e-9);
    CHECK(back.y <= b.y + 1e-9);
    CHECK(back.x2() >= b.x2() - 1e-9);
    CHECK(back.y2() >= b.y2() - 1e-9);
  }
}

TEST_CASE("feature map rotation") {
  Rng rng(11);
  ad::Tensor fm({9, 9, 2});
  for (Eigen::Index i = 0; i < fm.numel(); ++i) fm[i] = rng.normal();

  SUBCASE("angle 0 is identity") {
    ad::Tensor out = geom::rotate_feature_map(fm, 0);
    for (Eigen::Index i = 0; i < fm.numel(); ++i) CHECK(out[i] == fm[i]);
  }

  SUBCASE("angle 360 within bilinear tolerance") {
    ad::Tensor out = geom::rotate_feature_map(fm, 360);
    for (int y = 1; y < 8; ++y)
      for (int x = 1; x < 8; ++x)
        for (int c = 0; c < 2; ++c)
          CHECK(std::abs(out(y, x, c) - fm(y, x, c)) < 1e-5);
  }

  SUBCASE("unit impulse relocates to the rotation image at 90 degrees") {
    ad::Tensor imp({9, 9, 1});
    imp(4, 7, 0) = 1.0;  // right-center
    ad::Tensor out = geom::rotate_feature_map(imp, 90);
    CHECK(out(1, 4, 0) == doctest::Approx(1.0));  // top-center after visual CCW
    double total = 0;
    for (Eigen::Index i = 0; i < out.numel(); ++i) total += out[i];
    CHECK(total == doctest::Approx(1.0));
  }

  SUBCASE("matches the dense per-pixel reference at arbitrary angles") {
    for (double ang : {17.0, 45.0, 133.0, 290.0}) {
      ad::Tensor got = geom::rotate_feature_map(fm, ang);
      ad::Tensor want = selftest::rotate_reference(fm, ang);
      for (Eigen::Index i = 0; i < got.numel(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }

  SUBCASE("composition within tolerance on smooth input") {
    // gently varying field: low curvature keeps bilinear error under 1e-3
    ad::Tensor smooth({21, 21, 1});
    for (int y = 0; y < 21; ++y)
      for (int x = 0; x < 21; ++x)
        smooth(y, x, 0) = 0.5 + 0.4 * std::sin(0.06 * x) * std::cos(0.05 * y) + 0.01 * x;
    ad::Tensor once = geom::rotate_feature_map(geom::rotate_feature_map(smooth, 20), 35);
    ad::Tensor direct = geom::rotate_feature_map(smooth, 55);
    for (int y = 7; y < 14; ++y)
      for (int x = 7; x < 14; ++x)
        CHECK(std::abs(once(y, x, 0) - direct(y, x, 0)) < 1e-3);
  }

  SUBCASE("rotation is linear in feature values") {
    ad::Tensor g({9, 9, 2});
    for (Eigen::Index i = 0; i < g.numel(); ++i) g[i] = rng.normal();
    double alpha = 1.7, beta = -0.4;
    ad::Tensor mix({9, 9, 2});
    for (Eigen::Index i = 0; i < mix.numel(); ++i) mix[i] = alpha * fm[i] + beta * g[i];
    ad::Tensor lhs = geom::rotate_feature_map(mix, 33);
    ad::Tensor rf = geom::rotate_feature_map(fm, 33);
    ad::Tensor rg = geom::rotate_feature_map(g, 33);
    for (Eigen::Index i = 0; i < lhs.numel(); ++i)
      CHECK(lhs[i] == doctest::Approx(alpha * rf[i] + beta * rg[i]).epsilon(1e-12));
  }

  SUBCASE("tape rotation matches pure rotation and is differentiable") {
    ad::Tape tape;
    ad::Var v = tape.leaf(fm, true);
    ad::Var rot = geom::rotate_feature_map(v, 25.0);
    ad::Tensor pure = geom::rotate_feature_map(fm, 25.0);
    for (Eigen::Index i = 0; i < pure.numel(); ++i)
      CHECK(rot.value()[i] == doctest::Approx(pure[i]).epsilon(1e-12));
    tape.backward(ad::mean(rot));
    CHECK(tape.has_grad(v.idx));
  }
}
