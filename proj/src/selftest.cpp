#include "chartx/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "chartx/branches.hpp"
#include "chartx/infer.hpp"

namespace chartx::selftest {

using ad::Tape;
using ad::Tensor;
using ad::Var;

double iou_integer_oracle(int ax, int ay, int aw, int ah, int bx, int by, int bw, int bh) {
  long long ix = std::max(0, std::min(ax + aw, bx + bw) - std::max(ax, bx));
  long long iy = std::max(0, std::min(ay + ah, by + bh) - std::max(ay, by));
  long long inter = ix * iy;
  long long uni = static_cast<long long>(aw) * ah + static_cast<long long>(bw) * bh - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<geom::Scored> nms_reference(const std::vector<geom::Scored>& scored,
                                        double iou_thresh) {
  std::vector<int> order(scored.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scored[static_cast<size_t>(a)].score != scored[static_cast<size_t>(b)].score)
      return scored[static_cast<size_t>(a)].score > scored[static_cast<size_t>(b)].score;
    return scored[static_cast<size_t>(a)].index < scored[static_cast<size_t>(b)].index;
  });
  std::vector<bool> removed(scored.size(), false);
  std::vector<geom::Scored> kept;
  for (size_t oi = 0; oi < order.size(); ++oi) {
    int i = order[oi];
    if (removed[static_cast<size_t>(i)]) continue;
    kept.push_back(scored[static_cast<size_t>(i)]);
    for (size_t oj = oi + 1; oj < order.size(); ++oj) {
      int j = order[oj];
      if (removed[static_cast<size_t>(j)]) continue;
      if (geom::iou(scored[static_cast<size_t>(i)].box, scored[static_cast<size_t>(j)].box) >
          iou_thresh)
        removed[static_cast<size_t>(j)] = true;
    }
  }
  return kept;
}

double ctc_enumeration_oracle(const Tensor& logits, const std::vector<int>& target) {
  int tn = logits.dim(0), kn = logits.dim(1), blank = kn - 1;
  // log-softmax per frame
  Eigen::MatrixXd lp(tn, kn);
  for (int t = 0; t < tn; ++t) {
    double mx = -1e300;
    for (int k = 0; k < kn; ++k) mx = std::max(mx, logits(t, k));
    double denom = 0;
    for (int k = 0; k < kn; ++k) denom += std::exp(logits(t, k) - mx);
    for (int k = 0; k < kn; ++k) lp(t, k) = logits(t, k) - mx - std::log(denom);
  }
  double total = 0;
  std::vector<int> path(static_cast<size_t>(tn), 0);
  long long count = 1;
  for (int t = 0; t < tn; ++t) count *= kn;
  for (long long c = 0; c < count; ++c) {
    long long v = c;
    for (int t = 0; t < tn; ++t) {
      path[static_cast<size_t>(t)] = static_cast<int>(v % kn);
      v /= kn;
    }
    // collapse: remove repeats then blanks
    std::vector<int> collapsed;
    int prev = -1;
    for (int s : path) {
      if (s != prev && s != blank) collapsed.push_back(s);
      prev = s;
    }
    if (collapsed != target) continue;
    double logp = 0;
    for (int t = 0; t < tn; ++t) logp += lp(t, path[static_cast<size_t>(t)]);
    total += std::exp(logp);
  }
  if (total <= 0) return std::numeric_limits<double>::infinity();
  return -std::log(total);
}

ad::Tensor rotate_reference(const Tensor& fm, double angle_deg) {
  // independent formulation: forward-map each output cell through the inverse
  // rotation written out longhand
  int h = fm.dim(0), w = fm.dim(1), c = fm.dim(2);
  Tensor out({h, w, c});
  double th = angle_deg * M_PI / 180.0;
  double cy = 0.5 * (h - 1), cx = 0.5 * (w - 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double dx = x - cx, dy = y - cy;
      double sx = cx + std::cos(th) * dx - std::sin(th) * dy;
      double sy = cy + std::sin(th) * dx + std::cos(th) * dy;
      int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      double fx = sx - x0, fy = sy - y0;
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int dyy = 0; dyy <= 1; ++dyy) {
          for (int dxx = 0; dxx <= 1; ++dxx) {
            int yy = y0 + dyy, xx = x0 + dxx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            double wgt = (dyy ? fy : 1 - fy) * (dxx ? fx : 1 - fx);
            acc += wgt * fm(yy, xx, ch);
          }
        }
        out(y, x, ch) = acc;
      }
    }
  }
  return out;
}

// ---- checks ---------------------------------------------------------------------

namespace {

using Check = std::function<bool(std::string&)>;

bool check_iou(std::string& detail) {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    int ax = static_cast<int>(rng.uniform_int(0, 50)), ay = static_cast<int>(rng.uniform_int(0, 50));
    int aw = static_cast<int>(rng.uniform_int(1, 30)), ah = static_cast<int>(rng.uniform_int(1, 30));
    int bx = static_cast<int>(rng.uniform_int(0, 50)), by = static_cast<int>(rng.uniform_int(0, 50));
    int bw = static_cast<int>(rng.uniform_int(1, 30)), bh = static_cast<int>(rng.uniform_int(1, 30));
    double got = geom::iou(geom::Box{double(ax), double(ay), double(aw), double(ah)},
                           geom::Box{double(bx), double(by), double(bw), double(bh)});
    double want = iou_integer_oracle(ax, ay, aw, ah, bx, by, bw, bh);
    if (got != want) {
      detail = "mismatch at case " + std::to_string(i);
      return false;
    }
  }
  double thirdcase = geom::iou(geom::Box{0, 0, 2, 2}, geom::Box{1, 1, 2, 2});
  if (thirdcase != 1.0 / 7.0) {
    detail = "1/7 case";
    return false;
  }
  return true;
}

bool check_nms(std::string& detail) {
  Rng rng(22);
  for (int inst = 0; inst < 100; ++inst) {
    std::vector<geom::Scored> boxes;
    int n = static_cast<int>(rng.uniform_int(1, 50));
    for (int i = 0; i < n; ++i) {
      geom::Box b{rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(1, 40),
                  rng.uniform(1, 40)};
      boxes.push_back(geom::Scored{b, rng.uniform(0, 1), i});
    }
    auto got = geom::nms(boxes, 0.5);
    auto want = nms_reference(boxes, 0.5);
    if (got.size() != want.size()) {
      detail = "size mismatch on instance " + std::to_string(inst);
      return false;
    }
    for (size_t i = 0; i < got.size(); ++i)
      if (got[i].index != want[i].index) {
        detail = "order mismatch on instance " + std::to_string(inst);
        return false;
      }
  }
  return true;
}

bool check_anchor_count(std::string& detail) {
  geom::AnchorConfig cfg;
  Rng rng(33);
  for (int i = 0; i < 20; ++i) {
    int h = static_cast<int>(rng.uniform_int(1, 40)), w = static_cast<int>(rng.uniform_int(1, 40));
    auto a = geom::generate_anchors(h, w, cfg);
    if (static_cast<int>(a.size()) != h * w * 35) {
      detail = "count law failed";
      return false;
    }
  }
  // scale 4, ratio 1, stride 8 -> 32x32 box
  geom::AnchorConfig one;
  one.aspect_ratios = {1.0};
  one.scales = {4.0};
  one.stride = 8;
  auto a = geom::generate_anchors(1, 1, one);
  if (std::abs(a[0].w - 32) > 1e-12 || std::abs(a[0].h - 32) > 1e-12) {
    detail = "scale geometry";
    return false;
  }
  return true;
}

bool check_smooth_indicator(std::string& detail) {
  net::SmoothIndicatorParams p{0.5, 10.0};
  if (std::abs(net::smooth_indicator(0.5, p) - 0.5) > 1e-12) {
    detail = "H(tau) != 0.5";
    return false;
  }
  double want = 1.0 / (1.0 + std::exp(-5.0));
  if (std::abs(net::smooth_indicator(0.75, p) - want) > 1e-12) {
    detail = "H(0.75) mismatch";
    return false;
  }
  return true;
}

bool check_ctc(std::string& detail) {
  Rng rng(44);
  for (int inst = 0; inst < 30; ++inst) {
    int tn = static_cast<int>(rng.uniform_int(1, 5));
    int an = static_cast<int>(rng.uniform_int(1, 3));
    Tensor logits({tn, an + 1});
    for (Eigen::Index i = 0; i < logits.numel(); ++i) logits[i] = rng.normal();
    int len = static_cast<int>(rng.uniform_int(0, std::min(2, tn)));
    std::vector<int> target;
    for (int i = 0; i < len; ++i) target.push_back(static_cast<int>(rng.uniform_int(0, an - 1)));
    int need = static_cast<int>(target.size());
    for (size_t i = 1; i < target.size(); ++i)
      if (target[i] == target[i - 1]) ++need;
    if (need > tn) continue;
    Tape tape;
    Var lv = tape.leaf(logits, false);
    double got = ad::ctc_loss(lv, target).value()[0];
    double want = ctc_enumeration_oracle(logits, target);
    if (std::abs(got - want) > 1e-9) {
      detail = "forward mismatch " + std::to_string(got - want);
      return false;
    }
  }
  return true;
}

bool check_grad(std::string& detail) {
  Rng rng(55);
  // sigmoid/tanh composition
  Tensor x({6});
  for (int i = 0; i < 6; ++i) x[i] = rng.normal();
  double err = ad::grad_check(
      [](Tape& t, std::vector<Var>& v) {
        (void)t;
        return ad::sum(ad::sigmoid(ad::tanh_v(v[0])));
      },
      {x}, 1e-3);
  if (err > 1e-6) {
    detail = "sigmoid-tanh " + std::to_string(err);
    return false;
  }
  // ctc loss gradient
  Tensor logits({4, 4});
  for (Eigen::Index i = 0; i < logits.numel(); ++i) logits[i] = rng.normal();
  err = ad::grad_check(
      [](Tape& t, std::vector<Var>& v) {
        (void)t;
        return ad::ctc_loss(v[0], {0, 1});
      },
      {logits}, 1e-3);
  if (err > 1e-4) {
    detail = "ctc grad " + std::to_string(err);
    return false;
  }
  return true;
}

bool check_rotation(std::string& detail) {
  Rng rng(66);
  Tensor fm({9, 9, 2});
  for (Eigen::Index i = 0; i < fm.numel(); ++i) fm[i] = rng.normal();
  Tensor same = geom::rotate_feature_map(fm, 0.0);
  for (Eigen::Index i = 0; i < fm.numel(); ++i)
    if (std::abs(same[i] - fm[i]) > 1e-12) {
      detail = "identity";
      return false;
    }
  Tensor got = geom::rotate_feature_map(fm, 37.0);
  Tensor want = rotate_reference(fm, 37.0);
  for (Eigen::Index i = 0; i < fm.numel(); ++i)
    if (std::abs(got[i] - want[i]) > 1e-9) {
      detail = "reference mismatch";
      return false;
    }
  return true;
}

bool check_interpolation(std::string& detail) {
  double v = infer::interpolate_value(150, {{200, 0}, {100, 10}});
  if (std::abs(v - 5.0) > 1e-12) {
    detail = "linear case";
    return false;
  }
  v = infer::interpolate_value(100, {{200, 0}, {100, 10}});
  if (std::abs(v - 10.0) > 1e-12) {
    detail = "exact tick";
    return false;
  }
  return true;
}

bool check_om_math(std::string& detail) {
  // hand case: conf 1.0, tau .5, k 10 -> weight sigmoid(10)^2 per pair
  net::SmoothIndicatorParams p{0.5, 10.0};
  double w = net::smooth_indicator(1.0, p);
  double expect_w = 1.0 / (1.0 + std::exp(-10.0));
  if (std::abs(w - expect_w) > 1e-15) {
    detail = "weight";
    return false;
  }
  if (net::om_pair_divergence(1.0, true) != 0.0) {
    detail = "KL identity";
    return false;
  }
  return true;
}

}  // namespace

std::vector<CheckResult> run_all() {
  std::vector<std::pair<std::string, Check>> checks = {
      {"iou-rational-oracle", check_iou},
      {"nms-greedy-reference", check_nms},
      {"anchor-count-law", check_anchor_count},
      {"smooth-indicator-formula", check_smooth_indicator},
      {"ctc-enumeration", check_ctc},
      {"gradient-checks", check_grad},
      {"rotation-reference", check_rotation},
      {"value-interpolation", check_interpolation},
      {"om-hand-math", check_om_math},
  };
  std::vector<CheckResult> results;
  for (auto& [name, fn] : checks) {
    CheckResult r;
    r.name = name;
    try {
      r.pass = fn(r.detail);
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = e.what();
    }
    results.push_back(std::move(r));
  }
  return results;
}

int run_and_print() {
  auto results = run_all();
  bool all = true;
  for (const auto& r : results) {
    std::printf("[%s] %s%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.empty() ? "" : ": ", r.detail.c_str());
    all = all && r.pass;
  }
  return all ? 0 : 1;
}

}  // namespace chartx::selftest
