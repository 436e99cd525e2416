#pragma once

#include <string>
#include <vector>

#include "chartx/geometry.hpp"

namespace chartx::selftest {

// Independent reference implementations used as oracles. These deliberately
// re-derive results with different code paths from the library.

// Exact IoU for integer boxes via integer areas.
double iou_integer_oracle(int ax, int ay, int aw, int ah, int bx, int by, int bw, int bh);

// O(n^2) greedy suppression with explicit mask bookkeeping.
std::vector<geom::Scored> nms_reference(const std::vector<geom::Scored>& scored,
                                        double iou_thresh);

// Brute-force CTC: enumerate every alignment path, collapse, sum probabilities.
// Returns -log p(target). Feasible for (A+1)^T up to ~1e6.
double ctc_enumeration_oracle(const ad::Tensor& logits, const std::vector<int>& target);

// Dense per-pixel rotation reference used against rotate_feature_map.
ad::Tensor rotate_reference(const ad::Tensor& fm, double angle_deg);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Fast oracle/property sweep backing the `selftest` subcommand.
std::vector<CheckResult> run_all();
int run_and_print();  // prints one line per check; 0 iff all pass

}  // namespace chartx::selftest
