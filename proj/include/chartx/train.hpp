#pragma once

#include <string>
#include <vector>

#include "chartx/branches.hpp"
#include "chartx/dataset.hpp"
#include "chartx/net.hpp"

namespace chartx::train {

struct LossWeights {
  double text = 0.1;  // lambda_text
  double om = 1.0;    // lambda_OM
  double ang = 1.0;   // lambda_ang
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static LossWeights from_json(const nlohmann::json& j);
};

// Stage 1 trains detection only (branch weights frozen, branch lambdas zero);
// stage 2 releases the branches at the weights above. Single pass.
struct TrainSchedule {
  int stage1_steps = 2000;
  int stage2_steps = 2000;
  double lr = 1e-4;
  double grad_clip = 10.0;
  uint64_t seed = 1;
  int checkpoint_every = 500;   // periodic f64 resume checkpoints; 0 disables
  bool plateau_enabled = false; // early stage-1 exit on loss plateau
  double plateau_rel = 0.01;
  int plateau_window = 500;
  double lambda_o = 1.0;  // orientation term inside L_text
  double lambda_c = 1.0;  // CTC term inside L_text
  int max_texts_per_step = 3;
  int max_pairs_per_kind = 8;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainSchedule from_json(const nlohmann::json& j);
};

struct StepLosses {
  int step = 0;
  int stage = 1;
  double det = 0, text = 0, om = 0, ang = 0, total = 0;
};

// L_bar = L_det + lambda_text L_text + lambda_OM L_OM;
// L_pie adds + lambda_ang L_ang. L_ang must be present iff kind == Pie.
double assemble_loss(gen::ChartKind kind, double l_det, double l_text, double l_om,
                     std::optional<double> l_ang, const LossWeights& weights);

struct TrainResult {
  std::string checkpoint_path;
  std::vector<StepLosses> history;
  int stage2_start_step = 0;
};

// Kind must match the dataset contents. Writes `out_path` (f32 checkpoint with
// embedded model config), `out_path + ".meta.json"` and
// `out_path + ".history.csv"`. `resume_path` restarts from an f64 resume
// checkpoint with bit-identical continuation.
TrainResult train_extractor(const std::string& dataset_dir, const net::ModelConfig& mcfg,
                            const TrainSchedule& sched, const LossWeights& weights,
                            const std::string& out_path,
                            const std::string& resume_path = "");

// Plain cross-entropy classifier on a mixed dataset.
TrainResult train_type_classifier(const std::string& dataset_dir, const TrainSchedule& sched,
                                  const std::string& out_path);

void write_history_csv(const std::vector<StepLosses>& history, const std::string& path);

}  // namespace chartx::train
