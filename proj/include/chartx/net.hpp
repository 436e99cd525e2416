#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "chartx/annotations.hpp"
#include "chartx/geometry.hpp"
#include "chartx/params.hpp"
#include "chartx/png_io.hpp"

namespace chartx::net {

struct BackboneConfig {
  std::vector<int> channels = {16, 32, 64};  // one conv stage per 2x downsample
  int stride() const { return 1 << static_cast<int>(channels.size()); }
  int out_channels() const { return channels.back(); }
};

// Architecture + inference thresholds for one extractor (bar or pie).
struct ModelConfig {
  gen::ChartKind kind = gen::ChartKind::Bar;
  BackboneConfig backbone;
  geom::AnchorConfig anchors;
  int roi_size = 7;
  int head_hidden = 256;
  int om_hidden = 256;
  int text_lstm_hidden = 64;
  int text_rows = 4;   // pooled feature rows fed to the recognizer
  int max_text_frames = 48;
  int angle_lstm_hidden = 64;
  int angle_max_steps = 10;
  double smooth_tau = 0.5;
  double smooth_k = 10.0;
  double rpn_pos_thresh = 0.7;
  double rpn_neg_thresh = 0.3;
  double confidence_thresh = 0.8;
  double nms_iou = 0.5;
  int rpn_top_n = 256;

  const std::vector<gen::ObjectClass>& classes() const { return gen::class_set(kind); }
  int num_classes() const { return static_cast<int>(classes().size()); }
  int background_index() const { return num_classes(); }

  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Converts an image to a [H,W,3] tensor in [0,1]; `down` average-pools square
// blocks first (used by the type classifier).
ad::Tensor image_to_tensor(const gen::ImageRGB& img, int down = 1);

// ---- parameter construction -------------------------------------------------

void init_extractor_params(ad::ParameterStore& store, const ModelConfig& cfg, Rng& rng);
void init_type_params(ad::ParameterStore& store, Rng& rng);

// Branch parameter prefixes, frozen during stage 1.
const std::vector<std::string>& branch_prefixes();

// ---- forward pieces -----------------------------------------------------------

struct BackboneOut {
  ad::Var stage1;  // stride-2 map, used by the text recognizer
  ad::Var final;   // stride-8 map (backbone.stride())
};

BackboneOut backbone_forward(ad::Tape& tape, const ad::Binding& P, const ModelConfig& cfg,
                             const ad::Tensor& image);

struct RpnOut {
  ad::Var obj_logits;  // [H*W*A]
  ad::Var offsets;     // [H*W*A, 4]
  int fm_h = 0, fm_w = 0;
};

RpnOut rpn_forward(ad::Tape& tape, const ad::Binding& P, const ModelConfig& cfg, ad::Var fm);

// Bilinear 7x7 pooling of an image-space box from a stride-s feature map.
// Boxes smaller than one cell are expanded to one cell (flag reported).
ad::Var roi_extract(ad::Tape& tape, ad::Var fm, geom::Box box, double stride, int roi_size,
                    bool* expanded = nullptr);

struct HeadOut {
  ad::Var class_logits;  // [N, K+1]
  ad::Var offsets;       // [N, 4]
};

// rois: [N, roi*roi*C] stacked flattened features.
HeadOut detect_head(ad::Tape& tape, const ad::Binding& P, const ModelConfig& cfg, ad::Var rois);

ad::Var type_forward(ad::Tape& tape, const ad::Binding& P, const ad::Tensor& image_ds);

// ---- scored proposals -----------------------------------------------------------

struct ScoredProposal {
  geom::Box box;         // image space, clipped
  double objectness = 0;
  int anchor_index = 0;
};

// Decode + clip + threshold + sort (score desc, anchor index asc) + truncate.
std::vector<ScoredProposal> select_top_proposals(const std::vector<geom::Box>& anchors,
                                                 const ad::Tensor& obj_logits,
                                                 const ad::Tensor& offsets, double img_w,
                                                 double img_h, double score_thresh, int top_n);

// ---- losses ------------------------------------------------------------------------

struct DetectionLossParts {
  ad::Var rpn_cls, rpn_reg, head_cls, head_reg;
  ad::Var total;
};

struct RpnBatch {
  std::vector<int> sample_idx;      // anchor indices in the minibatch
  std::vector<double> cls_targets;  // 1 positive / 0 negative
  std::vector<int> pos_idx;         // positive anchor indices
  ad::Tensor reg_targets;           // [P,4] encoded offsets
};

// 1:1 positive:negative sampling up to max_batch anchors.
RpnBatch sample_rpn_batch(const geom::AssignmentSet& assign, Rng& rng, int max_batch = 256);

struct ProposalBatch {
  std::vector<geom::Box> boxes;
  std::vector<int> labels;    // class index or background
  std::vector<int> pos_rows;  // rows with a foreground label
  ad::Tensor reg_targets;     // [P,4]
};

// Mixes RPN proposals with ground-truth boxes, assigns classes at IoU 0.5,
// samples 1:1 up to max_batch.
ProposalBatch sample_proposal_batch(const std::vector<ScoredProposal>& proposals,
                                    const std::vector<geom::Box>& gt_boxes,
                                    const std::vector<int>& gt_labels, int background_index,
                                    Rng& rng, int max_batch = 64);

DetectionLossParts detection_loss(ad::Tape& tape, const RpnOut& rpn, const RpnBatch& rpn_batch,
                                  const HeadOut& head, const ProposalBatch& prop_batch);

}  // namespace chartx::net
