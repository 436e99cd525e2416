#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "chartx/autodiff.hpp"
#include "chartx/tensor.hpp"

namespace chartx::ad {

// Named trainable arrays plus their Adam moments. Order of insertion is the
// canonical order for checkpoints and optimizer walks.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
    Tensor m, v;  // Adam moments, allocated on first update
  };

  Tensor& add(const std::string& name, Tensor init);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  Entry& entry(const std::string& name);

  void set_trainable(const std::string& name, bool trainable);
  // Applies to every parameter whose name starts with prefix.
  void set_trainable_prefix(const std::string& prefix, bool trainable);

  size_t size() const { return entries_.size(); }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Per-step binding of parameters onto a tape. Frozen parameters become
// constants, so their stored values stay bit-identical across steps.
class Binding {
 public:
  Binding(Tape& tape, ParameterStore& store);
  Var operator[](const std::string& name) const;
  bool has_grad(const std::string& name) const;
  const Tensor& grad(const std::string& name) const;

 private:
  Tape* tape_;
  std::unordered_map<std::string, Var> vars_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 10.0;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update using gradients found on the binding. Parameters with
  // no gradient this step are skipped (their moments are untouched too).
  void step(ParameterStore& store, const Binding& binding);

  int64_t t() const { return t_; }
  void set_t(int64_t t) { t_ = t; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
};

// Checkpoint container: one JSON header line
//   {"version":1,"dtype":"f32"|"f64","params":{name:[d0,d1,...],...},"meta":{...}}
// followed by the raw little-endian arrays in header order.
void save_checkpoint(const ParameterStore& store, const std::string& path,
                     const std::string& dtype = "f32",
                     const nlohmann::ordered_json* meta = nullptr,
                     bool with_optimizer = false);

// Replaces/creates parameters by name. Returns header "meta" (empty object if
// absent). Optimizer moments are restored when present in the file.
nlohmann::ordered_json load_checkpoint(ParameterStore& store, const std::string& path);

}  // namespace chartx::ad
