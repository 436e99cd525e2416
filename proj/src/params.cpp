#include "chartx/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace chartx::ad {

using ordered_json = nlohmann::ordered_json;

Tensor& ParameterStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw InputError("ParameterStore::add: duplicate name " + name);
  index_[name] = entries_.size();
  entries_.push_back(Entry{name, std::move(init), true, {}, {}});
  return entries_.back().value;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InputError("ParameterStore: unknown parameter " + name);
  return entries_[it->second].value;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InputError("ParameterStore: unknown parameter " + name);
  return entries_[it->second].value;
}

ParameterStore::Entry& ParameterStore::entry(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InputError("ParameterStore: unknown parameter " + name);
  return entries_[it->second];
}

void ParameterStore::set_trainable(const std::string& name, bool trainable) {
  entry(name).trainable = trainable;
}

void ParameterStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
  for (Entry& e : entries_)
    if (e.name.rfind(prefix, 0) == 0) e.trainable = trainable;
}

Binding::Binding(Tape& tape, ParameterStore& store) : tape_(&tape) {
  for (auto& e : store.entries()) vars_.emplace(e.name, tape.leaf(e.value, e.trainable));
}

Var Binding::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw InputError("Binding: unknown parameter " + name);
  return it->second;
}

bool Binding::has_grad(const std::string& name) const {
  auto it = vars_.find(name);
  return it != vars_.end() && tape_->has_grad(it->second.idx);
}

const Tensor& Binding::grad(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw InputError("Binding: unknown parameter " + name);
  return tape_->grad(it->second.idx);
}

void Adam::step(ParameterStore& store, const Binding& binding) {
  ++t_;
  // global gradient-norm clipping over everything that gets updated this step
  double sq = 0;
  for (auto& e : store.entries()) {
    if (!e.trainable || !binding.has_grad(e.name)) continue;
    sq += binding.grad(e.name).array().square().sum();
  }
  double norm = std::sqrt(sq);
  double clip = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;

  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& e : store.entries()) {
    if (!e.trainable || !binding.has_grad(e.name)) continue;
    const Tensor& g = binding.grad(e.name);
    if (e.m.numel() == 0) {
      e.m = Tensor(e.value.shape());
      e.v = Tensor(e.value.shape());
    }
    e.m.array() = cfg_.beta1 * e.m.array() + (1 - cfg_.beta1) * clip * g.array();
    e.v.array() = cfg_.beta2 * e.v.array() + (1 - cfg_.beta2) * (clip * g.array()).square();
    e.value.array() -=
        cfg_.lr * (e.m.array() / bc1) / ((e.v.array() / bc2).sqrt() + cfg_.eps);
  }
}

namespace {

void append_array_f32(std::string& out, const Tensor& t) {
  for (Eigen::Index i = 0; i < t.numel(); ++i) {
    float f = static_cast<float>(t[i]);
    char buf[4];
    std::memcpy(buf, &f, 4);
    out.append(buf, 4);
  }
}

void append_array_f64(std::string& out, const Tensor& t) {
  for (Eigen::Index i = 0; i < t.numel(); ++i) {
    double d = t[i];
    char buf[8];
    std::memcpy(buf, &d, 8);
    out.append(buf, 8);
  }
}

Tensor read_array(std::ifstream& in, const std::vector<int>& shape, bool f64) {
  Tensor t(shape);
  if (f64) {
    in.read(reinterpret_cast<char*>(t.data()), t.numel() * 8);
  } else {
    std::vector<float> buf(static_cast<size_t>(t.numel()));
    in.read(reinterpret_cast<char*>(buf.data()), t.numel() * 4);
    for (Eigen::Index i = 0; i < t.numel(); ++i) t[i] = buf[static_cast<size_t>(i)];
  }
  if (!in) throw IoError("checkpoint: truncated array data");
  return t;
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::string& path,
                     const std::string& dtype, const ordered_json* meta,
                     bool with_optimizer) {
  if (dtype != "f32" && dtype != "f64") throw InputError("save_checkpoint: bad dtype");
  ordered_json header;
  header["version"] = 1;
  header["dtype"] = dtype;
  ordered_json params = ordered_json::object();
  for (const auto& e : store.entries()) params[e.name] = e.value.shape();
  if (with_optimizer) {
    for (const auto& e : store.entries()) {
      if (e.m.numel() == 0) continue;
      params["adam.m:" + e.name] = e.m.shape();
      params["adam.v:" + e.name] = e.v.shape();
    }
  }
  header["params"] = std::move(params);
  header["meta"] = meta ? *meta : ordered_json::object();

  std::string blob = header.dump();
  blob += '\n';
  bool f64 = dtype == "f64";
  auto append = [&](const Tensor& t) {
    if (f64)
      append_array_f64(blob, t);
    else
      append_array_f32(blob, t);
  };
  for (const auto& e : store.entries()) append(e.value);
  if (with_optimizer) {
    for (const auto& e : store.entries()) {
      if (e.m.numel() == 0) continue;
      append(e.m);
      append(e.v);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

ordered_json load_checkpoint(ParameterStore& store, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("load_checkpoint: missing header");
  ordered_json header = ordered_json::parse(line, nullptr, false);
  if (header.is_discarded()) throw IoError("load_checkpoint: bad header JSON");
  bool f64 = header.value("dtype", "f32") == "f64";

  for (auto& [name, shape_json] : header.at("params").items()) {
    std::vector<int> shape = shape_json.get<std::vector<int>>();
    Tensor t = read_array(in, shape, f64);
    if (name.rfind("adam.m:", 0) == 0) {
      store.entry(name.substr(7)).m = std::move(t);
    } else if (name.rfind("adam.v:", 0) == 0) {
      store.entry(name.substr(7)).v = std::move(t);
    } else if (store.has(name)) {
      store.at(name) = std::move(t);
    } else {
      store.add(name, std::move(t));
    }
  }
  return header.value("meta", ordered_json::object());
}

}  // namespace chartx::ad
