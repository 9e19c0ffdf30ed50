// Copyright 2026 The litetr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lite/compress.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lite/checkpoint.hpp"
#include "lite/errors.hpp"

namespace lite {

bool is_prunable(const std::string& name) {
  constexpr std::string_view suffix = ".weight";
  if (Model::is_embedding(name)) return true;
  return name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<double> default_sparsity_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 9; ++i) grid.push_back(i / 10.0);
  return grid;
}

// ---------------------------------------------------------------------------
// Pruning

Mask magnitude_mask(std::span<const double> weights, double sparsity) {
  if (!(sparsity >= 0.0) || sparsity >= 1.0) {
    throw ContractError("prune: sparsity must be in [0, 1), got " + std::to_string(sparsity));
  }
  const std::size_t n = weights.size();
  const auto k = static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(n)));
  Mask mask(n, 1);
  if (k == 0) return mask;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto smaller = [&](std::size_t a, std::size_t b) {
    const double ma = std::fabs(weights[a]);
    const double mb = std::fabs(weights[b]);
    return ma != mb ? ma < mb : a < b;
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), smaller);
  for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 0;
  return mask;
}

void apply_mask(std::span<double> weights, const Mask& mask) {
  if (mask.size() != weights.size()) {
    throw DimensionError("mask has " + std::to_string(mask.size()) + " entries for " +
                         std::to_string(weights.size()) + " weights");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (mask[i] == 0) weights[i] = 0.0;
  }
}

namespace {

Tensor find_parameter(const Model& model, const std::string& name) {
  for (const auto& [pname, t] : model.parameters()) {
    if (pname == name) return t;
  }
  throw ConfigError("unknown parameter " + name);
}

}  // namespace

MaskSet prune(Model& model, const std::map<std::string, double>& sparsity) {
  MaskSet masks;
  for (const auto& [name, s] : sparsity) {
    if (!is_prunable(name)) throw ConfigError("parameter " + name + " is not prunable");
    Tensor t = find_parameter(model, name);
    Mask mask = magnitude_mask(t.data(), s);
    apply_mask(t.mutable_data(), mask);
    masks.emplace(name, std::move(mask));
  }
  return masks;
}

SensitivityProfile sensitivity_scan(Model& model, const EvalFn& eval_fn, const std::vector<double>& grid) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.0 || grid[i] >= 1.0 || (i > 0 && grid[i] <= grid[i - 1])) {
      throw ContractError("sensitivity_scan: grid must be strictly increasing within [0, 1)");
    }
  }
  const double base = eval_fn();
  if (!std::isfinite(base)) throw NumericError("sensitivity_scan: unpruned eval loss is not finite");
  SensitivityProfile profile;
  for (auto& [name, t] : model.parameters()) {
    if (!is_prunable(name)) continue;
    Tensor p = t;
    const std::vector<double> saved(p.data().begin(), p.data().end());
    LayerSensitivity layer{name, saved.size(), {}};
    for (double s : grid) {
      apply_mask(p.mutable_data(), magnitude_mask(saved, s));
      const double loss = eval_fn();
      std::copy(saved.begin(), saved.end(), p.mutable_data().begin());
      if (!std::isfinite(loss)) {
        throw NumericError("sensitivity_scan: non-finite eval loss for " + name + " at sparsity " +
                           std::to_string(s));
      }
      layer.points.push_back({s, loss - base});
    }
    profile.push_back(std::move(layer));
  }
  return profile;
}

std::map<std::string, double> allocate_sparsity(const SensitivityProfile& profile, double target) {
  if (target < 0.0 || target >= 1.0) throw ContractError("allocate_sparsity: target must be in [0, 1)");
  std::size_t total = 0;
  for (const LayerSensitivity& l : profile) total += l.size;
  const double goal = target * static_cast<double>(total);
  std::vector<std::size_t> level(profile.size(), 0);  // number of grid points taken
  auto pruned_at = [&](std::size_t li, std::size_t lvl) {
    if (lvl == 0) return 0.0;
    return std::floor(profile[li].points[lvl - 1].sparsity * static_cast<double>(profile[li].size));
  };
  auto delta_at = [&](std::size_t li, std::size_t lvl) {
    return lvl == 0 ? 0.0 : profile[li].points[lvl - 1].delta;
  };
  double pruned = 0.0;
  while (pruned < goal) {
    std::size_t best = profile.size();
    double best_cost = 0.0;
    for (std::size_t li = 0; li < profile.size(); ++li) {
      if (level[li] >= profile[li].points.size()) continue;
      const double gained = pruned_at(li, level[li] + 1) - pruned_at(li, level[li]);
      if (gained <= 0.0) continue;
      const double cost = (delta_at(li, level[li] + 1) - delta_at(li, level[li])) / gained;
      if (best == profile.size() || cost < best_cost) {
        best = li;
        best_cost = cost;
      }
    }
    if (best == profile.size()) break;
    pruned += pruned_at(best, level[best] + 1) - pruned_at(best, level[best]);
    ++level[best];
  }
  std::map<std::string, double> out;
  for (std::size_t li = 0; li < profile.size(); ++li) {
    out[profile[li].name] = level[li] == 0 ? 0.0 : profile[li].points[level[li] - 1].sparsity;
  }
  return out;
}

// ---------------------------------------------------------------------------
// K-means quantization

namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0.0), values_(n, 0.0) {}

  void set(std::size_t i, double v) {
    const double diff = v - values_[i];
    values_[i] = v;
    for (std::size_t j = i + 1; j < tree_.size(); j += j & (~j + 1)) tree_[j] += diff;
  }
  double value(std::size_t i) const { return values_[i]; }
  double total() const {
    double s = 0.0;
    for (std::size_t j = values_.size(); j > 0; j -= j & (~j + 1)) s += tree_[j];
    return s;
  }
  // Smallest i with prefix(i + 1) > target.
  std::size_t find(double target) const {
    std::size_t pos = 0;
    std::size_t step = 1;
    while (step * 2 < tree_.size()) step *= 2;
    for (; step > 0; step /= 2) {
      if (pos + step < tree_.size() && tree_[pos + step] <= target) {
        pos += step;
        target -= tree_[pos];
      }
    }
    return std::min(pos, values_.size() - 1);
  }

 private:
  std::vector<double> tree_;
  std::vector<double> values_;
};

struct Histogram {
  std::vector<double> values;  // sorted unique
  std::vector<double> counts;
};

Histogram histogram(std::span<const double> weights) {
  std::vector<double> sorted(weights.begin(), weights.end());
  std::sort(sorted.begin(), sorted.end());
  Histogram h;
  for (double v : sorted) {
    if (h.values.empty() || v != h.values.back()) {
      h.values.push_back(v);
      h.counts.push_back(1.0);
    } else {
      h.counts.back() += 1.0;
    }
  }
  return h;
}

// k-means++ seeding: the first centroid is drawn by multiplicity, each next
// one with probability proportional to count * squared distance to the
// nearest chosen centroid.
std::vector<double> seed_centroids(const Histogram& h, std::size_t k, Rng& rng) {
  const std::size_t m = h.values.size();
  Fenwick weights(m);
  for (std::size_t i = 0; i < m; ++i) weights.set(i, h.counts[i]);
  std::vector<double> dist(m, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> chosen;  // sorted positions
  auto draw = [&]() {
    const double total = weights.total();
    std::size_t i = weights.find(rng.uniform() * total);
    while (weights.value(i) == 0.0) i = (i + 1) % m;
    return i;
  };
  auto add = [&](std::size_t c) {
    const auto it = std::lower_bound(chosen.begin(), chosen.end(), c);
    const std::size_t lo = it == chosen.begin() ? 0 : *std::prev(it);
    const std::size_t hi = it == chosen.end() ? m - 1 : *it;
    chosen.insert(it, c);
    for (std::size_t i = lo; i <= hi; ++i) {
      const double d = h.values[i] - h.values[c];
      if (d * d < dist[i]) {
        dist[i] = d * d;
        weights.set(i, h.counts[i] * dist[i]);
      }
    }
  };
  add(draw());
  while (chosen.size() < k) add(draw());
  std::vector<double> centroids;
  for (std::size_t c : chosen) centroids.push_back(h.values[c]);
  return centroids;
}

// Assigns each histogram bin to its nearest centroid (lower index on ties);
// centroids must be sorted. Returns the objective.
double assign(const Histogram& h, const std::vector<double>& centroids, std::vector<std::size_t>& owner) {
  owner.resize(h.values.size());
  std::size_t j = 0;
  double objective = 0.0;
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    const double v = h.values[i];
    while (j + 1 < centroids.size() && std::fabs(centroids[j + 1] - v) < std::fabs(v - centroids[j])) ++j;
    owner[i] = j;
    const double d = v - centroids[j];
    objective += h.counts[i] * d * d;
  }
  return objective;
}

}  // namespace

QuantizedLayer quantize_kmeans(std::span<const double> weights, unsigned bits, Rng& rng, std::size_t iters) {
  if (bits < 1 || bits > 16) throw ContractError("quantize_kmeans: bits must be in [1, 16], got " + std::to_string(bits));
  if (weights.empty()) throw ContractError("quantize_kmeans: no weights to quantize");
  for (double w : weights) {
    if (!std::isfinite(w)) throw NumericError("quantize_kmeans: non-finite weight");
  }
  const Histogram h = histogram(weights);
  const std::size_t k = std::min<std::size_t>(std::size_t{1} << bits, h.values.size());

  QuantizedLayer q;
  q.bits = bits;
  std::vector<double> centroids = k == h.values.size() ? h.values : seed_centroids(h, k, rng);
  std::vector<std::size_t> owner;
  std::vector<std::size_t> previous;
  for (std::size_t it = 0; it <= iters; ++it) {
    q.objective.push_back(assign(h, centroids, owner));
    if (owner == previous || it == iters) break;
    previous = owner;
    std::vector<long double> sum(k, 0.0L);
    std::vector<long double> count(k, 0.0L);
    for (std::size_t i = 0; i < h.values.size(); ++i) {
      sum[owner[i]] += static_cast<long double>(h.counts[i]) * h.values[i];
      count[owner[i]] += h.counts[i];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) centroids[c] = static_cast<double>(sum[c] / count[c]);
    }
    std::sort(centroids.begin(), centroids.end());
  }

  for (double& c : centroids) c = static_cast<double>(static_cast<float>(c));
  std::sort(centroids.begin(), centroids.end());
  centroids.erase(std::unique(centroids.begin(), centroids.end()), centroids.end());
  q.codebook = centroids;
  assign(h, q.codebook, owner);
  q.indices.reserve(weights.size());
  for (double w : weights) {
    const auto pos = static_cast<std::size_t>(std::lower_bound(h.values.begin(), h.values.end(), w) - h.values.begin());
    q.indices.push_back(static_cast<std::uint32_t>(owner[pos]));
  }
  return q;
}

std::vector<double> dequantize(const QuantizedLayer& q) {
  std::vector<double> out;
  out.reserve(q.indices.size());
  for (std::uint32_t i : q.indices) {
    if (i >= q.codebook.size()) throw IndexError("dequantize: index " + std::to_string(i) + " past codebook");
    out.push_back(q.codebook[i]);
  }
  return out;
}

double reconstruction_mse(std::span<const double> weights, const QuantizedLayer& q) {
  const std::vector<double> rec = dequantize(q);
  if (rec.size() != weights.size()) throw DimensionError("reconstruction_mse: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < rec.size(); ++i) s += (rec[i] - weights[i]) * (rec[i] - weights[i]);
  return s / static_cast<double>(rec.size());
}

// ---------------------------------------------------------------------------
// Layers, sizes and files

std::vector<double> CompressedLayer::dense() const {
  const std::vector<double> values = dequantize(quant);
  if (mask.empty()) return values;
  std::vector<double> out(size(), 0.0);
  std::size_t next = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i] != 0) out[i] = values.at(next++);
  }
  return out;
}

CompressedLayer compress_layer(const std::string& name, const Shape& shape, std::span<const double> weights,
                               const Mask& mask, unsigned bits, Rng& rng, std::size_t iters) {
  if (weights.size() != shape_numel(shape)) throw DimensionError("compress_layer: " + name + " size mismatch");
  CompressedLayer layer{name, shape, mask, {}};
  if (mask.empty()) {
    layer.quant = quantize_kmeans(weights, bits, rng, iters);
  } else {
    if (mask.size() != weights.size()) throw DimensionError("compress_layer: " + name + " mask size mismatch");
    std::vector<double> kept;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (mask[i] != 0) kept.push_back(weights[i]);
    }
    layer.quant = quantize_kmeans(kept, bits, rng, iters);
  }
  return layer;
}

std::uint64_t compressed_layer_bytes(std::size_t n, std::size_t kept, std::size_t codebook_size, unsigned bits,
                                     bool masked) {
  std::uint64_t bytes = (static_cast<std::uint64_t>(kept) * bits + 7) / 8 + 4 * static_cast<std::uint64_t>(codebook_size);
  if (masked) bytes += 4 + (static_cast<std::uint64_t>(n) + 7) / 8;
  return bytes;
}

SizeReport compressed_size(const Model& model, const std::vector<CompressedLayer>& layers) {
  SizeReport r;
  std::map<std::string, const CompressedLayer*> by_name;
  for (const CompressedLayer& l : layers) {
    by_name[l.name] = &l;
    r.layer_bytes += compressed_layer_bytes(l.size(), l.kept(), l.quant.codebook.size(), l.quant.bits, !l.mask.empty());
    r.layer_dense_bytes += 4 * static_cast<std::uint64_t>(l.size());
  }
  for (const auto& [name, t] : model.parameters()) {
    if (by_name.count(name) == 0) r.raw_bytes += 4 * static_cast<std::uint64_t>(t.numel());
  }
  if (r.layer_bytes > 0) r.ratio = static_cast<double>(r.layer_dense_bytes) / static_cast<double>(r.layer_bytes);
  r.model_ratio = static_cast<double>(r.layer_dense_bytes + r.raw_bytes) / static_cast<double>(r.layer_bytes + r.raw_bytes);
  return r;
}

std::vector<CompressedLayer> compress_model(const Model& model, const std::map<std::string, double>& sparsity,
                                            unsigned bits, Rng& rng, std::size_t iters) {
  for (const auto& [name, s] : sparsity) {
    if (!is_prunable(name)) throw ConfigError("parameter " + name + " is not prunable");
    find_parameter(model, name);
  }
  std::vector<CompressedLayer> out;
  for (const auto& [name, t] : model.parameters()) {
    if (!is_prunable(name)) continue;
    const auto it = sparsity.find(name);
    Mask mask;
    if (it != sparsity.end() && it->second > 0.0) mask = magnitude_mask(t.data(), it->second);
    out.push_back(compress_layer(name, t.shape(), t.data(), mask, bits, rng, iters));
  }
  return out;
}

void apply_compressed(Model& model, const std::vector<CompressedLayer>& layers) {
  round_to_f32(model);
  for (const CompressedLayer& l : layers) assign_parameter(model, l.name, l.shape, l.dense());
}

namespace {

void put_packed(std::string& buf, const std::vector<std::uint32_t>& values, unsigned bits) {
  std::uint64_t acc = 0;
  unsigned filled = 0;
  for (std::uint32_t v : values) {
    acc |= static_cast<std::uint64_t>(v) << filled;
    filled += bits;
    while (filled >= 8) {
      buf.push_back(static_cast<char>(acc & 0xFF));
      acc >>= 8;
      filled -= 8;
    }
  }
  if (filled > 0) buf.push_back(static_cast<char>(acc & 0xFF));
}

std::vector<std::uint32_t> get_packed(const std::string& buf, std::size_t offset, std::size_t count, unsigned bits) {
  const std::size_t bytes = (count * bits + 7) / 8;
  if (offset + bytes > buf.size()) throw IoError("compressed checkpoint: truncated index section");
  std::vector<std::uint32_t> out;
  out.reserve(count);
  std::uint64_t acc = 0;
  unsigned filled = 0;
  std::size_t pos = offset;
  const std::uint64_t lowmask = (std::uint64_t{1} << bits) - 1;
  for (std::size_t i = 0; i < count; ++i) {
    while (filled < bits) {
      acc |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << filled;
      filled += 8;
    }
    out.push_back(static_cast<std::uint32_t>(acc & lowmask));
    acc >>= bits;
    filled -= bits;
  }
  return out;
}

}  // namespace

void save_compressed(const Model& model, const std::vector<CompressedLayer>& layers,
                     const std::filesystem::path& path) {
  std::map<std::string, const CompressedLayer*> by_name;
  for (const CompressedLayer& l : layers) by_name[l.name] = &l;
  nlohmann::ordered_json meta;
  meta["config"] = to_json(model.config());
  nlohmann::ordered_json quantized = nlohmann::ordered_json::array();
  nlohmann::ordered_json raw = nlohmann::ordered_json::array();
  std::string payload;
  for (const auto& [name, t] : model.parameters()) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
      raw.push_back({{"name", name}, {"shape", t.shape()}, {"offset", payload.size()}});
      for (double v : t.data()) put_f32(payload, v);
      continue;
    }
    const CompressedLayer& l = *it->second;
    if (l.shape != t.shape()) throw DimensionError("save_compressed: " + name + " shape mismatch");
    quantized.push_back({{"name", name},
                         {"shape", l.shape},
                         {"bits", l.quant.bits},
                         {"codebook_size", l.quant.codebook.size()},
                         {"masked", !l.mask.empty()},
                         {"kept", l.kept()},
                         {"offset", payload.size()}});
    for (double c : l.quant.codebook) put_f32(payload, c);
    if (!l.mask.empty()) {
      put_u32(payload, static_cast<std::uint32_t>(l.kept()));
      std::string bitmap((l.size() + 7) / 8, '\0');
      for (std::size_t i = 0; i < l.size(); ++i) {
        if (l.mask[i] != 0) bitmap[i / 8] = static_cast<char>(bitmap[i / 8] | (1 << (i % 8)));
      }
      payload += bitmap;
    }
    put_packed(payload, l.quant.indices, l.quant.bits);
  }
  meta["quantized"] = quantized;
  meta["params"] = raw;
  write_container(path, "LTQ1", meta, payload);
}

Model load_compressed(const std::filesystem::path& path) {
  const Container c = read_container(path, "LTQ1");
  Rng rng(0);
  Model model = Model::build(model_config_from_json(c.meta.at("config")), rng);
  for (const auto& entry : c.meta.at("params")) {
    const Shape shape = entry.at("shape").get<Shape>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    std::vector<double> values(shape_numel(shape));
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = get_f32(c.payload, offset + 4 * i);
    assign_parameter(model, entry.at("name").get<std::string>(), shape, values);
  }
  for (const auto& entry : c.meta.at("quantized")) {
    CompressedLayer l;
    l.name = entry.at("name").get<std::string>();
    l.shape = entry.at("shape").get<Shape>();
    l.quant.bits = entry.at("bits").get<unsigned>();
    const std::size_t codebook_size = entry.at("codebook_size").get<std::size_t>();
    std::size_t kept = entry.at("kept").get<std::size_t>();
    std::size_t pos = entry.at("offset").get<std::size_t>();
    for (std::size_t i = 0; i < codebook_size; ++i, pos += 4) l.quant.codebook.push_back(get_f32(c.payload, pos));
    if (entry.at("masked").get<bool>()) {
      kept = get_u32(c.payload, pos);
      pos += 4;
      const std::size_t n = l.size();
      if (pos + (n + 7) / 8 > c.payload.size()) throw IoError(path.string() + ": truncated bitmap");
      l.mask.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        l.mask[i] = (static_cast<unsigned char>(c.payload[pos + i / 8]) >> (i % 8)) & 1;
      }
      pos += (n + 7) / 8;
    }
    l.quant.indices = get_packed(c.payload, pos, kept, l.quant.bits);
    assign_parameter(model, l.name, l.shape, l.dense());
  }
  return model;
}

nlohmann::ordered_json to_json(const SensitivityProfile& profile) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const LayerSensitivity& l : profile) {
    nlohmann::ordered_json points = nlohmann::ordered_json::array();
    for (const SensitivityPoint& p : l.points) points.push_back({{"sparsity", p.sparsity}, {"delta", p.delta}});
    layers.push_back({{"name", l.name}, {"size", l.size}, {"points", points}});
  }
  return layers;
}

std::map<std::string, double> sparsity_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("sparsity file: expected an object of name -> sparsity");
  std::map<std::string, double> out;
  for (const auto& [name, v] : j.items()) {
    if (!v.is_number()) throw ConfigError("sparsity file: " + name + " must be a number");
    const double s = v.get<double>();
    if (s < 0.0 || s >= 1.0) throw ConfigError("sparsity file: " + name + " must be in [0, 1)");
    out[name] = s;
  }
  return out;
}

}  // namespace lite
