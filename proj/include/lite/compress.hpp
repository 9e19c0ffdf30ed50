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

#pragma once

// Post-training compression: per-layer magnitude pruning guided by a
// sensitivity scan, then 1-D k-means weight quantization.
//
// Prunable layers are the linear weight matrices and embedding tables.
// Biases, layer-norm parameters and conv kernels are stored raw.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lite/model.hpp"
#include "lite/rng.hpp"

namespace lite {

bool is_prunable(const std::string& name);

struct SensitivityPoint {
  double sparsity = 0.0;
  double delta = 0.0;  // eval loss at this sparsity minus the unpruned loss
};

struct LayerSensitivity {
  std::string name;
  std::size_t size = 0;
  std::vector<SensitivityPoint> points;  // increasing sparsity
};

using SensitivityProfile = std::vector<LayerSensitivity>;
using EvalFn = std::function<double()>;

std::vector<double> default_sparsity_grid();  // 0.1, 0.2, ..., 0.9

/// Prunes each prunable layer alone to every grid level, records the eval
/// loss delta and restores the weights.
SensitivityProfile sensitivity_scan(Model& model, const EvalFn& eval_fn, const std::vector<double>& grid);

/// Greedy allocation: repeatedly advances the layer whose next grid level
/// costs the least loss per pruned weight until `target` of all prunable
/// weights are pruned (or every layer sits at its last level).
std::map<std::string, double> allocate_sparsity(const SensitivityProfile& profile, double target);

using Mask = std::vector<std::uint8_t>;  // 1 = kept
using MaskSet = std::map<std::string, Mask>;

/// Keeps all but the floor(s * n) smallest-magnitude entries; equal
/// magnitudes are pruned in flat-index order.
Mask magnitude_mask(std::span<const double> weights, double sparsity);
void apply_mask(std::span<double> weights, const Mask& mask);

/// Prunes the named layers in place and returns their masks.
MaskSet prune(Model& model, const std::map<std::string, double>& sparsity);

struct QuantizedLayer {
  std::vector<double> codebook;         // float32-representable, ascending
  std::vector<std::uint32_t> indices;   // one per quantized weight
  unsigned bits = 8;
  std::vector<double> objective;        // sum of squared error after each assignment step
};

QuantizedLayer quantize_kmeans(std::span<const double> weights, unsigned bits, Rng& rng, std::size_t iters = 100);
std::vector<double> dequantize(const QuantizedLayer& q);
double reconstruction_mse(std::span<const double> weights, const QuantizedLayer& q);

struct CompressedLayer {
  std::string name;
  Shape shape;
  Mask mask;  // empty when the layer is not pruned
  QuantizedLayer quant;

  std::size_t size() const { return shape_numel(shape); }
  std::size_t kept() const { return quant.indices.size(); }
  std::vector<double> dense() const;
};

/// Quantizes the kept entries of `weights` (all entries if `mask` is empty).
CompressedLayer compress_layer(const std::string& name, const Shape& shape, std::span<const double> weights,
                               const Mask& mask, unsigned bits, Rng& rng, std::size_t iters = 100);

/// Storage for one layer: kept * bits / 8 (rounded up) index bytes, 4 bytes
/// per codebook entry, plus a 4-byte kept count and an n-bit bitmap when
/// the layer is pruned.
std::uint64_t compressed_layer_bytes(std::size_t n, std::size_t kept, std::size_t codebook_size, unsigned bits,
                                     bool masked);

struct SizeReport {
  std::uint64_t layer_bytes = 0;        // compressed prunable layers
  std::uint64_t layer_dense_bytes = 0;  // the same layers at float32
  std::uint64_t raw_bytes = 0;          // everything else at float32
  double ratio = 0.0;                   // layer_dense_bytes / layer_bytes
  double model_ratio = 0.0;             // including the raw parameters
};

SizeReport compressed_size(const Model& model, const std::vector<CompressedLayer>& layers);

/// Prunes (optional sparsities) and quantizes every prunable layer.
std::vector<CompressedLayer> compress_model(const Model& model, const std::map<std::string, double>& sparsity,
                                            unsigned bits, Rng& rng, std::size_t iters = 100);

/// Overwrites the compressed layers with their dequantized values and rounds
/// every other parameter to float32, giving the model a loader would build.
void apply_compressed(Model& model, const std::vector<CompressedLayer>& layers);

void save_compressed(const Model& model, const std::vector<CompressedLayer>& layers,
                     const std::filesystem::path& path);
Model load_compressed(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const SensitivityProfile& profile);
std::map<std::string, double> sparsity_from_json(const nlohmann::json& j);

}  // namespace lite
