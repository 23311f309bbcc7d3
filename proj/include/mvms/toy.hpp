/*
 * MVMSynth : synthesis and assessment of myocardial velocity mapping CMR
 *
 * Copyright 2026 MVMSynth Developers
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "mvms/core.hpp"
#include "mvms/nn.hpp"

namespace mvms {

// Controlled comparison of plain reconstruction loss vs adversarial
// training on synthetic circle images: a shape-changing task (radii scaled
// by a fixed factor) and a texture-painting task (circles filled with a
// striped pattern).
enum class ToyTask { ShapeChanging, TexturePainting };

struct CircleMeta {
    double cx = 0, cy = 0, r = 0;
};

struct CircleSample {
    nn::Tensor input, target;        // 3-channel, [-1,1]
    std::vector<CircleMeta> circles;
};

struct ToyConfig {
    int size = 48;
    int n_train = 64;
    int n_test = 200;
    double radius_scale = 1.5;
    int base_channels = 8;
    int depth = 3;
    int recurrence_steps = 1;
    int disc_base = 16;
    double adversarial_weight = 1.0;
    double learning_rate = 0.002;
    int batch_size = 16;
    int epochs = 6;
    uint64_t seed = 0;
    int threads = 0;
};

// Four non-overlapping coloured circles over a noisy background; circle
// placement guarantees the scaled targets stay disjoint and inside the
// frame. Deterministic per seed.
std::vector<CircleSample> gen_circles(ToyTask task, int n, uint64_t seed,
                                      const ToyConfig& cfg = {});

struct ToyReport {
    std::vector<double> mse_plain, mse_adversarial;   // per test image, [0,1] scale
    double mean_plain = 0, std_plain = 0;
    double mean_adversarial = 0, std_adversarial = 0;
    // Distance between dataset-mean prediction and dataset-mean target.
    double group_dist_plain = 0, group_dist_adversarial = 0;
};

// Trains both variants from the same initial weights on the same data
// order, then reports per-image and group-level distances on a held-out
// test set.
ToyReport run_toy_comparison(ToyTask task, const ToyConfig& cfg);

}  // namespace mvms
