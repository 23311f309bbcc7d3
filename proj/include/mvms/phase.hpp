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

#include <memory>

#include "mvms/core.hpp"
#include "mvms/nn.hpp"

namespace mvms {

// Gaussian model of phase-image background noise in normalised units.
struct NoiseModel {
    double mu = 0.034;
    double sigma = 0.034;
};

// Channels (M_{t-1}, M_t, M_{t+1}), wrapping periodically.
nn::Tensor magnitude_triplet(const CineStudy& study, int t);

// 1 = tissue (foreground); matches the non-background weight-map threshold.
Mask split_foreground(const Image& magnitude);

// I.i.d. N(mu, sigma^2) field clamped to [-1,1]; deterministic per seed.
Image sample_background(int h, int w, const NoiseModel& noise, uint64_t seed);

// Foreground pixels copy `generated`; background pixels take independent
// noise draws per channel (streams derived from seed and channel index).
nn::Tensor composite_phase(const nn::Tensor& generated, const Image& magnitude,
                           const NoiseModel& noise, uint64_t seed);

struct PhaseNetConfig {
    int base_channels = 32;
    int depth = 4;
    int recurrence_steps = 2;
    int disc_base = 32;             // patch discriminator width
    double l1_weight = 100.0;
    double adversarial_weight = 1.0;
    bool composite = true;          // false = vanilla whole-image mode
};

struct PhaseTrainConfig {
    double learning_rate = 0.002;
    int batch_size = 12;
    int epochs = 8;
    uint64_t seed = 0;
    int threads = 0;
};

// pix2pix-style phase synthesiser: recurrent-residual UNet generator
// consuming a chronological magnitude triplet and emitting all three phase
// directions, trained against a 16x16 patch discriminator.
class PhaseModel {
public:
    PhaseModel(const PhaseNetConfig& cfg, uint64_t seed);

    // Raw generator output (tanh-bounded, no compositing); reentrant.
    nn::Tensor generate(const nn::Tensor& triplet) const;

    const PhaseNetConfig& config() const { return cfg_; }

    // Vanilla-mode switch: emit raw generator output instead of compositing.
    void set_composite(bool enabled) { cfg_.composite = enabled; }

    void save(const std::filesystem::path& dir, const nlohmann::json& extra) const;
    static std::unique_ptr<PhaseModel> load(const std::filesystem::path& dir);

private:
    friend struct PhaseTrainAccess;

    PhaseNetConfig cfg_;
    nn::ParamStore gps_, dps_;
    std::unique_ptr<nn::UNetCore> gen_;
    std::unique_ptr<nn::PatchDisc> disc_;
};

struct PhaseTrainResult {
    std::vector<double> g_l1;        // generator L1 term per epoch (train)
    std::vector<double> g_adv;       // adversarial term per epoch
    std::vector<double> d_loss;      // discriminator loss per epoch
    std::vector<double> val_l1;      // validation L1 per epoch
    int best_epoch = -1;
};

// Alternating generator/discriminator optimisation; keeps the epoch with
// the best validation foreground L1 (whole-image L1 in vanilla mode).
PhaseTrainResult train_phase(PhaseModel& model,
                             const std::vector<const CineStudy*>& train_studies,
                             const std::vector<const CineStudy*>& val_studies,
                             const PhaseTrainConfig& cfg);

// Replaces the three phase arrays of `study` with synthesised ones; in
// compositing mode background pixels are drawn per (seed, frame, channel).
// Output phases are quantised onto the raw [0,4096] grid.
CineStudy synthesize_phases(const PhaseModel& model, const CineStudy& study,
                            const NoiseModel& noise, uint64_t seed, int threads = 0);

// Velocity-oracle variant: composites the study's own (ground-truth)
// foreground phases over freshly drawn background noise.
CineStudy synthesize_phases_oracle(const CineStudy& study, const NoiseModel& noise,
                                   uint64_t seed);

}  // namespace mvms
