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
#include <optional>

#include "mvms/core.hpp"
#include "mvms/metrics.hpp"
#include "mvms/nn.hpp"

namespace mvms {

// Temporal position of a sample, broadcast as constant feature maps:
// tau/T for the anchor frame and k/(K+1) for the in-gap position.
struct ConditionMaps {
    Image tau_map, k_map;
};

ConditionMaps make_condition_maps(int tau, int k, int num_frames, int big_k, int h, int w);

struct InterpNetConfig {
    int base_channels = 32;
    int depth = 4;            // encoder levels
    int recurrence_steps = 2;

    void validate() const;
};

struct TrainConfig {
    double learning_rate = 0.001;
    int batch_size = 32;
    int epochs = 20;
    uint64_t seed = 0;
    int threads = 0;          // 0 = hardware concurrency
    int w1_pad = 8;           // ROI weight-map padding
    int crop_size = 0;        // 0 = no cropping
};

// One (inputs -> targets) pair: anchors tau and wrap(tau+K+1), in-gap
// position k, target frame wrap(tau+k).
struct InterpSample {
    int study = 0, tau = 0, k = 0;
};

struct InterpDataset {
    std::vector<const CineStudy*> studies;   // borrowed
    std::vector<InterpSample> samples;
    int big_k = 1;

    size_t size() const { return samples.size(); }
};

// Enumerates every stride-(K+1) anchor and every k in 1..K per study;
// endpoints wrap periodically.
InterpDataset build_interp_dataset(const std::vector<const CineStudy*>& studies, int big_k);

struct AdversarialConfig;
struct InterpTrainResult;
class InterpModel;

InterpTrainResult train_interp(InterpModel& model, const InterpDataset& train,
                               const InterpDataset& val, const TrainConfig& cfg,
                               const AdversarialConfig& adv);

// Multi-head multi-tail recurrent-residual UNet: one encoder/decoder pair
// per domain (magnitude, mask), concatenated bottleneck. The magnitude
// tail is tanh-bounded and rides on a linear-interpolation skip from the
// two anchor frames; the mask tail emits logits.
class InterpModel {
public:
    enum class Arch { MultiHead, SingleStream };

    InterpModel(const InterpNetConfig& cfg, Arch arch, uint64_t seed);

    struct Output {
        Image m_hat;       // [-1,1]
        Image s_logits;    // threshold at 0
    };

    // Reentrant; safe to call concurrently with read-only weights.
    Output infer(const Image& m_a, const Image& m_b, const Mask& s_a, const Mask& s_b,
                 const ConditionMaps& cond) const;

    Arch arch() const { return arch_; }
    const InterpNetConfig& config() const { return cfg_; }

    void save(const std::filesystem::path& dir, const nlohmann::json& extra) const;
    static std::unique_ptr<InterpModel> load(const std::filesystem::path& dir);
    static nlohmann::json peek_info(const std::filesystem::path& dir);

    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }

private:
    friend InterpTrainResult train_interp(InterpModel&, const InterpDataset&,
                                          const InterpDataset&, const TrainConfig&,
                                          const AdversarialConfig&);

    InterpNetConfig cfg_;
    Arch arch_;
    nn::ParamStore ps_;
    std::optional<nn::DualUNet> dual_;
    std::optional<nn::UNetCore> single_;
};

// Optional least-squares patch-adversarial term on the magnitude tail,
// used by the ablation harness.
struct AdversarialConfig {
    bool enabled = false;
    double weight = 0.5;
    int disc_base = 16;
    double disc_lr = 0.001;
};

struct InterpTrainResult {
    std::vector<double> epoch_loss;      // mean train loss per epoch
    std::vector<double> val_wmae;        // validation weighted MAE per epoch
    int best_epoch = -1;
};

// Minimises weighted MAE on the magnitude tail plus pixelwise BCE on the
// mask tail; keeps the epoch with the best validation weighted MAE.
inline InterpTrainResult train_interp(InterpModel& model, const InterpDataset& train,
                                      const InterpDataset& val, const TrainConfig& cfg) {
    return train_interp(model, train, val, cfg, AdversarialConfig{});
}

// Fills the missing frames of a downsampled study. Frames at anchor
// indices are copied verbatim; interpolated frames get the predicted
// magnitude, a binarised mask and zero phases.
CineStudy interpolate_series(const InterpModel& model, const CineStudy& input,
                             const DownsampleSpec& spec, int threads = 0);

}  // namespace mvms
