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

#include <optional>
#include <vector>

#include "mvms/core.hpp"

namespace mvms {

// Per-pixel loss weight field; every entry is 0.1 or 1.0.
struct WeightMap {
    int h = 0, w = 0;
    std::vector<float> wt;

    WeightMap() = default;
    WeightMap(int h_, int w_, float fill) : h(h_), w(w_), wt(size_t(h_) * w_, fill) {}
    float at(int y, int x) const { return wt[size_t(y) * w + x]; }
};

// ROI weight map: 1.0 inside the padded bounding box of the mask, 0.1
// elsewhere. An empty mask yields an all-0.1 map and sets *empty_warning.
WeightMap roi_weight_map(const Mask& seg, int pad, bool* empty_warning = nullptr);

// Non-background weight map: 1.0 where magnitude > -0.95, else 0.1.
WeightMap foreground_weight_map(const Image& magnitude);

// Pixels at or below the -0.95 magnitude threshold count as background.
constexpr float kBackgroundThreshold = -0.95f;

// Training loss: Mean(w_roi * |pred-gt|) + Mean(w_fg * |pred-gt|), both
// means over all pixels.
double weighted_mae(const Image& pred, const Image& gt, const WeightMap& w_roi,
                    const WeightMap& w_fg);

// d(weighted_mae)/d(pred); subgradient 0 where pred == gt.
Image weighted_mae_grad(const Image& pred, const Image& gt, const WeightMap& w_roi,
                        const WeightMap& w_fg);

// Mean(w * (pred-gt)^2) over all pixels.
double weighted_mse(const Image& pred, const Image& gt, const WeightMap& w);

double mse(const Image& pred, const Image& gt);

// 10*log10(1/MSE) on images in [0,1]; +infinity when pred == gt.
double psnr01(const Image& pred, const Image& gt);
double psnr_from_mse(double mse);

// Mean local SSIM, 8x8 sliding windows, C1=0.01^2 C2=0.03^2, unit range.
double ssim01(const Image& pred, const Image& gt);

// Maps a [-1,1] image onto [0,1] for psnr/ssim/reporting.
Image to_unit_range(const Image& img);

double dice(const Mask& a, const Mask& b);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct MetricReport {
    double mse = 0, msew1 = 0, msew2 = 0, psnr = 0, ssim = 0;
    std::optional<double> dice;
};

// Frame-by-frame comparison of two studies. Magnitude metrics plus dice,
// and pooled metrics over the three phase directions; weights come from
// the ground-truth seg (ROI, with `pad`) and magnitude (foreground).
struct StudyMetrics {
    MetricReport magnitude;
    MetricReport phase;
};

StudyMetrics study_metrics(const CineStudy& pred, const CineStudy& gt, int pad = 8);

// Mean and sample std over a set of values, Table-style "Mean(Std)".
struct MeanStd {
    double mean = 0, std = 0;
};
MeanStd mean_std(const std::vector<double>& values);

}  // namespace mvms
