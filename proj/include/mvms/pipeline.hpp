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

#include <map>

#include "mvms/core.hpp"
#include "mvms/flow.hpp"
#include "mvms/interp.hpp"
#include "mvms/metrics.hpp"
#include "mvms/phantom.hpp"
#include "mvms/phase.hpp"
#include "mvms/toy.hpp"
#include "mvms/velocity.hpp"

namespace mvms {

// Raised for malformed configuration; the CLI maps it to exit code 2,
// stage failures to exit code 3.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct SplitSpec {
    int train = 8, val = 2, test = 2;
};

struct PipelineConfig {
    std::string data_dir = "studies";
    int count = 12;                      // phantom studies to generate
    SplitSpec split;
    std::vector<int> k_list = {0, 1, 2, 3, 4, 5, 6};
    std::vector<int> ablation_k_list = {4, 5, 6};
    std::string method = "learned";      // learned | linear | flow
    bool phase_oracle = false;           // ground-truth foreground phases
    uint64_t seed = 1234;
    int threads = 0;
    int systole_end = 0;                 // 0 = round(T/3)

    PhantomParams phantom;
    InterpNetConfig interp_net;
    TrainConfig interp_train;
    PhaseNetConfig phase_net;
    PhaseTrainConfig phase_train;
    NoiseModel noise;
    HornSchunckConfig horn_schunck;
    AdversarialConfig ablation;
    ToyConfig toy;
};

PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Study-set helpers
// ---------------------------------------------------------------------------

// Sorted study subdirectories (directories containing meta.json).
std::vector<std::string> list_study_dirs(const std::filesystem::path& dir);

// Emits `count` phantom studies with seeds seed+i into dir/study_<seed+i>.
void generate_phantom_set(const PhantomParams& base, uint64_t seed, int count,
                          const std::filesystem::path& dir);

struct StudySet {
    std::vector<CineStudy> studies;
    std::vector<std::string> names;
};
StudySet load_study_set(const std::filesystem::path& dir);

struct SplitView {
    std::vector<const CineStudy*> train, val, test;
    std::vector<std::string> test_names;
};
SplitView split_study_set(const StudySet& set, const SplitSpec& split);

// ---------------------------------------------------------------------------
// Stage helpers
// ---------------------------------------------------------------------------

// Interpolates a downsampled study with the chosen method; `model` is
// required for the learned method.
CineStudy interpolate_with_method(const CineStudy& study, const DownsampleSpec& spec,
                                  const std::string& method, const InterpModel* model,
                                  const HornSchunckConfig& hs, int threads);

// Magnitude/mask interpolation quality over non-anchor frames only.
MetricReport interp_metrics(const CineStudy& pred, const CineStudy& gt,
                            const DownsampleSpec& spec, int pad = 8);

void write_curves_csv(const std::filesystem::path& file, const VelocityCurves& curves);
void write_curves_svg(const std::filesystem::path& file, const VelocityCurves& curves);
nlohmann::json stats_json(const VelocityCurves& curves, int systole_end);
nlohmann::json metric_report_json(const MetricReport& r);

// Per-study and aggregate comparison of two directories of studies
// (or two single study directories).
nlohmann::json metrics_report(const std::filesystem::path& pred_dir,
                              const std::filesystem::path& gt_dir);

// ---------------------------------------------------------------------------
// Harnesses
// ---------------------------------------------------------------------------

// Full sequential flow: downsample -> interpolate -> synthesise phases ->
// assess velocities -> metric reports per K. Returns the summary JSON that
// is also written to out_dir/summary.json.
nlohmann::json run_full_pipeline(const PipelineConfig& cfg,
                                 const std::filesystem::path& out_dir);

// Four-method comparison (linear, flow, single-stream UNet, multi-head)
// across K; learned methods load checkpoints from out_dir/ckpt and are
// skipped with a notice when missing.
nlohmann::json ksweep_report(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

// Temporal interpolation trained with vs without the adversarial term,
// identical seeds and data; Table-shaped report per K and variant.
nlohmann::json gan_ablation(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace mvms
