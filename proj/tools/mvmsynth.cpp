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

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>

#include <CLI11.hpp>

#include "mvms/pipeline.hpp"

namespace {

using namespace mvms;
namespace fs = std::filesystem;

struct GlobalArgs {
    std::string config;
    std::string out;
    uint64_t seed = 0;
    bool seed_set = false;

    PipelineConfig load() const {
        PipelineConfig cfg =
            config.empty() ? PipelineConfig{} : load_pipeline_config(config);
        if (seed_set) cfg.seed = seed;
        return cfg;
    }
};

void write_json_file(const fs::path& file, const nlohmann::json& j) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream f(file);
    if (!f) throw std::runtime_error("cannot write " + file.string());
    f << j.dump(2) << "\n";
}

SplitView make_split(const PipelineConfig& cfg, const StudySet& set) {
    return split_study_set(set, cfg.split);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthesis and assessment of 3-directional myocardial velocity mapping data"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalArgs g;
    app.add_option("--config", g.config, "JSON configuration file");
    app.add_option("--out", g.out, "Output path");
    app.add_option("--seed", g.seed, "Override the configured seed")
        ->each([&](const std::string&) { g.seed_set = true; });

    std::function<void()> task;

    // phantom-gen
    {
        auto* c = app.add_subcommand("phantom-gen", "Generate beating-annulus phantom studies");
        auto count = std::make_shared<int>(12);
        c->add_option("--count", *count, "Number of studies");
        c->callback([&, count]() {
            task = [&, count]() {
                PipelineConfig cfg = g.load();
                if (g.out.empty()) throw ConfigError("phantom-gen requires --out");
                generate_phantom_set(cfg.phantom, cfg.seed, *count, g.out);
            };
        });
    }

    // train-interp
    {
        auto* c = app.add_subcommand("train-interp", "Train a temporal interpolation model");
        auto data = std::make_shared<std::string>();
        auto k = std::make_shared<int>(1);
        auto arch = std::make_shared<std::string>("multihead");
        c->add_option("--data", *data, "Study directory")->required();
        c->add_option("--k", *k, "Downsampling factor K")->required();
        c->add_option("--arch", *arch, "multihead | single")
            ->check(CLI::IsMember({"multihead", "single"}));
        c->callback([&, data, k, arch]() {
            task = [&, data, k, arch]() {
                PipelineConfig cfg = g.load();
                if (g.out.empty()) throw ConfigError("train-interp requires --out");
                StudySet set = load_study_set(*data);
                SplitView split = make_split(cfg, set);
                const auto a = *arch == "multihead" ? InterpModel::Arch::MultiHead
                                                    : InterpModel::Arch::SingleStream;
                InterpModel model(cfg.interp_net, a, mix_seed(cfg.seed, 0x1000 + uint64_t(*k)));
                InterpDataset train = build_interp_dataset(split.train, *k);
                InterpDataset val = build_interp_dataset(split.val, *k);
                TrainConfig tc = cfg.interp_train;
                tc.seed = mix_seed(cfg.seed, 0x2000 + uint64_t(*k));
                tc.threads = cfg.threads;
                const InterpTrainResult r = train_interp(model, train, val, tc);
                nlohmann::json extra;
                extra["k"] = *k;
                extra["best_epoch"] = r.best_epoch;
                extra["epoch_loss"] = r.epoch_loss;
                extra["val_wmae"] = r.val_wmae;
                model.save(g.out, extra);
                std::printf("trained %s K=%d, best epoch %d, val wMAE %.6g\n", arch->c_str(),
                            *k, r.best_epoch, r.val_wmae[size_t(r.best_epoch)]);
            };
        });
    }

    // train-phase
    {
        auto* c = app.add_subcommand("train-phase", "Train the phase synthesis model");
        auto data = std::make_shared<std::string>();
        c->add_option("--data", *data, "Study directory")->required();
        c->callback([&, data]() {
            task = [&, data]() {
                PipelineConfig cfg = g.load();
                if (g.out.empty()) throw ConfigError("train-phase requires --out");
                StudySet set = load_study_set(*data);
                SplitView split = make_split(cfg, set);
                PhaseModel model(cfg.phase_net, mix_seed(cfg.seed, 0x3000));
                PhaseTrainConfig tc = cfg.phase_train;
                tc.seed = mix_seed(cfg.seed, 0x4000);
                tc.threads = cfg.threads;
                const PhaseTrainResult r = train_phase(model, split.train, split.val, tc);
                nlohmann::json extra;
                extra["best_epoch"] = r.best_epoch;
                extra["g_l1"] = r.g_l1;
                extra["val_l1"] = r.val_l1;
                model.save(g.out, extra);
                std::printf("trained phase model, best epoch %d, val L1 %.6g\n", r.best_epoch,
                            r.val_l1[size_t(r.best_epoch)]);
            };
        });
    }

    // infer-interp
    {
        auto* c = app.add_subcommand("infer-interp", "Interpolate a downsampled study");
        auto ckpt = std::make_shared<std::string>();
        auto in = std::make_shared<std::string>();
        auto k = std::make_shared<int>(1);
        auto offset = std::make_shared<int>(0);
        auto method = std::make_shared<std::string>("learned");
        c->add_option("--ckpt", *ckpt, "Checkpoint directory (learned method)");
        c->add_option("--in", *in, "Input study directory")->required();
        c->add_option("--k", *k, "Downsampling factor K")->required();
        c->add_option("--offset", *offset, "Anchor offset");
        c->add_option("--method", *method, "learned | linear | flow")
            ->check(CLI::IsMember({"learned", "linear", "flow"}));
        c->callback([&, ckpt, in, k, offset, method]() {
            task = [&, ckpt, in, k, offset, method]() {
                PipelineConfig cfg = g.load();
                if (g.out.empty()) throw ConfigError("infer-interp requires --out");
                const CineStudy study = load_study(*in);
                std::unique_ptr<InterpModel> model;
                if (*method == "learned") {
                    if (ckpt->empty())
                        throw ConfigError("infer-interp --method learned requires --ckpt");
                    model = InterpModel::load(*ckpt);
                }
                const DownsampleSpec spec{*k, *offset};
                const CineStudy out = interpolate_with_method(study, spec, *method, model.get(),
                                                              cfg.horn_schunck, cfg.threads);
                save_study(out, g.out);
            };
        });
    }

    // infer-phase
    {
        auto* c = app.add_subcommand("infer-phase", "Synthesise phase images for a study");
        auto ckpt = std::make_shared<std::string>();
        auto in = std::make_shared<std::string>();
        auto no_composite = std::make_shared<bool>(false);
        c->add_option("--ckpt", *ckpt, "Checkpoint directory")->required();
        c->add_option("--in", *in, "Input study directory")->required();
        c->add_flag("--no-composite", *no_composite,
                    "Use the raw generator output everywhere (vanilla mode)");
        c->callback([&, ckpt, in, no_composite]() {
            task = [&, ckpt, in, no_composite]() {
                PipelineConfig cfg = g.load();
                if (g.out.empty()) throw ConfigError("infer-phase requires --out");
                const CineStudy study = load_study(*in);
                auto model = PhaseModel::load(*ckpt);
                if (*no_composite) model->set_composite(false);
                const CineStudy out =
                    synthesize_phases(*model, study, cfg.noise, cfg.seed, cfg.threads);
                save_study(out, g.out);
            };
        });
    }

    // assess
    {
        auto* c = app.add_subcommand("assess", "Velocity assessment of a study");
        auto in = std::make_shared<std::string>();
        auto systole_end = std::make_shared<int>(0);
        auto stats = std::make_shared<std::string>();
        auto svg = std::make_shared<std::string>();
        c->add_option("--in", *in, "Study directory")->required();
        c->add_option("--systole-end", *systole_end, "Systole/diastole boundary time point");
        c->add_option("--stats", *stats, "Write summary stats JSON here");
        c->add_option("--svg", *svg, "Write velocity curve SVG here");
        c->callback([&, in, systole_end, stats, svg]() {
            task = [&, in, systole_end, stats, svg]() {
                if (g.out.empty()) throw ConfigError("assess requires --out (curves CSV)");
                const CineStudy study = load_study(*in);
                const VelocityCurves curves = global_curves(study);
                const int se = *systole_end > 0 ? *systole_end
                                                : default_systole_end(study.frames());
                write_curves_csv(g.out, curves);
                if (!stats->empty()) write_json_file(*stats, stats_json(curves, se));
                if (!svg->empty()) write_curves_svg(*svg, curves);
            };
        });
    }

    // metrics
    {
        auto* c = app.add_subcommand("metrics", "Image-quality metrics between study sets");
        auto pred = std::make_shared<std::string>();
        auto gt = std::make_shared<std::string>();
        c->add_option("--pred", *pred, "Predicted study directory")->required();
        c->add_option("--gt", *gt, "Ground-truth study directory")->required();
        c->callback([&, pred, gt]() {
            task = [&, pred, gt]() {
                if (g.out.empty()) throw ConfigError("metrics requires --out");
                write_json_file(g.out, metrics_report(*pred, *gt));
            };
        });
    }

    // ksweep
    {
        auto* c = app.add_subcommand("ksweep", "Method comparison across K");
        c->callback([&]() {
            task = [&]() {
                PipelineConfig cfg = g.load();
                if (g.out.empty()) throw ConfigError("ksweep requires --out");
                ksweep_report(cfg, g.out);
            };
        });
    }

    // gan-ablation
    {
        auto* c = app.add_subcommand("gan-ablation",
                                     "Interpolation with vs without adversarial loss");
        c->callback([&]() {
            task = [&]() {
                PipelineConfig cfg = g.load();
                if (g.out.empty()) throw ConfigError("gan-ablation requires --out");
                gan_ablation(cfg, g.out);
            };
        });
    }

    // toy-exp
    {
        auto* c = app.add_subcommand("toy-exp", "Plain vs adversarial circle experiment");
        auto taskname = std::make_shared<std::string>("shape");
        c->add_option("--task", *taskname, "shape | texture")
            ->check(CLI::IsMember({"shape", "texture"}));
        c->callback([&, taskname]() {
            task = [&, taskname]() {
                PipelineConfig cfg = g.load();
                if (g.out.empty()) throw ConfigError("toy-exp requires --out");
                ToyConfig tc = cfg.toy;
                tc.seed = cfg.seed;
                tc.threads = cfg.threads;
                const ToyTask tt =
                    *taskname == "shape" ? ToyTask::ShapeChanging : ToyTask::TexturePainting;
                const ToyReport rep = run_toy_comparison(tt, tc);
                nlohmann::json j;
                j["task"] = *taskname;
                j["mean_plain"] = rep.mean_plain;
                j["std_plain"] = rep.std_plain;
                j["mean_adversarial"] = rep.mean_adversarial;
                j["std_adversarial"] = rep.std_adversarial;
                j["group_dist_plain"] = rep.group_dist_plain;
                j["group_dist_adversarial"] = rep.group_dist_adversarial;
                j["mse_plain"] = rep.mse_plain;
                j["mse_adversarial"] = rep.mse_adversarial;
                write_json_file(g.out, j);
            };
        });
    }

    // pipeline
    {
        auto* c = app.add_subcommand("pipeline", "Run the full sequential flow");
        c->callback([&]() {
            task = [&]() {
                PipelineConfig cfg = g.load();
                if (g.out.empty()) throw ConfigError("pipeline requires --out");
                run_full_pipeline(cfg, g.out);
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {   // --help
            return app.exit(e);
        }
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        task();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
