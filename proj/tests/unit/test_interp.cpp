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

#include <doctest.h>

#include <random>
#include <set>

#include "mvms/interp.hpp"
#include "mvms/phantom.hpp"

using namespace mvms;

namespace {

CineStudy small_phantom(int t = 10, uint64_t seed = 5) {
    PhantomParams p;
    p.h = p.w = 32;
    p.t = t;
    p.r_inner0 = 6;
    p.r_outer0 = 10;
    p.amp = 2;
    p.seed = seed;
    return generate_phantom(p);
}

InterpNetConfig tiny_cfg() {
    InterpNetConfig c;
    c.base_channels = 4;
    c.depth = 2;
    c.recurrence_steps = 1;
    return c;
}

}  // namespace

TEST_CASE("condition maps") {
    const ConditionMaps c = make_condition_maps(10, 1, 50, 1, 8, 8);
    for (float v : c.tau_map.px) CHECK(v == doctest::Approx(0.2));
    for (float v : c.k_map.px) CHECK(v == doctest::Approx(0.5));

    const ConditionMaps z = make_condition_maps(0, 2, 50, 3, 8, 8);
    for (float v : z.tau_map.px) CHECK(v == 0.0f);
    for (float v : z.k_map.px) CHECK(v == doctest::Approx(0.5));

    CHECK_THROWS_AS(make_condition_maps(50, 1, 50, 1, 8, 8), std::invalid_argument);
    CHECK_THROWS_AS(make_condition_maps(0, 0, 50, 1, 8, 8), std::invalid_argument);
    CHECK_THROWS_AS(make_condition_maps(0, 2, 50, 1, 8, 8), std::invalid_argument);
}

TEST_CASE("dataset enumeration counts match an independent oracle") {
    const CineStudy s = small_phantom(50);
    const std::vector<const CineStudy*> studies = {&s};

    // Independent enumeration oracle.
    auto expected_count = [](int t, int k) {
        int anchors = 0;
        for (int tau = 0; tau < t; tau += k + 1) ++anchors;
        return anchors * k;
    };

    const InterpDataset d1 = build_interp_dataset(studies, 1);
    CHECK(int(d1.samples.size()) == 25);
    CHECK(int(d1.samples.size()) == expected_count(50, 1));

    const InterpDataset d4 = build_interp_dataset(studies, 4);
    CHECK(int(d4.samples.size()) == 40);
    CHECK(int(d4.samples.size()) == expected_count(50, 4));

    for (int k = 2; k <= 6; ++k) {
        const InterpDataset d = build_interp_dataset(studies, k);
        CHECK(int(d.samples.size()) == expected_count(50, k));
    }
}

TEST_CASE("dataset endpoints wrap periodically") {
    const CineStudy s = small_phantom(50);
    const InterpDataset d = build_interp_dataset({&s}, 3);
    bool saw_wrap = false;
    for (const InterpSample& smp : d.samples) {
        const int end = wrap_index(smp.tau + d.big_k + 1, 50);
        CHECK(end >= 0);
        CHECK(end < 50);
        if (smp.tau == 48) {
            CHECK(end == 2);   // 48 + 4 = 52 -> 2
            saw_wrap = true;
        }
    }
    CHECK(saw_wrap);
}

TEST_CASE("dataset indices stay in range under random (tau, K)") {
    std::mt19937_64 gen(9);
    const CineStudy s = small_phantom(10);
    for (int rep = 0; rep < 20; ++rep) {
        const int k = 1 + int(gen() % 6);
        const InterpDataset d = build_interp_dataset({&s}, k);
        for (const InterpSample& smp : d.samples) {
            CHECK(smp.tau >= 0);
            CHECK(smp.tau < 10);
            CHECK(smp.k >= 1);
            CHECK(smp.k <= k);
            CHECK(wrap_index(smp.tau + smp.k, 10) >= 0);
            CHECK(wrap_index(smp.tau + d.big_k + 1, 10) < 10);
        }
    }
}

TEST_CASE("zeroed weights reduce the forward pass to linear interpolation") {
    const CineStudy s = small_phantom();
    InterpModel model(tiny_cfg(), InterpModel::Arch::MultiHead, 3);
    std::fill(model.params().value.begin(), model.params().value.end(), 0.f);

    const ConditionMaps cond = make_condition_maps(0, 1, s.frames(), 1, 32, 32);
    const auto out = model.infer(s.magnitude[0], s.magnitude[2], s.seg[0], s.seg[2], cond);

    CHECK(out.m_hat.h == 32);
    CHECK(out.m_hat.w == 32);
    const float frac = cond.k_map.px[0];
    for (size_t i = 0; i < out.m_hat.px.size(); ++i) {
        const float lin = (1.f - frac) * s.magnitude[0].px[i] + frac * s.magnitude[2].px[i];
        CHECK(out.m_hat.px[i] == lin);
    }
    for (float v : out.s_logits.px) CHECK(v == 0.0f);
}

TEST_CASE("forward pass is deterministic and bounded") {
    const CineStudy s = small_phantom();
    InterpModel model(tiny_cfg(), InterpModel::Arch::MultiHead, 3);
    const ConditionMaps cond = make_condition_maps(2, 1, s.frames(), 2, 32, 32);
    const auto a = model.infer(s.magnitude[0], s.magnitude[3], s.seg[0], s.seg[3], cond);
    const auto b = model.infer(s.magnitude[0], s.magnitude[3], s.seg[0], s.seg[3], cond);
    CHECK(a.m_hat.px == b.m_hat.px);
    CHECK(a.s_logits.px == b.s_logits.px);
    for (float v : a.m_hat.px) {
        CHECK(v >= -1.f);
        CHECK(v <= 1.f);
    }
}

TEST_CASE("condition maps are live inputs") {
    const CineStudy s = small_phantom();
    InterpModel model(tiny_cfg(), InterpModel::Arch::MultiHead, 3);
    const int k_max = 3;
    const ConditionMaps c1 = make_condition_maps(0, 1, s.frames(), k_max, 32, 32);
    const ConditionMaps c2 = make_condition_maps(0, k_max, s.frames(), k_max, 32, 32);
    const auto o1 = model.infer(s.magnitude[0], s.magnitude[4], s.seg[0], s.seg[4], c1);
    const auto o2 = model.infer(s.magnitude[0], s.magnitude[4], s.seg[0], s.seg[4], c2);
    CHECK(o1.m_hat.px != o2.m_hat.px);
    CHECK(o1.s_logits.px != o2.s_logits.px);
}

TEST_CASE("single-stream variant forward contract") {
    const CineStudy s = small_phantom();
    InterpModel model(tiny_cfg(), InterpModel::Arch::SingleStream, 3);
    const ConditionMaps cond = make_condition_maps(0, 1, s.frames(), 1, 32, 32);
    const auto out = model.infer(s.magnitude[0], s.magnitude[2], s.seg[0], s.seg[2], cond);
    CHECK(out.m_hat.h == 32);
    CHECK(out.s_logits.h == 32);
    for (float v : out.m_hat.px) {
        CHECK(v >= -1.f);
        CHECK(v <= 1.f);
    }
}

TEST_CASE("interpolate_series identity and copy contracts") {
    const CineStudy s = small_phantom();
    InterpModel model(tiny_cfg(), InterpModel::Arch::MultiHead, 3);

    const CineStudy same = interpolate_series(model, s, DownsampleSpec{0, 0});
    for (int t = 0; t < s.frames(); ++t) CHECK(same.magnitude[t].px == s.magnitude[t].px);

    const DownsampleSpec spec{1, 0};
    const CineStudy out = interpolate_series(model, s, spec);
    for (int t = 0; t < s.frames(); ++t) {
        if (spec.is_anchor(t)) {
            CHECK(out.magnitude[t].px == s.magnitude[t].px);
            CHECK(out.seg[t].px == s.seg[t].px);
            CHECK(out.phase_x[t].px == s.phase_x[t].px);
        } else {
            CHECK(out.seg[t].is_binary());
        }
    }
}

TEST_CASE("interpolate_series handles non-divisible strides and offsets") {
    const CineStudy s = small_phantom(10);
    InterpModel model(tiny_cfg(), InterpModel::Arch::MultiHead, 3);
    // K = 2 with T = 10: anchors 0,3,6,9; wrap gap 9 -> 0 has length 1.
    const CineStudy out = interpolate_series(model, s, DownsampleSpec{2, 0});
    CHECK(out.frames() == 10);
    // offset variant
    const CineStudy out2 = interpolate_series(model, s, DownsampleSpec{2, 1});
    CHECK(out2.magnitude[1].px == s.magnitude[1].px);    // anchor at offset
    CHECK(out2.magnitude[4].px == s.magnitude[4].px);
    CHECK_THROWS_AS(interpolate_series(model, s, DownsampleSpec{1, 30}),
                    std::invalid_argument);
}

TEST_CASE("checkpoint round trip preserves the model") {
    namespace fs = std::filesystem;
    const CineStudy s = small_phantom();
    InterpModel model(tiny_cfg(), InterpModel::Arch::MultiHead, 77);
    const fs::path dir = fs::temp_directory_path() / "mvms_test_interp_ckpt";
    fs::remove_all(dir);
    nlohmann::json extra;
    extra["k"] = 1;
    model.save(dir, extra);

    auto loaded = InterpModel::load(dir);
    CHECK(loaded->params().value == model.params().value);
    CHECK(loaded->arch() == InterpModel::Arch::MultiHead);
    const ConditionMaps cond = make_condition_maps(0, 1, s.frames(), 1, 32, 32);
    const auto a = model.infer(s.magnitude[0], s.magnitude[2], s.seg[0], s.seg[2], cond);
    const auto b = loaded->infer(s.magnitude[0], s.magnitude[2], s.seg[0], s.seg[2], cond);
    CHECK(a.m_hat.px == b.m_hat.px);
}
