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

#include <filesystem>
#include <fstream>
#include <random>

#include "mvms/core.hpp"
#include "mvms/phantom.hpp"

using namespace mvms;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("mvms_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

CineStudy small_phantom(uint64_t seed = 7) {
    PhantomParams p;
    p.h = p.w = 32;
    p.t = 10;
    p.r_inner0 = 6;
    p.r_outer0 = 10;
    p.amp = 2;
    p.seed = seed;
    return generate_phantom(p);
}

}  // namespace

TEST_CASE("wrap_index basics") {
    CHECK(wrap_index(52, 50) == 2);
    CHECK(wrap_index(49, 50) == 49);
    CHECK(wrap_index(50, 50) == 0);
    CHECK(wrap_index(-1, 50) == 49);
    CHECK(wrap_index(-50, 50) == 0);
    CHECK_THROWS_AS(wrap_index(3, 0), std::invalid_argument);
}

TEST_CASE("wrap_index periodicity property") {
    std::mt19937_64 gen(42);
    for (int i = 0; i < 2000; ++i) {
        const int t = int(gen() % 97) - 48;
        const int big_t = 1 + int(gen() % 60);
        const int n = int(gen() % 7) - 3;
        const int a = wrap_index(t, big_t);
        CHECK(a == wrap_index(t + (long long)n * big_t, big_t));
        CHECK(a >= 0);
        CHECK(a < big_t);
    }
}

TEST_CASE("phase normalization endpoints") {
    CHECK(normalize_phase_raw(2048) == doctest::Approx(0.0));
    CHECK(normalize_phase_raw(4096) == doctest::Approx(1.0));
    CHECK(normalize_phase_raw(0) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(normalize_phase_raw(4097), std::invalid_argument);
    CHECK_THROWS_AS(normalize_phase_raw(-1), std::invalid_argument);
}

TEST_CASE("phase normalization round trip within one step") {
    std::mt19937_64 gen(3);
    for (int i = 0; i < 1000; ++i) {
        const int raw = int(gen() % 4097);
        CHECK(denormalize_phase(normalize_phase_raw(raw)) == raw);
    }
    for (int i = 0; i < 1000; ++i) {
        const float v = float(i) / 500.f - 1.f;
        const float rt = normalize_phase_raw(denormalize_phase(v));
        CHECK(std::abs(rt - v) <= 1.f / 2048.f);
    }
}

TEST_CASE("study save/load round trip is bitwise") {
    const CineStudy study = small_phantom();
    const fs::path dir = temp_dir("roundtrip");
    save_study(study, dir / "s");
    const CineStudy loaded = load_study(dir / "s");

    REQUIRE(loaded.frames() == study.frames());
    for (int t = 0; t < study.frames(); ++t) {
        CHECK(loaded.magnitude[t].px == study.magnitude[t].px);
        CHECK(loaded.phase_x[t].px == study.phase_x[t].px);
        CHECK(loaded.phase_y[t].px == study.phase_y[t].px);
        CHECK(loaded.phase_z[t].px == study.phase_z[t].px);
        CHECK(loaded.seg[t].px == study.seg[t].px);
    }
    CHECK(loaded.meta.num_frames == study.meta.num_frames);
    CHECK(loaded.meta.venc_inplane_cms == study.meta.venc_inplane_cms);
    CHECK(loaded.meta.venc_through_cms == study.meta.venc_through_cms);
    CHECK(loaded.meta.pixel_spacing_mm == study.meta.pixel_spacing_mm);
    CHECK(loaded.meta.subject_id == study.meta.subject_id);
}

TEST_CASE("load_study rejects a missing tensor file") {
    const CineStudy study = small_phantom();
    const fs::path dir = temp_dir("missing");
    save_study(study, dir / "s");
    fs::remove(dir / "s" / "phase_z.ten");
    CHECK_THROWS_AS(load_study(dir / "s"), CorruptStudyError);
}

TEST_CASE("load_study rejects meta/tensor frame mismatch") {
    const CineStudy study = small_phantom();
    const fs::path dir = temp_dir("mismatch");
    save_study(study, dir / "s");
    // Rewrite meta.json with a different frame count.
    std::ofstream f(dir / "s" / "meta.json");
    f << "{\"num_frames\": 99, \"venc_inplane_cms\": 20.0, \"venc_through_cms\": 30.0, "
         "\"pixel_spacing_mm\": 1.5, \"subject_id\": \"x\"}\n";
    f.close();
    CHECK_THROWS_AS(load_study(dir / "s"), CorruptStudyError);
}

TEST_CASE("load_study rejects a corrupted magic header") {
    const CineStudy study = small_phantom();
    const fs::path dir = temp_dir("magic");
    save_study(study, dir / "s");
    std::fstream f(dir / "s" / "magnitude.ten",
                   std::ios::binary | std::ios::in | std::ios::out);
    f.put('X');
    f.close();
    CHECK_THROWS_AS(load_study(dir / "s"), CorruptStudyError);
}

TEST_CASE("downsample spec validation") {
    DownsampleSpec ok{2, 1};
    ok.validate(10);
    CHECK_THROWS_AS((DownsampleSpec{-1, 0}).validate(10), std::invalid_argument);
    CHECK_THROWS_AS((DownsampleSpec{1, 10}).validate(10), std::invalid_argument);
}
