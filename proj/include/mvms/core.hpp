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

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvms {

// Raised when a study directory is missing files, has a bad header, or its
// tensors disagree with meta.json.
class CorruptStudyError : public std::runtime_error {
public:
    explicit CorruptStudyError(const std::string& what) : std::runtime_error(what) {}
};

class NoMyocardiumError : public std::runtime_error {
public:
    explicit NoMyocardiumError(const std::string& what) : std::runtime_error(what) {}
};

class TrainingFailure : public std::runtime_error {
public:
    explicit TrainingFailure(const std::string& what) : std::runtime_error(what) {}
};

class UndefinedCorrelationError : public std::runtime_error {
public:
    explicit UndefinedCorrelationError(const std::string& what) : std::runtime_error(what) {}
};

// Single grayscale frame, row-major, values normalised to [-1,1].
struct Image {
    int h = 0, w = 0;
    std::vector<float> px;

    Image() = default;
    Image(int h_, int w_, float fill = 0.f) : h(h_), w(w_), px(size_t(h_) * w_, fill) {}

    float& at(int y, int x) { return px[size_t(y) * w + x]; }
    float at(int y, int x) const { return px[size_t(y) * w + x]; }
    size_t size() const { return px.size(); }
    bool same_shape(const Image& o) const { return h == o.h && w == o.w; }
};

// Binary mask frame; 1 = LV myocardium.
struct Mask {
    int h = 0, w = 0;
    std::vector<uint8_t> px;

    Mask() = default;
    Mask(int h_, int w_, uint8_t fill = 0) : h(h_), w(w_), px(size_t(h_) * w_, fill) {}

    uint8_t& at(int y, int x) { return px[size_t(y) * w + x]; }
    uint8_t at(int y, int x) const { return px[size_t(y) * w + x]; }
    size_t size() const { return px.size(); }
    size_t area() const;
    bool is_binary() const;
};

struct StudyMeta {
    int num_frames = 50;
    double venc_inplane_cms = 20.0;   // full-scale in-plane velocity
    double venc_through_cms = 30.0;   // full-scale through-plane velocity
    double pixel_spacing_mm = 1.5;
    std::string subject_id;

    void validate() const;
};

// One slice over a full cardiac cycle: T magnitude frames, T x 3 phase
// frames and T segmentation masks, all sharing H x W.
struct CineStudy {
    std::vector<Image> magnitude;
    std::vector<Image> phase_x, phase_y, phase_z;
    std::vector<Mask> seg;
    StudyMeta meta;

    int frames() const { return int(magnitude.size()); }
    int height() const { return magnitude.empty() ? 0 : magnitude[0].h; }
    int width() const { return magnitude.empty() ? 0 : magnitude[0].w; }

    // Throws CorruptStudyError unless all invariants hold (shared dims,
    // [-1,1] ranges, binary masks, T == meta.num_frames).
    void validate() const;
};

// Temporal downsampling: K discarded frames per gap, anchors at
// indices == offset (mod K+1).
struct DownsampleSpec {
    int k = 0;
    int offset = 0;

    void validate(int num_frames) const;
    bool is_anchor(int t) const { return (t % (k + 1)) == (offset % (k + 1)); }
};

// Maps t onto [0, T) respecting cardiac periodicity; negative t wraps too.
int wrap_index(long long t, int num_frames);

// Raw scanner phase values live in [0, 4096]; storage is [-1,1] with
// 2048 <-> zero velocity.
float normalize_phase_raw(int raw);
int denormalize_phase(float value);

std::vector<float> normalize_phase_raw(const std::vector<int>& raw);

void save_study(const CineStudy& study, const std::filesystem::path& dir);
CineStudy load_study(const std::filesystem::path& dir);

// Raw .ten tensor file I/O (magic MVMTEN01, little-endian header).
void save_tensor_f32(const std::filesystem::path& file, const std::vector<uint32_t>& dims,
                     const float* data);
void save_tensor_u8(const std::filesystem::path& file, const std::vector<uint32_t>& dims,
                    const uint8_t* data);
void load_tensor_f32(const std::filesystem::path& file, std::vector<uint32_t>& dims,
                     std::vector<float>& data);
void load_tensor_u8(const std::filesystem::path& file, std::vector<uint32_t>& dims,
                    std::vector<uint8_t>& data);

// splitmix64; used to derive independent per-study / per-frame RNG streams.
uint64_t mix_seed(uint64_t seed, uint64_t stream);

// Deterministic uniform/normal draws (Box-Muller over mt19937_64); avoids
// std::normal_distribution so streams are bit-stable across libraries.
class DetRng {
public:
    explicit DetRng(uint64_t seed) : gen_(seed) {}

    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }   // [0,1)
    double normal();
    uint64_t next() { return gen_(); }

private:
    std::mt19937_64 gen_;
    double cached_ = 0;
    bool has_cached_ = false;
};

}  // namespace mvms
