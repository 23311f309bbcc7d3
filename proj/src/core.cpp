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

#include "mvms/core.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace mvms {

using nlohmann::json;
namespace fs = std::filesystem;

size_t Mask::area() const {
    size_t n = 0;
    for (uint8_t v : px) n += (v != 0);
    return n;
}

bool Mask::is_binary() const {
    for (uint8_t v : px)
        if (v > 1) return false;
    return true;
}

void StudyMeta::validate() const {
    if (num_frames < 2) throw CorruptStudyError("meta: num_frames must be >= 2");
    if (venc_inplane_cms <= 0 || venc_through_cms <= 0)
        throw CorruptStudyError("meta: velocity encoding values must be positive");
    if (pixel_spacing_mm <= 0) throw CorruptStudyError("meta: pixel_spacing_mm must be positive");
}

namespace {

void check_range(const std::vector<Image>& frames, const char* name) {
    for (const Image& f : frames)
        for (float v : f.px)
            if (!(v >= -1.f && v <= 1.f))
                throw CorruptStudyError(std::string(name) + ": value outside [-1,1]");
}

}  // namespace

void CineStudy::validate() const {
    meta.validate();
    const size_t t = magnitude.size();
    if (t != size_t(meta.num_frames))
        throw CorruptStudyError("study: frame count does not match meta.num_frames");
    if (phase_x.size() != t || phase_y.size() != t || phase_z.size() != t || seg.size() != t)
        throw CorruptStudyError("study: arrays disagree on frame count");
    const int hh = height(), ww = width();
    auto check_dims = [&](int fh, int fw, const char* name) {
        if (fh != hh || fw != ww)
            throw CorruptStudyError(std::string(name) + ": frame dimensions differ");
    };
    for (size_t i = 0; i < t; ++i) {
        check_dims(magnitude[i].h, magnitude[i].w, "magnitude");
        check_dims(phase_x[i].h, phase_x[i].w, "phase_x");
        check_dims(phase_y[i].h, phase_y[i].w, "phase_y");
        check_dims(phase_z[i].h, phase_z[i].w, "phase_z");
        check_dims(seg[i].h, seg[i].w, "seg");
        if (!seg[i].is_binary()) throw CorruptStudyError("seg: mask is not binary");
    }
    check_range(magnitude, "magnitude");
    check_range(phase_x, "phase_x");
    check_range(phase_y, "phase_y");
    check_range(phase_z, "phase_z");
}

void DownsampleSpec::validate(int num_frames) const {
    if (k < 0) throw std::invalid_argument("downsample: K must be >= 0");
    if (offset < 0 || offset >= num_frames)
        throw std::invalid_argument("downsample: offset out of [0, num_frames)");
}

int wrap_index(long long t, int num_frames) {
    if (num_frames < 1) throw std::invalid_argument("wrap_index: T must be >= 1");
    long long m = t % num_frames;
    if (m < 0) m += num_frames;
    return int(m);
}

float normalize_phase_raw(int raw) {
    if (raw < 0 || raw > 4096)
        throw std::invalid_argument("normalize_phase_raw: raw value outside [0, 4096]");
    return float(raw / 2048.0 - 1.0);
}

int denormalize_phase(float value) {
    int raw = int(std::lround((double(value) + 1.0) * 2048.0));
    if (raw < 0) raw = 0;
    if (raw > 4096) raw = 4096;
    return raw;
}

std::vector<float> normalize_phase_raw(const std::vector<int>& raw) {
    std::vector<float> out(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) out[i] = normalize_phase_raw(raw[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Tensor file format: 8-byte magic "MVMTEN01", u8 dtype (1=f32, 2=u8),
// u8 ndim, ndim x u32 little-endian dims, row-major payload.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'M', 'V', 'M', 'T', 'E', 'N', '0', '1'};

void write_header(std::ofstream& f, uint8_t dtype, const std::vector<uint32_t>& dims) {
    f.write(kMagic, 8);
    f.put(char(dtype));
    f.put(char(dims.size()));
    for (uint32_t d : dims) {
        unsigned char le[4] = {(unsigned char)(d & 0xff), (unsigned char)((d >> 8) & 0xff),
                               (unsigned char)((d >> 16) & 0xff), (unsigned char)((d >> 24) & 0xff)};
        f.write(reinterpret_cast<char*>(le), 4);
    }
}

size_t read_header(std::ifstream& f, const fs::path& file, uint8_t expect_dtype,
                   std::vector<uint32_t>& dims) {
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw CorruptStudyError("bad magic in " + file.string());
    int dtype = f.get();
    int ndim = f.get();
    if (!f || dtype != expect_dtype)
        throw CorruptStudyError("unexpected dtype in " + file.string());
    if (ndim < 1 || ndim > 8) throw CorruptStudyError("bad ndim in " + file.string());
    dims.resize(ndim);
    size_t count = 1;
    for (int i = 0; i < ndim; ++i) {
        unsigned char le[4];
        f.read(reinterpret_cast<char*>(le), 4);
        if (!f) throw CorruptStudyError("truncated header in " + file.string());
        dims[i] = uint32_t(le[0]) | (uint32_t(le[1]) << 8) | (uint32_t(le[2]) << 16) |
                  (uint32_t(le[3]) << 24);
        count *= dims[i];
    }
    return count;
}

}  // namespace

void save_tensor_f32(const fs::path& file, const std::vector<uint32_t>& dims, const float* data) {
    std::ofstream f(file, std::ios::binary);
    if (!f) throw CorruptStudyError("cannot open " + file.string() + " for writing");
    write_header(f, 1, dims);
    size_t count = 1;
    for (uint32_t d : dims) count *= d;
    f.write(reinterpret_cast<const char*>(data), std::streamsize(count * 4));
    if (!f) throw CorruptStudyError("write failed: " + file.string());
}

void save_tensor_u8(const fs::path& file, const std::vector<uint32_t>& dims, const uint8_t* data) {
    std::ofstream f(file, std::ios::binary);
    if (!f) throw CorruptStudyError("cannot open " + file.string() + " for writing");
    write_header(f, 2, dims);
    size_t count = 1;
    for (uint32_t d : dims) count *= d;
    f.write(reinterpret_cast<const char*>(data), std::streamsize(count));
    if (!f) throw CorruptStudyError("write failed: " + file.string());
}

void load_tensor_f32(const fs::path& file, std::vector<uint32_t>& dims, std::vector<float>& data) {
    std::ifstream f(file, std::ios::binary);
    if (!f) throw CorruptStudyError("missing tensor file " + file.string());
    size_t count = read_header(f, file, 1, dims);
    data.resize(count);
    f.read(reinterpret_cast<char*>(data.data()), std::streamsize(count * 4));
    if (!f) throw CorruptStudyError("truncated payload in " + file.string());
}

void load_tensor_u8(const fs::path& file, std::vector<uint32_t>& dims, std::vector<uint8_t>& data) {
    std::ifstream f(file, std::ios::binary);
    if (!f) throw CorruptStudyError("missing tensor file " + file.string());
    size_t count = read_header(f, file, 2, dims);
    data.resize(count);
    f.read(reinterpret_cast<char*>(data.data()), std::streamsize(count));
    if (!f) throw CorruptStudyError("truncated payload in " + file.string());
}

// ---------------------------------------------------------------------------
// Study persistence: meta.json plus one tensor file per array.
// ---------------------------------------------------------------------------

namespace {

void save_frames_f32(const fs::path& file, const std::vector<Image>& frames) {
    const uint32_t t = uint32_t(frames.size());
    const uint32_t h = uint32_t(frames[0].h), w = uint32_t(frames[0].w);
    std::vector<float> buf;
    buf.reserve(size_t(t) * h * w);
    for (const Image& f : frames) buf.insert(buf.end(), f.px.begin(), f.px.end());
    save_tensor_f32(file, {t, h, w}, buf.data());
}

std::vector<Image> load_frames_f32(const fs::path& file) {
    std::vector<uint32_t> dims;
    std::vector<float> buf;
    load_tensor_f32(file, dims, buf);
    if (dims.size() != 3) throw CorruptStudyError("expected 3-d tensor in " + file.string());
    std::vector<Image> frames(dims[0]);
    const size_t plane = size_t(dims[1]) * dims[2];
    for (uint32_t i = 0; i < dims[0]; ++i) {
        frames[i].h = int(dims[1]);
        frames[i].w = int(dims[2]);
        frames[i].px.assign(buf.begin() + i * plane, buf.begin() + (i + 1) * plane);
    }
    return frames;
}

}  // namespace

void save_study(const CineStudy& study, const fs::path& dir) {
    study.validate();
    fs::create_directories(dir);

    json meta;
    meta["num_frames"] = study.meta.num_frames;
    meta["venc_inplane_cms"] = study.meta.venc_inplane_cms;
    meta["venc_through_cms"] = study.meta.venc_through_cms;
    meta["pixel_spacing_mm"] = study.meta.pixel_spacing_mm;
    meta["subject_id"] = study.meta.subject_id;
    std::ofstream mf(dir / "meta.json");
    if (!mf) throw CorruptStudyError("cannot write " + (dir / "meta.json").string());
    mf << meta.dump(2) << "\n";

    save_frames_f32(dir / "magnitude.ten", study.magnitude);
    save_frames_f32(dir / "phase_x.ten", study.phase_x);
    save_frames_f32(dir / "phase_y.ten", study.phase_y);
    save_frames_f32(dir / "phase_z.ten", study.phase_z);

    const uint32_t t = uint32_t(study.seg.size());
    const uint32_t h = uint32_t(study.seg[0].h), w = uint32_t(study.seg[0].w);
    std::vector<uint8_t> buf;
    buf.reserve(size_t(t) * h * w);
    for (const Mask& m : study.seg) buf.insert(buf.end(), m.px.begin(), m.px.end());
    save_tensor_u8(dir / "seg.ten", {t, h, w}, buf.data());
}

CineStudy load_study(const fs::path& dir) {
    std::ifstream mf(dir / "meta.json");
    if (!mf) throw CorruptStudyError("missing meta.json in " + dir.string());
    json meta;
    try {
        mf >> meta;
    } catch (const json::exception& e) {
        throw CorruptStudyError("malformed meta.json in " + dir.string() + ": " + e.what());
    }

    CineStudy study;
    try {
        study.meta.num_frames = meta.at("num_frames").get<int>();
        study.meta.venc_inplane_cms = meta.at("venc_inplane_cms").get<double>();
        study.meta.venc_through_cms = meta.at("venc_through_cms").get<double>();
        study.meta.pixel_spacing_mm = meta.at("pixel_spacing_mm").get<double>();
        study.meta.subject_id = meta.at("subject_id").get<std::string>();
    } catch (const json::exception& e) {
        throw CorruptStudyError("meta.json missing keys in " + dir.string() + ": " + e.what());
    }

    study.magnitude = load_frames_f32(dir / "magnitude.ten");
    study.phase_x = load_frames_f32(dir / "phase_x.ten");
    study.phase_y = load_frames_f32(dir / "phase_y.ten");
    study.phase_z = load_frames_f32(dir / "phase_z.ten");

    std::vector<uint32_t> dims;
    std::vector<uint8_t> buf;
    load_tensor_u8(dir / "seg.ten", dims, buf);
    if (dims.size() != 3) throw CorruptStudyError("expected 3-d seg tensor in " + dir.string());
    study.seg.resize(dims[0]);
    const size_t plane = size_t(dims[1]) * dims[2];
    for (uint32_t i = 0; i < dims[0]; ++i) {
        study.seg[i].h = int(dims[1]);
        study.seg[i].w = int(dims[2]);
        study.seg[i].px.assign(buf.begin() + i * plane, buf.begin() + (i + 1) * plane);
    }

    study.validate();
    return study;
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double DetRng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    constexpr double two_pi = 6.283185307179586476925;
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(two_pi * u2);
    has_cached_ = true;
    return r * std::cos(two_pi * u2);
}

}  // namespace mvms
