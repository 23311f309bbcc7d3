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

#include "mvms/velocity.hpp"

#include <cmath>

#include "mvms/metrics.hpp"

namespace mvms {

double phase_to_velocity(double phase, double venc_cms) {
    if (venc_cms <= 0) throw std::invalid_argument("phase_to_velocity: venc must be positive");
    return phase * venc_cms;
}

float encode_velocity(double v_cms, double venc_cms) {
    if (venc_cms <= 0) throw std::invalid_argument("encode_velocity: venc must be positive");
    double p = v_cms / venc_cms;
    if (p < -1.0) p = -1.0;
    if (p > 1.0) p = 1.0;
    return normalize_phase_raw(denormalize_phase(float(p)));
}

double decode_phase(float phase, double venc_cms) {
    return phase_to_velocity(normalize_phase_raw(denormalize_phase(phase)), venc_cms);
}

Centroid lv_centroid(const Mask& seg) {
    double sx = 0, sy = 0;
    long n = 0;
    for (int y = 0; y < seg.h; ++y)
        for (int x = 0; x < seg.w; ++x)
            if (seg.at(y, x)) {
                sx += x;
                sy += y;
                ++n;
            }
    if (n == 0) throw NoMyocardiumError("lv_centroid: empty mask");
    return {sx / double(n), sy / double(n)};
}

CylindricalField cylindrical_decompose(const Image& vx, const Image& vy, const Mask& seg,
                                       const Centroid& c) {
    if (!vx.same_shape(vy) || vx.h != seg.h || vx.w != seg.w)
        throw std::invalid_argument("cylindrical_decompose: shape mismatch");
    CylindricalField out;
    out.vr = Image(seg.h, seg.w);
    out.vc = Image(seg.h, seg.w);
    for (int y = 0; y < seg.h; ++y) {
        for (int x = 0; x < seg.w; ++x) {
            if (!seg.at(y, x)) continue;
            const double rx = x - c.x, ry = y - c.y;
            const double r = std::sqrt(rx * rx + ry * ry);
            if (r < 1e-6) {
                ++out.excluded;
                continue;
            }
            const double ux = rx / r, uy = ry / r;     // radial unit vector
            const double cx_ = -uy, cy_ = ux;          // circumferential unit vector
            out.vr.at(y, x) = float(vx.at(y, x) * ux + vy.at(y, x) * uy);
            out.vc.at(y, x) = float(vx.at(y, x) * cx_ + vy.at(y, x) * cy_);
        }
    }
    return out;
}

VelocityCurves global_curves(const CineStudy& study) {
    const int t = study.frames();
    VelocityCurves curves;
    curves.radial.resize(t);
    curves.circumferential.resize(t);
    curves.longitudinal.resize(t);

    for (int i = 0; i < t; ++i) {
        if (study.seg[i].area() == 0)
            throw NoMyocardiumError("global_curves: empty mask at frame " + std::to_string(i));
        const Centroid c = lv_centroid(study.seg[i]);

        Image vx(study.height(), study.width()), vy(study.height(), study.width());
        for (size_t p = 0; p < vx.px.size(); ++p) {
            vx.px[p] = float(decode_phase(study.phase_x[i].px[p], study.meta.venc_inplane_cms));
            vy.px[p] = float(decode_phase(study.phase_y[i].px[p], study.meta.venc_inplane_cms));
        }
        CylindricalField f = cylindrical_decompose(vx, vy, study.seg[i], c);

        double sr = 0, sc = 0, sz = 0;
        long n = 0;
        for (int y = 0; y < study.height(); ++y) {
            for (int x = 0; x < study.width(); ++x) {
                if (!study.seg[i].at(y, x)) continue;
                const double rx = x - c.x, ry = y - c.y;
                if (std::sqrt(rx * rx + ry * ry) < 1e-6) continue;   // excluded pixel
                sr += f.vr.at(y, x);
                sc += f.vc.at(y, x);
                sz += decode_phase(study.phase_z[i].at(y, x), study.meta.venc_through_cms);
                ++n;
            }
        }
        // cm/s -> mm/s
        curves.radial[i] = 10.0 * sr / double(n);
        curves.circumferential[i] = 10.0 * sc / double(n);
        curves.longitudinal[i] = 10.0 * sz / double(n);
    }
    return curves;
}

VelocityStats curve_stats(const std::vector<double>& curve, int systole_end) {
    const int t = int(curve.size());
    if (t < 2) throw std::invalid_argument("curve_stats: curve too short");
    if (systole_end < 1 || systole_end >= t)
        throw std::invalid_argument("curve_stats: systole_end out of [1, T)");

    VelocityStats s;
    s.tpsv = 0;
    for (int i = 0; i < systole_end; ++i) {
        if (std::abs(curve[i]) > s.psv) {
            s.psv = std::abs(curve[i]);
            s.tpsv = i;
        }
    }
    s.tpdv = systole_end;
    for (int i = systole_end; i < t; ++i) {
        if (std::abs(curve[i]) > s.pdv) {
            s.pdv = std::abs(curve[i]);
            s.tpdv = i;
        }
    }
    for (int i = 0; i < t; ++i) s.mv += std::abs(curve[i]);
    s.mv /= double(t);
    return s;
}

int default_systole_end(int num_frames) {
    return int(std::lround(num_frames / 3.0));
}

CurveComparison compare_curves(const VelocityCurves& a, const VelocityCurves& b,
                               int systole_end) {
    if (a.frames() != b.frames()) throw std::invalid_argument("compare_curves: length mismatch");
    CurveComparison cmp;
    auto corr = [](const std::vector<double>& x,
                   const std::vector<double>& y) -> std::optional<double> {
        try {
            return pearson(x, y);
        } catch (const UndefinedCorrelationError&) {
            return std::nullopt;
        }
    };
    cmp.pearson_radial = corr(a.radial, b.radial);
    cmp.pearson_circumferential = corr(a.circumferential, b.circumferential);
    cmp.pearson_longitudinal = corr(a.longitudinal, b.longitudinal);
    const std::vector<double>* sa[3] = {&a.radial, &a.circumferential, &a.longitudinal};
    const std::vector<double>* sb[3] = {&b.radial, &b.circumferential, &b.longitudinal};
    for (int i = 0; i < 3; ++i) {
        cmp.stats_a[i] = curve_stats(*sa[i], systole_end);
        cmp.stats_b[i] = curve_stats(*sb[i], systole_end);
    }
    return cmp;
}

}  // namespace mvms
