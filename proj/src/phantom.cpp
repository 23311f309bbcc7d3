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

#include "mvms/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mvms/metrics.hpp"
#include "mvms/velocity.hpp"

namespace mvms {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Angular frequencies of the ring texture are multiples of this, so a
// rotation by 2*pi/kAngularSym leaves the texture unchanged.
constexpr int kAngularSym = 8;

// Half-width of the smooth ring edge, px.
constexpr double kEdge = 1.0;

double smoothstep(double a, double b, double x) {
    double u = (x - a) / (b - a);
    u = std::clamp(u, 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

// Band-limited material texture: seeded radial/angular harmonics.
struct RingTexture {
    struct Harmonic {
        double amp, radial_freq, radial_phase;
        int angular_freq;
        double angular_phase;
    };
    std::vector<Harmonic> harmonics;

    RingTexture(uint64_t seed, double sigma) {
        DetRng rng(seed);
        const int n = 6;
        for (int i = 0; i < n; ++i) {
            Harmonic h;
            h.amp = sigma * (0.5 + 0.5 * rng.uniform()) / double(n) * 2.0;
            h.radial_freq = 2.0 * kPi / (3.0 + 5.0 * rng.uniform());
            h.radial_phase = 2.0 * kPi * rng.uniform();
            h.angular_freq = kAngularSym * (1 + int(rng.next() % 2));
            h.angular_phase = 2.0 * kPi * rng.uniform();
            harmonics.push_back(h);
        }
    }

    double value(double r_material, double theta_material) const {
        double s = 0;
        for (const auto& h : harmonics)
            s += h.amp * std::sin(h.radial_freq * r_material + h.radial_phase) *
                 std::cos(h.angular_freq * theta_material + h.angular_phase);
        return s;
    }
};

}  // namespace

void PhantomParams::validate() const {
    if (h < 16 || w < 16 || t < 2) throw std::invalid_argument("phantom: grid too small");
    if (!(0 < r_inner0 && r_inner0 < r_outer0 && r_outer0 < std::min(h, w) / 2.0))
        throw std::invalid_argument("phantom: need 0 < r_inner0 < r_outer0 < min(H,W)/2");
    if (!(amp >= 0 && amp < r_inner0))
        throw std::invalid_argument("phantom: need 0 <= amp < r_inner0");
    if (r_outer0 + amp + kEdge + 2.0 >= std::min(h, w) / 2.0)
        throw std::invalid_argument("phantom: ring plus margin exceeds the image");
    if (noise_sigma < 0 || noise_sigma > 0.5)
        throw std::invalid_argument("phantom: noise_sigma out of [0, 0.5]");
}

double PhantomParams::effective_twist() const {
    const double grid = 2.0 * kPi / (double(t) * kAngularSym);
    return std::round(twist_amp / grid) * grid;
}

RingRadii analytic_radius(const PhantomParams& params, int t) {
    if (t < 0 || t >= params.t) throw std::invalid_argument("analytic_radius: frame out of range");
    const double dr = params.amp * std::sin(2.0 * kPi * t / params.t);
    return {params.r_inner0 + dr, params.r_outer0 + dr};
}

namespace {

// px/frame -> cm/s with a 1 s R-R interval split into T frames.
double px_per_frame_to_cms(const PhantomParams& p, double v) {
    return v * p.pixel_spacing_mm * double(p.t) / 10.0;
}

Velocity3 velocity_at(const PhantomParams& p, int t, double rx, double ry, double r) {
    const double phase = 2.0 * kPi * t / p.t;
    const double dr_dt = p.amp * (2.0 * kPi / p.t) * std::cos(phase);   // px/frame
    const double vrad = px_per_frame_to_cms(p, dr_dt);
    const double vtan = px_per_frame_to_cms(p, p.effective_twist() * r);
    const double ux = rx / r, uy = ry / r;
    Velocity3 v;
    v.vx = vrad * ux + vtan * (-uy);
    v.vy = vrad * uy + vtan * ux;
    v.vz = p.z_amp * std::cos(phase);
    return v;
}

}  // namespace

Velocity3 analytic_velocity(const PhantomParams& params, int t, double x, double y) {
    params.validate();
    const RingRadii rad = analytic_radius(params, t);
    const double cx = (params.w - 1) / 2.0, cy = (params.h - 1) / 2.0;
    const double rx = x - cx, ry = y - cy;
    const double r = std::sqrt(rx * rx + ry * ry);
    if (r < rad.inner || r > rad.outer)
        throw NoMyocardiumError("analytic_velocity: point outside the annulus");
    return velocity_at(params, t, rx, ry, r);
}

CineStudy generate_phantom(const PhantomParams& params) {
    params.validate();
    const int h = params.h, w = params.w, t = params.t;
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    const double twist = params.effective_twist();

    const RingTexture texture(mix_seed(params.seed, 0), params.noise_sigma);

    CineStudy study;
    study.meta.num_frames = t;
    study.meta.venc_inplane_cms = params.venc_inplane_cms;
    study.meta.venc_through_cms = params.venc_through_cms;
    study.meta.pixel_spacing_mm = params.pixel_spacing_mm;
    study.meta.subject_id = "phantom-" + std::to_string(params.seed);
    study.magnitude.assign(t, Image(h, w, -1.f));
    study.phase_x.assign(t, Image(h, w));
    study.phase_y.assign(t, Image(h, w));
    study.phase_z.assign(t, Image(h, w));
    study.seg.assign(t, Mask(h, w));

    for (int f = 0; f < t; ++f) {
        const RingRadii rad = analytic_radius(params, f);
        const double dr = rad.inner - params.r_inner0;
        DetRng bg(mix_seed(params.seed, 1000 + uint64_t(f)));

        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double rx = x - cx, ry = y - cy;
                const double r = std::sqrt(rx * rx + ry * ry);

                // Smooth ring profile with material-advected texture.
                const double ring = smoothstep(rad.inner - kEdge, rad.inner + kEdge, r) *
                                    (1.0 - smoothstep(rad.outer - kEdge, rad.outer + kEdge, r));
                double mag = -1.0;
                if (ring > 0) {
                    const double theta = std::atan2(ry, rx);
                    const double tissue =
                        0.4 + texture.value(r - dr, theta - twist * f);
                    mag = -1.0 + ring * (tissue + 1.0);
                }
                study.magnitude[f].at(y, x) = float(std::clamp(mag, -1.0, 1.0));

                study.seg[f].at(y, x) = (r >= rad.inner && r <= rad.outer) ? 1 : 0;

                // Tissue pixels (anything above the background threshold)
                // carry the analytic velocity; background is Gaussian noise.
                float px, py, pz;
                if (mag > double(kBackgroundThreshold) && r >= 1e-6) {
                    const Velocity3 v = velocity_at(params, f, rx, ry, r);
                    px = encode_velocity(v.vx, params.venc_inplane_cms);
                    py = encode_velocity(v.vy, params.venc_inplane_cms);
                    pz = encode_velocity(v.vz, params.venc_through_cms);
                } else {
                    auto noise = [&]() {
                        double n = 0.034 + 0.034 * bg.normal();
                        return normalize_phase_raw(denormalize_phase(float(std::clamp(n, -1.0, 1.0))));
                    };
                    px = noise();
                    py = noise();
                    pz = noise();
                }
                study.phase_x[f].at(y, x) = px;
                study.phase_y[f].at(y, x) = py;
                study.phase_z[f].at(y, x) = pz;
            }
        }
    }
    study.validate();
    return study;
}

}  // namespace mvms
