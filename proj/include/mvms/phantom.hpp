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

#include "mvms/core.hpp"

namespace mvms {

// Beating-annulus phantom: a textured myocardial ring that pulsates
// radially, twists about its centre and carries a through-plane velocity,
// all with closed-form velocities. One R-R interval is 1 s split into T
// frames.
struct PhantomParams {
    int h = 64, w = 64;
    int t = 50;
    double r_inner0 = 11.0;       // base inner radius, px
    double r_outer0 = 19.0;       // base outer radius, px
    double amp = 4.0;             // radial pulsation amplitude, px
    double twist_amp = 0.016;     // nominal angular velocity, rad/frame
    double z_amp = 3.0;           // through-plane velocity amplitude, cm/s
    double noise_sigma = 0.25;    // magnitude texture amplitude
    uint64_t seed = 1;

    double pixel_spacing_mm = 1.5;
    double venc_inplane_cms = 20.0;
    double venc_through_cms = 30.0;

    void validate() const;

    // The twist rate actually applied: twist_amp snapped so that the
    // rotation over one cycle lands on the texture symmetry grid and the
    // series wraps seamlessly at frame T.
    double effective_twist() const;
};

// Inner/outer ring radius at frame t: r0 + amp*sin(2*pi*t/T).
struct RingRadii {
    double inner = 0, outer = 0;
};
RingRadii analytic_radius(const PhantomParams& params, int t);

// Closed-form tissue velocity in cm/s at a myocardial pixel. Throws
// NoMyocardiumError when (x, y) lies outside the annulus at frame t.
struct Velocity3 {
    double vx = 0, vy = 0, vz = 0;
};
Velocity3 analytic_velocity(const PhantomParams& params, int t, double x, double y);

CineStudy generate_phantom(const PhantomParams& params);

}  // namespace mvms
