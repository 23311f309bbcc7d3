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

// Global LV velocity series in mm/s, one sample per time point.
// Coordinate frame: x = column (right-positive), y = row (down-positive);
// radial is positive outward from the LV centroid.
struct VelocityCurves {
    std::vector<double> radial;
    std::vector<double> circumferential;
    std::vector<double> longitudinal;

    int frames() const { return int(radial.size()); }
};

// Clinical summary of one curve: peak systolic / diastolic magnitudes,
// their time points, and the mean absolute velocity.
struct VelocityStats {
    double psv = 0, pdv = 0, mv = 0;
    int tpsv = 0, tpdv = 0;
};

// phase in [-1,1] -> velocity in cm/s; full-scale phase maps to +/- venc.
double phase_to_velocity(double phase, double venc_cms);

// Stored-phase encode map: velocity -> [-1,1], clamped at +/- venc and
// quantised onto the 4096-level raw grid.
float encode_velocity(double v_cms, double venc_cms);

// Decode composes the two affine maps (storage -> raw [0,4096] -> velocity),
// so arbitrary float phases are first re-quantised onto the raw grid.
double decode_phase(float phase, double venc_cms);

struct Centroid {
    double x = 0, y = 0;
};

Centroid lv_centroid(const Mask& seg);

// Per-pixel radial/circumferential projections of an in-plane velocity
// field, defined on mask pixels. Pixels closer than 1e-6 px to the centroid
// are excluded and counted.
struct CylindricalField {
    Image vr, vc;        // cm/s on mask pixels, 0 elsewhere
    int excluded = 0;
};

CylindricalField cylindrical_decompose(const Image& vx, const Image& vy, const Mask& seg,
                                       const Centroid& c);

// Decodes all three phase directions, projects in-plane velocity into the
// cylindrical frame and averages over the myocardium mask, frame by frame.
VelocityCurves global_curves(const CineStudy& study);

// psv/tpsv over [0, systole_end), pdv/tpdv over [systole_end, T),
// mv over the whole cycle; peaks are magnitudes of signed extrema.
VelocityStats curve_stats(const std::vector<double>& curve, int systole_end);

int default_systole_end(int num_frames);

// Per-direction Pearson correlation (nullopt when a series is constant)
// plus summary stats of both curve sets.
struct CurveComparison {
    std::optional<double> pearson_radial, pearson_circumferential, pearson_longitudinal;
    VelocityStats stats_a[3];
    VelocityStats stats_b[3];
};

CurveComparison compare_curves(const VelocityCurves& a, const VelocityCurves& b,
                               int systole_end);

}  // namespace mvms
