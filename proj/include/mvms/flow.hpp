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

#include "mvms/core.hpp"

namespace mvms {

// Dense per-pixel displacement field, px per frame gap.
struct FlowField {
    Image u, v;
};

// Endpoint-consistent linear interpolation at position k of a gap with K
// discarded frames: (1 - k/(K+1)) * m_a + k/(K+1) * m_b.
Image linear_interpolate(const Image& m_a, const Image& m_b, int k, int big_k);

// Same convex combination on masks, thresholded at 0.5.
Mask linear_interpolate_mask(const Mask& s_a, const Mask& s_b, int k, int big_k);

// Classic Horn-Schunck fixed-point iteration with 4-neighbour flow
// averages, central-difference spatial gradients and zero initialisation.
FlowField horn_schunck(const Image& i1, const Image& i2, double alpha, int iters);

struct HornSchunckConfig {
    double alpha = 1.0;
    int iters = 200;
};

// Backward-warps m_a (bilinear) and seg_a (nearest-neighbour) by the
// fraction k/(K+1) of the a->b flow.
struct WarpResult {
    Image image;
    Mask mask;
};
WarpResult flow_warp_interpolate(const Image& m_a, const Image& m_b, const Mask& seg_a, int k,
                                 int big_k, const HornSchunckConfig& cfg = {});

// Warp by an explicit fractional flow; exposed for tests with injected flow.
Image warp_bilinear(const Image& img, const FlowField& flow, double fraction);
Mask warp_nearest(const Mask& mask, const FlowField& flow, double fraction);

}  // namespace mvms
