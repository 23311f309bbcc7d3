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

#include "mvms/flow.hpp"

#include <algorithm>
#include <cmath>

namespace mvms {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* who) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

void check_k(int k, int big_k, const char* who) {
    if (big_k < 1 || k < 1 || k > big_k)
        throw std::invalid_argument(std::string(who) + ": need 1 <= k <= K");
}

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

Image linear_interpolate(const Image& m_a, const Image& m_b, int k, int big_k) {
    require_same_shape(m_a, m_b, "linear_interpolate");
    check_k(k, big_k, "linear_interpolate");
    const float f = float(k) / float(big_k + 1);
    Image out(m_a.h, m_a.w);
    for (size_t i = 0; i < out.px.size(); ++i)
        out.px[i] = (1.f - f) * m_a.px[i] + f * m_b.px[i];
    return out;
}

Mask linear_interpolate_mask(const Mask& s_a, const Mask& s_b, int k, int big_k) {
    if (s_a.h != s_b.h || s_a.w != s_b.w)
        throw std::invalid_argument("linear_interpolate_mask: shape mismatch");
    check_k(k, big_k, "linear_interpolate_mask");
    const float f = float(k) / float(big_k + 1);
    Mask out(s_a.h, s_a.w);
    for (size_t i = 0; i < out.px.size(); ++i)
        out.px[i] = ((1.f - f) * s_a.px[i] + f * s_b.px[i]) >= 0.5f ? 1 : 0;
    return out;
}

FlowField horn_schunck(const Image& i1, const Image& i2, double alpha, int iters) {
    require_same_shape(i1, i2, "horn_schunck");
    if (alpha <= 0) throw std::invalid_argument("horn_schunck: alpha must be positive");
    if (iters < 1) throw std::invalid_argument("horn_schunck: iters must be >= 1");
    const int h = i1.h, w = i1.w;

    // Spatial gradients of the temporal mean, replicate-padded; It = i2 - i1.
    Image ix(h, w), iy(h, w), it(h, w);
    auto mean_at = [&](int y, int x) {
        y = clampi(y, 0, h - 1);
        x = clampi(x, 0, w - 1);
        return 0.5f * (i1.at(y, x) + i2.at(y, x));
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            ix.at(y, x) = 0.5f * (mean_at(y, x + 1) - mean_at(y, x - 1));
            iy.at(y, x) = 0.5f * (mean_at(y + 1, x) - mean_at(y - 1, x));
            it.at(y, x) = i2.at(y, x) - i1.at(y, x);
        }
    }

    FlowField flow{Image(h, w), Image(h, w)};
    Image ub(h, w), vb(h, w);
    const double a2 = alpha * alpha;
    for (int iter = 0; iter < iters; ++iter) {
        // 4-neighbour averages with replicate borders.
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                auto u_at = [&](int yy, int xx) {
                    return flow.u.at(clampi(yy, 0, h - 1), clampi(xx, 0, w - 1));
                };
                auto v_at = [&](int yy, int xx) {
                    return flow.v.at(clampi(yy, 0, h - 1), clampi(xx, 0, w - 1));
                };
                ub.at(y, x) = 0.25f * (u_at(y - 1, x) + u_at(y + 1, x) + u_at(y, x - 1) +
                                       u_at(y, x + 1));
                vb.at(y, x) = 0.25f * (v_at(y - 1, x) + v_at(y + 1, x) + v_at(y, x - 1) +
                                       v_at(y, x + 1));
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double gx = ix.at(y, x), gy = iy.at(y, x), gt = it.at(y, x);
                const double num = gx * ub.at(y, x) + gy * vb.at(y, x) + gt;
                const double den = a2 + gx * gx + gy * gy;
                flow.u.at(y, x) = float(ub.at(y, x) - gx * num / den);
                flow.v.at(y, x) = float(vb.at(y, x) - gy * num / den);
            }
        }
    }
    return flow;
}

Image warp_bilinear(const Image& img, const FlowField& flow, double fraction) {
    require_same_shape(img, flow.u, "warp_bilinear");
    Image out(img.h, img.w);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            const double sx = std::clamp(x - fraction * flow.u.at(y, x), 0.0, double(img.w - 1));
            const double sy = std::clamp(y - fraction * flow.v.at(y, x), 0.0, double(img.h - 1));
            const int x0 = int(sx), y0 = int(sy);
            const int x1 = std::min(x0 + 1, img.w - 1), y1 = std::min(y0 + 1, img.h - 1);
            const double fx = sx - x0, fy = sy - y0;
            const double top = (1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1);
            const double bot = (1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1);
            out.at(y, x) = float((1 - fy) * top + fy * bot);
        }
    }
    return out;
}

Mask warp_nearest(const Mask& mask, const FlowField& flow, double fraction) {
    if (mask.h != flow.u.h || mask.w != flow.u.w)
        throw std::invalid_argument("warp_nearest: shape mismatch");
    Mask out(mask.h, mask.w);
    for (int y = 0; y < mask.h; ++y) {
        for (int x = 0; x < mask.w; ++x) {
            const int sx =
                clampi(int(std::lround(x - fraction * flow.u.at(y, x))), 0, mask.w - 1);
            const int sy =
                clampi(int(std::lround(y - fraction * flow.v.at(y, x))), 0, mask.h - 1);
            out.at(y, x) = mask.at(sy, sx) ? 1 : 0;
        }
    }
    return out;
}

WarpResult flow_warp_interpolate(const Image& m_a, const Image& m_b, const Mask& seg_a, int k,
                                 int big_k, const HornSchunckConfig& cfg) {
    check_k(k, big_k, "flow_warp_interpolate");
    const FlowField flow = horn_schunck(m_a, m_b, cfg.alpha, cfg.iters);
    const double f = double(k) / double(big_k + 1);
    return {warp_bilinear(m_a, flow, f), warp_nearest(seg_a, flow, f)};
}

}  // namespace mvms
