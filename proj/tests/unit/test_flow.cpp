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

#include <algorithm>
#include <cmath>

#include "mvms/flow.hpp"

using namespace mvms;

namespace {

// Smooth Gaussian blob centred at (cx, cy). The amplitude keeps the data
// term competitive with the smoothness term at alpha = 1.
Image gaussian_blob(int h, int w, double cx, double cy, double sigma, double amp = 8.0) {
    Image img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            img.at(y, x) = float(amp * std::exp(-d2 / (2 * sigma * sigma)));
        }
    return img;
}

// Brute-force integer-shift SSD oracle.
std::pair<int, int> best_integer_shift(const Image& i1, const Image& i2, int radius) {
    double best = 1e300;
    std::pair<int, int> arg{0, 0};
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            double ssd = 0;
            for (int y = radius; y < i1.h - radius; ++y)
                for (int x = radius; x < i1.w - radius; ++x) {
                    const double d = i1.at(y, x) - i2.at(y + dy, x + dx);
                    ssd += d * d;
                }
            if (ssd < best) {
                best = ssd;
                arg = {dx, dy};
            }
        }
    }
    // i1(x) == i2(x + dx) exactly when the blob moved by (dx, dy)
    return arg;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

}  // namespace

TEST_CASE("linear interpolation basics") {
    Image a(8, 8, 0.f), b(8, 8, 1.f);
    const Image mid = linear_interpolate(a, b, 1, 1);
    for (float v : mid.px) CHECK(v == doctest::Approx(0.5));
    const Image q = linear_interpolate(a, b, 1, 3);
    for (float v : q.px) CHECK(v == doctest::Approx(0.25));
    const Image same = linear_interpolate(a, a, 2, 3);
    CHECK(same.px == a.px);
    CHECK_THROWS_AS(linear_interpolate(a, b, 0, 3), std::invalid_argument);
    CHECK_THROWS_AS(linear_interpolate(a, b, 4, 3), std::invalid_argument);
}

TEST_CASE("linear interpolation is a convex combination") {
    Image a(6, 6), b(6, 6);
    for (size_t i = 0; i < a.px.size(); ++i) {
        a.px[i] = float(std::sin(double(i)));
        b.px[i] = float(std::cos(double(i)));
    }
    const Image m = linear_interpolate(a, b, 2, 4);
    for (size_t i = 0; i < m.px.size(); ++i) {
        CHECK(m.px[i] >= std::min(a.px[i], b.px[i]) - 1e-6f);
        CHECK(m.px[i] <= std::max(a.px[i], b.px[i]) + 1e-6f);
    }
}

TEST_CASE("mask interpolation stays binary") {
    Mask a(8, 8, 0), b(8, 8, 0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 8; ++x) a.at(y, x) = 1;
    for (int y = 2; y < 6; ++y)
        for (int x = 0; x < 8; ++x) b.at(y, x) = 1;
    const Mask m = linear_interpolate_mask(a, b, 1, 1);
    CHECK(m.is_binary());
    // overlap rows survive the 0.5 threshold
    CHECK(m.at(3, 0) == 1);
    CHECK(m.at(7, 0) == 0);
}

TEST_CASE("horn-schunck fixed points") {
    Image a(16, 16, 0.3f);
    const FlowField f0 = horn_schunck(a, a, 1.0, 50);
    for (float v : f0.u.px) CHECK(v == 0.0f);
    for (float v : f0.v.px) CHECK(v == 0.0f);

    Image c1(16, 16, 0.2f), c2(16, 16, 0.8f);
    const FlowField fc = horn_schunck(c1, c2, 1.0, 50);
    for (float v : fc.u.px) CHECK(v == 0.0f);

    CHECK_THROWS_AS(horn_schunck(a, a, 0.0, 10), std::invalid_argument);
    CHECK_THROWS_AS(horn_schunck(a, a, 1.0, 0), std::invalid_argument);
}

TEST_CASE("horn-schunck recovers a one-pixel translation") {
    const Image i1 = gaussian_blob(64, 64, 31.5, 31.5, 6.0);
    const Image i2 = gaussian_blob(64, 64, 32.5, 31.5, 6.0);

    const auto shift = best_integer_shift(i1, i2, 3);
    CHECK(shift.first == 1);
    CHECK(shift.second == 0);

    const FlowField f = horn_schunck(i1, i2, 1.0, 200);
    // median flow over high-gradient pixels
    std::vector<double> us, vs;
    float gmax = 0;
    Image gmag(64, 64);
    for (int y = 1; y < 63; ++y)
        for (int x = 1; x < 63; ++x) {
            const float gx = 0.5f * (i1.at(y, x + 1) - i1.at(y, x - 1));
            const float gy = 0.5f * (i1.at(y + 1, x) - i1.at(y - 1, x));
            gmag.at(y, x) = std::sqrt(gx * gx + gy * gy);
            gmax = std::max(gmax, gmag.at(y, x));
        }
    for (int y = 1; y < 63; ++y)
        for (int x = 1; x < 63; ++x)
            if (gmag.at(y, x) > 0.5f * gmax) {
                us.push_back(f.u.at(y, x));
                vs.push_back(f.v.at(y, x));
            }
    REQUIRE(us.size() > 50);
    CHECK(std::abs(median_of(us) - 1.0) < 0.2);
    CHECK(std::abs(median_of(vs) - 0.0) < 0.2);
}

TEST_CASE("horn-schunck is invariant to adding a constant to both frames") {
    const Image i1 = gaussian_blob(32, 32, 15.0, 16.0, 4.0, 1.0);
    const Image i2 = gaussian_blob(32, 32, 16.0, 16.0, 4.0, 1.0);
    Image j1 = i1, j2 = i2;
    for (float& v : j1.px) v += 0.25f;
    for (float& v : j2.px) v += 0.25f;
    const FlowField a = horn_schunck(i1, i2, 1.0, 60);
    const FlowField b = horn_schunck(j1, j2, 1.0, 60);
    for (size_t i = 0; i < a.u.px.size(); ++i) {
        CHECK(a.u.px[i] == doctest::Approx(b.u.px[i]).epsilon(1e-5));
        CHECK(a.v.px[i] == doctest::Approx(b.v.px[i]).epsilon(1e-5));
    }
}

TEST_CASE("warping with zero flow or zero fraction is the identity") {
    const Image img = gaussian_blob(24, 24, 12.0, 10.0, 3.0);
    Mask m(24, 24, 0);
    for (int y = 8; y < 14; ++y)
        for (int x = 9; x < 15; ++x) m.at(y, x) = 1;

    FlowField zero{Image(24, 24), Image(24, 24)};
    CHECK(warp_bilinear(img, zero, 0.7).px == img.px);
    CHECK(warp_nearest(m, zero, 0.7).px == m.px);

    FlowField some{Image(24, 24, 1.5f), Image(24, 24, -0.5f)};
    CHECK(warp_bilinear(img, some, 0.0).px == img.px);
}

TEST_CASE("flow warp places the blob near the motion midpoint") {
    const Image i1 = gaussian_blob(64, 64, 30.0, 32.0, 5.0);
    const Image i2 = gaussian_blob(64, 64, 32.0, 32.0, 5.0);
    Mask seg(64, 64, 0);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if (i1.at(y, x) > 0.5f) seg.at(y, x) = 1;

    const WarpResult w = flow_warp_interpolate(i1, i2, seg, 1, 1);
    double sx = 0, sw = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            sx += double(w.image.at(y, x)) * x;
            sw += w.image.at(y, x);
        }
    CHECK(std::abs(sx / sw - 31.0) < 0.5);

    CHECK(w.mask.is_binary());
    const double a0 = double(seg.area());
    const double a1 = double(w.mask.area());
    CHECK(std::abs(a1 - a0) / a0 < 0.2);
}
