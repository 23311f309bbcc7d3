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

#include <cmath>
#include <random>

#include "mvms/metrics.hpp"

using namespace mvms;

namespace {

Image random_image(int h, int w, std::mt19937_64& gen) {
    Image img(h, w);
    for (float& v : img.px) v = float(double(gen() >> 11) * 0x1.0p-52 - 1.0);
    return img;
}

// Independent double-loop reference for the weighted MAE.
double wmae_reference(const Image& pred, const Image& gt, const WeightMap& w1,
                      const WeightMap& w2) {
    double s1 = 0, s2 = 0;
    for (int y = 0; y < pred.h; ++y) {
        for (int x = 0; x < pred.w; ++x) {
            const double d = std::abs(double(pred.at(y, x)) - double(gt.at(y, x)));
            s1 += w1.at(y, x) * d;
            s2 += w2.at(y, x) * d;
        }
    }
    const double n = double(pred.h) * pred.w;
    return s1 / n + s2 / n;
}

double wmse_reference(const Image& pred, const Image& gt, const WeightMap& w) {
    double s = 0;
    for (int y = 0; y < pred.h; ++y)
        for (int x = 0; x < pred.w; ++x) {
            const double d = double(pred.at(y, x)) - double(gt.at(y, x));
            s += w.at(y, x) * d * d;
        }
    return s / (double(pred.h) * pred.w);
}

WeightMap random_weights(int h, int w, std::mt19937_64& gen) {
    WeightMap wm(h, w, 0.1f);
    for (float& v : wm.wt) v = (gen() & 1) ? 1.0f : 0.1f;
    return wm;
}

}  // namespace

TEST_CASE("roi weight map geometry") {
    Mask full(16, 16, 1);
    const WeightMap wf = roi_weight_map(full, 4);
    for (float v : wf.wt) CHECK(v == 1.0f);

    Mask empty(16, 16, 0);
    bool warn = false;
    const WeightMap we = roi_weight_map(empty, 4, &warn);
    CHECK(warn);
    for (float v : we.wt) CHECK(v == 0.1f);

    // Single pixel at (10,10), pad 2: box rows/cols 8..12 exactly.
    Mask single(20, 20, 0);
    single.at(10, 10) = 1;
    const WeightMap ws = roi_weight_map(single, 2);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) {
            const bool inside = y >= 8 && y <= 12 && x >= 8 && x <= 12;
            CHECK(ws.at(y, x) == (inside ? 1.0f : 0.1f));
        }
}

TEST_CASE("foreground weight map threshold") {
    Image img(2, 2);
    img.at(0, 0) = -1.0f;
    img.at(0, 1) = 0.0f;
    img.at(1, 0) = -0.95f;   // strictly greater-than threshold
    img.at(1, 1) = -0.9f;
    const WeightMap w = foreground_weight_map(img);
    CHECK(w.at(0, 0) == 0.1f);
    CHECK(w.at(0, 1) == 1.0f);
    CHECK(w.at(1, 0) == 0.1f);
    CHECK(w.at(1, 1) == 1.0f);
}

TEST_CASE("weight maps contain only 0.1 and 1.0") {
    std::mt19937_64 gen(5);
    for (int i = 0; i < 20; ++i) {
        Mask m(12, 12, 0);
        for (auto& v : m.px) v = (gen() & 3) == 0;
        const Image img = random_image(12, 12, gen);
        for (const WeightMap& w : {roi_weight_map(m, 2), foreground_weight_map(img)})
            for (float v : w.wt) CHECK((v == 0.1f || v == 1.0f));
    }
}

TEST_CASE("weighted MAE basics") {
    Image a(8, 8, 0.25f), b(8, 8, -0.25f);
    WeightMap ones(8, 8, 1.0f);
    CHECK(weighted_mae(a, a, ones, ones) == doctest::Approx(0.0));
    CHECK(weighted_mae(a, b, ones, ones) == doctest::Approx(1.0));

    Image tiny(4, 4);
    CHECK_THROWS_AS(weighted_mae(a, tiny, ones, ones), std::invalid_argument);
}

TEST_CASE("weighted MAE / MSE match the double-loop reference") {
    std::mt19937_64 gen(11);
    for (int i = 0; i < 100; ++i) {
        const Image pred = random_image(8, 8, gen);
        const Image gt = random_image(8, 8, gen);
        const WeightMap w1 = random_weights(8, 8, gen);
        const WeightMap w2 = random_weights(8, 8, gen);
        CHECK(std::abs(weighted_mae(pred, gt, w1, w2) - wmae_reference(pred, gt, w1, w2)) <=
              1e-6);
        CHECK(std::abs(weighted_mse(pred, gt, w1) - wmse_reference(pred, gt, w1)) <= 1e-6);
    }
}

TEST_CASE("weighted MAE is positive definite") {
    std::mt19937_64 gen(31);
    const Image gt = random_image(8, 8, gen);
    const WeightMap w1 = random_weights(8, 8, gen);
    const WeightMap w2 = random_weights(8, 8, gen);
    CHECK(weighted_mae(gt, gt, w1, w2) == 0.0);
    for (int rep = 0; rep < 10; ++rep) {
        Image pred = gt;
        pred.px[size_t(gen() % pred.px.size())] += 0.25f;   // differ in one pixel
        CHECK(weighted_mae(pred, gt, w1, w2) > 0.0);
    }
}

TEST_CASE("weighted MSE basics") {
    Image a(8, 8, 0.25f), b(8, 8, -0.25f);
    WeightMap ones(8, 8, 1.0f);
    CHECK(weighted_mse(a, a, ones) == doctest::Approx(0.0));
    CHECK(weighted_mse(a, b, ones) == doctest::Approx(0.25));
}

TEST_CASE("MAE equals MSE on binary error images") {
    std::mt19937_64 gen(17);
    Image pred(8, 8), gt(8, 8);
    for (size_t i = 0; i < pred.px.size(); ++i) {
        gt.px[i] = 0.f;
        pred.px[i] = (gen() & 1) ? 1.f : 0.f;   // |e| in {0,1}
    }
    const WeightMap w1 = random_weights(8, 8, gen);
    const WeightMap w2 = random_weights(8, 8, gen);
    const double mae = weighted_mae(pred, gt, w1, w2);
    const double mse_sum = weighted_mse(pred, gt, w1) + weighted_mse(pred, gt, w2);
    CHECK(mae == doctest::Approx(mse_sum).epsilon(1e-12));
}

TEST_CASE("weighted MAE gradient matches central finite differences") {
    std::mt19937_64 gen(23);
    const double h = 1e-4;
    for (int rep = 0; rep < 5; ++rep) {
        Image pred = random_image(6, 6, gen);
        const Image gt = random_image(6, 6, gen);
        const WeightMap w1 = random_weights(6, 6, gen);
        const WeightMap w2 = random_weights(6, 6, gen);
        const Image grad = weighted_mae_grad(pred, gt, w1, w2);
        for (size_t i = 0; i < pred.px.size(); ++i) {
            const float orig = pred.px[i];
            if (std::abs(double(orig) - double(gt.px[i])) < 10 * h) continue;   // kink
            pred.px[i] = float(orig + h);
            const double up = wmae_reference(pred, gt, w1, w2);
            pred.px[i] = float(orig - h);
            const double dn = wmae_reference(pred, gt, w1, w2);
            pred.px[i] = orig;
            const double fd = (up - dn) / (2 * h);
            CHECK(std::abs(fd - grad.px[i]) <= 1e-3 * std::max(1e-6, std::abs(fd)));
        }
    }
}

TEST_CASE("psnr reference points") {
    // the formula itself, on an exact double MSE
    CHECK(std::abs(psnr_from_mse(0.01) - 20.0) <= 1e-9);
    CHECK(std::abs(psnr_from_mse(1.0) - 0.0) <= 1e-12);
    Image gt(8, 8, 0.0f);
    Image pred(8, 8, 0.1f);   // float images: MSE = 0.01 up to float rounding
    CHECK(psnr01(pred, gt) == doctest::Approx(20.0).epsilon(1e-6));
    Image one(8, 8, 1.0f);
    CHECK(psnr01(one, gt) == doctest::Approx(0.0));
    CHECK(std::isinf(psnr01(gt, gt)));
}

TEST_CASE("ssim identities and inversion") {
    Image ramp(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) ramp.at(y, x) = float((x + y) / 30.0);
    CHECK(ssim01(ramp, ramp) == doctest::Approx(1.0));

    Image c1(8, 8, 0.5f);
    CHECK(ssim01(c1, c1) == doctest::Approx(1.0));

    Image inverted(16, 16);
    for (size_t i = 0; i < ramp.px.size(); ++i) inverted.px[i] = 1.f - ramp.px[i];
    CHECK(ssim01(inverted, ramp) < 0.0);

    Image small(4, 4);
    CHECK_THROWS_AS(ssim01(small, small), std::invalid_argument);
}

TEST_CASE("ssim matches a per-window direct evaluation") {
    std::mt19937_64 gen(29);
    Image a(12, 12), b(12, 12);
    for (size_t i = 0; i < a.px.size(); ++i) {
        a.px[i] = float(double(gen() >> 11) * 0x1.0p-53);
        b.px[i] = float(double(gen() >> 11) * 0x1.0p-53);
    }
    // Direct windowed evaluation of the SSIM formula.
    constexpr double c1 = 1e-4, c2 = 9e-4;
    double total = 0;
    int count = 0;
    for (int y = 0; y + 8 <= 12; ++y) {
        for (int x = 0; x + 8 <= 12; ++x) {
            double mx = 0, my = 0;
            for (int dy = 0; dy < 8; ++dy)
                for (int dx = 0; dx < 8; ++dx) {
                    mx += a.at(y + dy, x + dx);
                    my += b.at(y + dy, x + dx);
                }
            mx /= 64;
            my /= 64;
            double vx = 0, vy = 0, cov = 0;
            for (int dy = 0; dy < 8; ++dy)
                for (int dx = 0; dx < 8; ++dx) {
                    const double da = a.at(y + dy, x + dx) - mx;
                    const double db = b.at(y + dy, x + dx) - my;
                    vx += da * da;
                    vy += db * db;
                    cov += da * db;
                }
            vx /= 64;
            vy /= 64;
            cov /= 64;
            total += ((2 * mx * my + c1) * (2 * cov + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    CHECK(ssim01(a, b) == doctest::Approx(total / count).epsilon(1e-10));
}

TEST_CASE("dice cases") {
    Mask a(4, 4, 0), b(4, 4, 0);
    a.at(0, 0) = a.at(0, 1) = 1;
    b.at(0, 0) = b.at(0, 1) = b.at(1, 0) = b.at(1, 1) = 1;
    CHECK(dice(a, a) == doctest::Approx(1.0));
    CHECK(dice(a, b) == doctest::Approx(2.0 * 2 / 6));
    CHECK(dice(b, a) == doctest::Approx(dice(a, b)));   // symmetry

    Mask d1(4, 4, 0), d2(4, 4, 0);
    d1.at(0, 0) = 1;
    d2.at(3, 3) = 1;
    CHECK(dice(d1, d2) == doctest::Approx(0.0));

    Mask e1(4, 4, 0), e2(4, 4, 0);
    CHECK(dice(e1, e2) == doctest::Approx(1.0));

    Mask bad(4, 4, 0);
    bad.px[5] = 2;
    CHECK_THROWS_AS(dice(bad, a), std::invalid_argument);
}

TEST_CASE("pearson cases") {
    std::vector<double> x = {1, 2, 3, 4};
    std::vector<double> nx = {-1, -2, -3, -4};
    std::vector<double> y = {1, 2, 3, 5};
    CHECK(pearson(x, x) == doctest::Approx(1.0));
    CHECK(pearson(x, nx) == doctest::Approx(-1.0));
    CHECK(pearson(x, y) == doctest::Approx(0.9827).epsilon(1e-4));

    std::vector<double> c = {2, 2, 2, 2};
    CHECK_THROWS_AS(pearson(x, c), UndefinedCorrelationError);
    std::vector<double> shorter = {1};
    CHECK_THROWS_AS(pearson(shorter, shorter), std::invalid_argument);
}

TEST_CASE("mean_std") {
    const MeanStd m = mean_std({1, 2, 3, 4});
    CHECK(m.mean == doctest::Approx(2.5));
    CHECK(m.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
}
