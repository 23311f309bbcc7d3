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

#include "mvms/nn.hpp"

#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include <Eigen/Dense>

namespace mvms::nn {

using RMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RMat>;
using CMapM = Eigen::Map<const RMat>;

Tensor tensor_from_image(const Image& img) {
    Tensor t(1, img.h, img.w);
    t.v.assign(img.px.begin(), img.px.end());
    return t;
}

Tensor tensor_from_mask(const Mask& mask) {
    Tensor t(1, mask.h, mask.w);
    for (size_t i = 0; i < mask.px.size(); ++i) t.v[i] = float(mask.px[i]);
    return t;
}

Image image_from_channel(const Tensor& t, int c) {
    Image img(t.h, t.w);
    const float* p = t.chan(c);
    std::copy(p, p + t.plane(), img.px.begin());
    return img;
}

size_t ParamStore::add(const std::string& name, std::vector<int> shape) {
    Entry e;
    e.name = name;
    e.shape = std::move(shape);
    e.count = 1;
    for (int d : e.shape) e.count *= size_t(d);
    e.offset = value.size();
    value.resize(value.size() + e.count, 0.f);
    entries.push_back(std::move(e));
    return entries.size() - 1;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

std::string param_file_name(const std::string& name) {
    std::string s = name;
    for (char& c : s)
        if (c == '/' || c == '.') c = '_';
    return s + ".ten";
}

}  // namespace

void save_checkpoint(const ParamStore& ps, const std::filesystem::path& dir,
                     const nlohmann::json& info) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["info"] = info;
    nlohmann::json params = nlohmann::json::array();
    for (size_t i = 0; i < ps.entries.size(); ++i) {
        const auto& e = ps.entries[i];
        nlohmann::json p;
        p["name"] = e.name;
        p["shape"] = e.shape;
        p["file"] = param_file_name(e.name);
        params.push_back(p);
        std::vector<uint32_t> dims;
        for (int d : e.shape) dims.push_back(uint32_t(d));
        save_tensor_f32(dir / param_file_name(e.name), dims, ps.value.data() + e.offset);
    }
    manifest["params"] = params;
    std::ofstream f(dir / "manifest.json");
    if (!f) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    f << manifest.dump(2) << "\n";
}

nlohmann::json peek_checkpoint_info(const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.json");
    if (!f) throw std::runtime_error("missing checkpoint manifest in " + dir.string());
    nlohmann::json manifest;
    f >> manifest;
    return manifest.at("info");
}

nlohmann::json load_checkpoint(ParamStore& ps, const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.json");
    if (!f) throw std::runtime_error("missing checkpoint manifest in " + dir.string());
    nlohmann::json manifest;
    f >> manifest;
    const auto& params = manifest.at("params");
    if (params.size() != ps.entries.size())
        throw std::runtime_error("checkpoint layout mismatch in " + dir.string());
    for (size_t i = 0; i < ps.entries.size(); ++i) {
        const auto& e = ps.entries[i];
        const auto& p = params[i];
        if (p.at("name").get<std::string>() != e.name)
            throw std::runtime_error("checkpoint param name mismatch: " + e.name);
        std::vector<uint32_t> dims;
        std::vector<float> data;
        load_tensor_f32(dir / p.at("file").get<std::string>(), dims, data);
        if (data.size() != e.count)
            throw std::runtime_error("checkpoint param size mismatch: " + e.name);
        std::copy(data.begin(), data.end(), ps.value.begin() + e.offset);
    }
    return manifest.at("info");
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int k, int stride,
               int pad, uint64_t seed)
    : cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad) {
    w_ = ps.add(name + ".weight", {cout, cin, k, k});
    b_ = ps.add(name + ".bias", {cout});
    DetRng rng(seed);
    const double std = std::sqrt(2.0 / (double(cin) * k * k));
    float* w = ps.data(w_);
    for (size_t i = 0; i < ps.count(w_); ++i) w[i] = float(rng.normal() * std);
}

Tensor Conv2d::forward(const ParamStore& ps, const Tensor& x, Ctx& ctx) const {
    if (x.c != cin_) throw std::invalid_argument("conv: channel mismatch");
    const int hout = (x.h + 2 * pad_ - k_) / stride_ + 1;
    const int wout = (x.w + 2 * pad_ - k_) / stride_ + 1;
    ctx.hin = x.h;
    ctx.win = x.w;
    ctx.hout = hout;
    ctx.wout = wout;
    const int rows = cin_ * k_ * k_, cols = hout * wout;
    ctx.col.assign(size_t(rows) * cols, 0.f);

    for (int ci = 0; ci < cin_; ++ci) {
        const float* src = x.chan(ci);
        for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
                float* dst = ctx.col.data() + (size_t(ci) * k_ * k_ + size_t(ky) * k_ + kx) * cols;
                for (int oy = 0; oy < hout; ++oy) {
                    const int iy = oy * stride_ - pad_ + ky;
                    if (iy < 0 || iy >= x.h) continue;
                    const float* row = src + size_t(iy) * x.w;
                    float* drow = dst + size_t(oy) * wout;
                    for (int ox = 0; ox < wout; ++ox) {
                        const int ix = ox * stride_ - pad_ + kx;
                        if (ix >= 0 && ix < x.w) drow[ox] = row[ix];
                    }
                }
            }
        }
    }

    Tensor out(cout_, hout, wout);
    CMapM wm(ps.data(w_), cout_, rows);
    CMapM colm(ctx.col.data(), rows, cols);
    MapM om(out.v.data(), cout_, cols);
    om.noalias() = wm * colm;
    const float* bias = ps.data(b_);
    for (int co = 0; co < cout_; ++co) om.row(co).array() += bias[co];
    return out;
}

Tensor Conv2d::backward(const ParamStore& ps, const Tensor& gout, const Ctx& ctx,
                        GradBuf& gb) const {
    const int rows = cin_ * k_ * k_, cols = ctx.hout * ctx.wout;
    CMapM gm(gout.v.data(), cout_, cols);
    CMapM colm(ctx.col.data(), rows, cols);

    const size_t woff = ps.entries[w_].offset, boff = ps.entries[b_].offset;
    MapM gw(gb.data() + woff, cout_, rows);
    gw.noalias() += gm * colm.transpose();
    Eigen::Map<Eigen::VectorXf> gbias(gb.data() + boff, cout_);
    gbias.noalias() += gm.rowwise().sum();

    // dcol = W^T * gout, then scatter back to the input grid.
    RMat dcol(rows, cols);
    CMapM wm(ps.data(w_), cout_, rows);
    dcol.noalias() = wm.transpose() * gm;

    Tensor gin(cin_, ctx.hin, ctx.win);
    for (int ci = 0; ci < cin_; ++ci) {
        float* dst = gin.chan(ci);
        for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
                const float* src = dcol.data() + (size_t(ci) * k_ * k_ + size_t(ky) * k_ + kx) * cols;
                for (int oy = 0; oy < ctx.hout; ++oy) {
                    const int iy = oy * stride_ - pad_ + ky;
                    if (iy < 0 || iy >= ctx.hin) continue;
                    float* drow = dst + size_t(iy) * ctx.win;
                    const float* srow = src + size_t(oy) * ctx.wout;
                    for (int ox = 0; ox < ctx.wout; ++ox) {
                        const int ix = ox * stride_ - pad_ + kx;
                        if (ix >= 0 && ix < ctx.win) drow[ix] += srow[ox];
                    }
                }
            }
        }
    }
    return gin;
}

// ---------------------------------------------------------------------------
// Elementwise and resampling ops
// ---------------------------------------------------------------------------

Tensor lrelu(const Tensor& x) {
    Tensor y = x;
    for (float& v : y.v)
        if (v < 0) v *= kLeakySlope;
    return y;
}

Tensor lrelu_back(const Tensor& g, const Tensor& x) {
    Tensor out = g;
    for (size_t i = 0; i < out.v.size(); ++i)
        if (x.v[i] < 0) out.v[i] *= kLeakySlope;
    return out;
}

Tensor tanh_fwd(const Tensor& x) {
    Tensor y = x;
    for (float& v : y.v) v = std::tanh(v);
    return y;
}

Tensor tanh_back(const Tensor& g, const Tensor& y) {
    Tensor out = g;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= 1.f - y.v[i] * y.v[i];
    return out;
}

Tensor avgpool2(const Tensor& x) {
    Tensor y(x.c, x.h / 2, x.w / 2);
    for (int c = 0; c < x.c; ++c) {
        const float* src = x.chan(c);
        float* dst = y.chan(c);
        for (int oy = 0; oy < y.h; ++oy)
            for (int ox = 0; ox < y.w; ++ox) {
                const float* p = src + size_t(2 * oy) * x.w + 2 * ox;
                dst[size_t(oy) * y.w + ox] = 0.25f * (p[0] + p[1] + p[x.w] + p[x.w + 1]);
            }
    }
    return y;
}

Tensor avgpool2_back(const Tensor& g, int hin, int win) {
    Tensor out(g.c, hin, win);
    for (int c = 0; c < g.c; ++c) {
        const float* src = g.chan(c);
        float* dst = out.chan(c);
        for (int oy = 0; oy < g.h; ++oy)
            for (int ox = 0; ox < g.w; ++ox) {
                const float v = 0.25f * src[size_t(oy) * g.w + ox];
                float* p = dst + size_t(2 * oy) * win + 2 * ox;
                p[0] = v;
                p[1] = v;
                p[win] = v;
                p[win + 1] = v;
            }
    }
    return out;
}

Tensor upsample2(const Tensor& x) {
    Tensor y(x.c, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c) {
        const float* src = x.chan(c);
        float* dst = y.chan(c);
        for (int iy = 0; iy < x.h; ++iy)
            for (int ix = 0; ix < x.w; ++ix) {
                const float v = src[size_t(iy) * x.w + ix];
                float* p = dst + size_t(2 * iy) * y.w + 2 * ix;
                p[0] = v;
                p[1] = v;
                p[y.w] = v;
                p[y.w + 1] = v;
            }
    }
    return y;
}

Tensor upsample2_back(const Tensor& g) {
    Tensor out(g.c, g.h / 2, g.w / 2);
    for (int c = 0; c < g.c; ++c) {
        const float* src = g.chan(c);
        float* dst = out.chan(c);
        for (int iy = 0; iy < out.h; ++iy)
            for (int ix = 0; ix < out.w; ++ix) {
                const float* p = src + size_t(2 * iy) * g.w + 2 * ix;
                dst[size_t(iy) * out.w + ix] = p[0] + p[1] + p[g.w] + p[g.w + 1];
            }
    }
    return out;
}

Tensor concat_c(const Tensor& a, const Tensor& b) {
    Tensor y(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), y.v.begin());
    std::copy(b.v.begin(), b.v.end(), y.v.begin() + a.v.size());
    return y;
}

void split_c(const Tensor& g, int ca, Tensor& ga, Tensor& gb) {
    ga = Tensor(ca, g.h, g.w);
    gb = Tensor(g.c - ca, g.h, g.w);
    std::copy(g.v.begin(), g.v.begin() + ga.v.size(), ga.v.begin());
    std::copy(g.v.begin() + ga.v.size(), g.v.end(), gb.v.begin());
}

namespace {

void add_inplace(Tensor& a, const Tensor& b) {
    for (size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// RecurrentConv / RRBlock
// ---------------------------------------------------------------------------

RecurrentConv::RecurrentConv(ParamStore& ps, const std::string& name, int ch, int steps,
                             uint64_t seed)
    : conv_(ps, name, ch, ch, 3, 1, 1, seed), steps_(steps) {}

Tensor RecurrentConv::forward(const ParamStore& ps, const Tensor& x, Ctx& ctx) const {
    ctx.conv.resize(steps_);
    ctx.pre.resize(steps_);
    ctx.pre[0] = conv_.forward(ps, x, ctx.conv[0]);
    Tensor h = lrelu(ctx.pre[0]);
    for (int s = 1; s < steps_; ++s) {
        Tensor sum = x;
        add_inplace(sum, h);
        ctx.pre[s] = conv_.forward(ps, sum, ctx.conv[s]);
        h = lrelu(ctx.pre[s]);
    }
    return h;
}

Tensor RecurrentConv::backward(const ParamStore& ps, const Tensor& gout, const Ctx& ctx,
                               GradBuf& gb) const {
    Tensor gh = gout;
    Tensor gx;
    for (int s = steps_ - 1; s >= 1; --s) {
        Tensor gp = lrelu_back(gh, ctx.pre[s]);
        Tensor gs = conv_.backward(ps, gp, ctx.conv[s], gb);
        if (gx.v.empty())
            gx = gs;
        else
            add_inplace(gx, gs);
        gh = std::move(gs);
    }
    Tensor gp = lrelu_back(gh, ctx.pre[0]);
    Tensor gs = conv_.backward(ps, gp, ctx.conv[0], gb);
    if (gx.v.empty()) return gs;
    add_inplace(gx, gs);
    return gx;
}

RRBlock::RRBlock(ParamStore& ps, const std::string& name, int cin, int cout, int steps,
                 uint64_t seed)
    : match_(ps, name + ".match", cin, cout, 1, 1, 0, mix_seed(seed, 1)),
      rc1_(ps, name + ".rc1", cout, steps, mix_seed(seed, 2)),
      rc2_(ps, name + ".rc2", cout, steps, mix_seed(seed, 3)) {}

Tensor RRBlock::forward(const ParamStore& ps, const Tensor& x, Ctx& ctx) const {
    ctx.m = match_.forward(ps, x, ctx.match);
    ctx.r1_out = rc1_.forward(ps, ctx.m, ctx.rc1);
    Tensor r2 = rc2_.forward(ps, ctx.r1_out, ctx.rc2);
    add_inplace(r2, ctx.m);
    return r2;
}

Tensor RRBlock::backward(const ParamStore& ps, const Tensor& gout, const Ctx& ctx,
                         GradBuf& gb) const {
    Tensor g1 = rc2_.backward(ps, gout, ctx.rc2, gb);
    Tensor gm = rc1_.backward(ps, g1, ctx.rc1, gb);
    add_inplace(gm, gout);   // residual path
    return match_.backward(ps, gm, ctx.match, gb);
}

// ---------------------------------------------------------------------------
// UNetCore
// ---------------------------------------------------------------------------

namespace {

int level_ch(const UNetSpec& s, int i) { return s.base << i; }

}  // namespace

UNetCore::UNetCore(ParamStore& ps, const std::string& prefix, const UNetSpec& spec,
                   uint64_t seed)
    : spec_(spec) {
    const int d = spec.depth;
    for (int i = 0; i < d; ++i) {
        const int cin = (i == 0) ? spec.in_ch : level_ch(spec, i - 1);
        enc_.emplace_back(ps, prefix + ".enc" + std::to_string(i), cin, level_ch(spec, i),
                          spec.steps, mix_seed(seed, 10 + uint64_t(i)));
    }
    for (int j = 0; j < d - 1; ++j) {
        const int level = d - 2 - j;
        const int up_ch = (j == 0) ? level_ch(spec, d - 1) : level_ch(spec, level + 1);
        dec_.emplace_back(ps, prefix + ".dec" + std::to_string(level),
                          up_ch + level_ch(spec, level), level_ch(spec, level), spec.steps,
                          mix_seed(seed, 100 + uint64_t(j)));
    }
    tail_ = Conv2d(ps, prefix + ".tail", level_ch(spec, 0), spec.out_ch, 1, 1, 0,
                   mix_seed(seed, 200));
}

Tensor UNetCore::forward(const ParamStore& ps, const Tensor& x, Ctx& ctx) const {
    const int d = spec_.depth;
    ctx.enc.resize(d);
    ctx.enc_out.resize(d);
    ctx.pooled.resize(d - 1);
    ctx.dec.resize(d - 1);
    ctx.dec_up.resize(d - 1);
    ctx.dec_cat.resize(d - 1);

    Tensor cur = x;
    for (int i = 0; i < d; ++i) {
        ctx.enc_out[i] = enc_[i].forward(ps, cur, ctx.enc[i]);
        if (i < d - 1) {
            ctx.pooled[i] = avgpool2(ctx.enc_out[i]);
            cur = ctx.pooled[i];
        }
    }

    cur = ctx.enc_out[d - 1];
    for (int j = 0; j < d - 1; ++j) {
        const int level = d - 2 - j;
        ctx.dec_up[j] = upsample2(cur);
        ctx.dec_cat[j] = concat_c(ctx.dec_up[j], ctx.enc_out[level]);
        cur = dec_[j].forward(ps, ctx.dec_cat[j], ctx.dec[j]);
    }
    return tail_.forward(ps, cur, ctx.tail);
}

Tensor UNetCore::backward(const ParamStore& ps, const Tensor& gout, const Ctx& ctx,
                          GradBuf& gb) const {
    const int d = spec_.depth;
    std::vector<Tensor> gskip(d);

    Tensor g = tail_.backward(ps, gout, ctx.tail, gb);
    for (int j = d - 2; j >= 0; --j) {
        const int level = d - 2 - j;
        Tensor gcat = dec_[j].backward(ps, g, ctx.dec[j], gb);
        Tensor gup, gsk;
        split_c(gcat, ctx.dec_up[j].c, gup, gsk);
        gskip[level] = std::move(gsk);
        g = upsample2_back(gup);
    }

    // g now holds the gradient at the bottleneck output.
    for (int i = d - 1; i >= 1; --i) {
        if (i < d - 1) {
            // enc_out[i] fed both the pool chain and a skip.
            add_inplace(g, gskip[i]);
        }
        Tensor gp = enc_[i].backward(ps, g, ctx.enc[i], gb);
        g = avgpool2_back(gp, ctx.enc_out[i - 1].h, ctx.enc_out[i - 1].w);
    }
    add_inplace(g, gskip[0]);
    return enc_[0].backward(ps, g, ctx.enc[0], gb);
}

// ---------------------------------------------------------------------------
// DualUNet
// ---------------------------------------------------------------------------

DualUNet::DualUNet(ParamStore& ps, const std::string& prefix, const UNetSpec& spec,
                   uint64_t seed)
    : spec_(spec) {
    const int d = spec.depth;
    for (int i = 0; i < d; ++i) {
        const int cin = (i == 0) ? spec.in_ch : level_ch(spec, i - 1);
        enc_a_.emplace_back(ps, prefix + ".enc_a" + std::to_string(i), cin, level_ch(spec, i),
                            spec.steps, mix_seed(seed, 10 + uint64_t(i)));
        enc_b_.emplace_back(ps, prefix + ".enc_b" + std::to_string(i), cin, level_ch(spec, i),
                            spec.steps, mix_seed(seed, 40 + uint64_t(i)));
    }
    const int bot_ch = 2 * level_ch(spec, d - 1);
    for (int j = 0; j < d - 1; ++j) {
        const int level = d - 2 - j;
        const int up_ch = (j == 0) ? bot_ch : level_ch(spec, level + 1);
        dec_a_.emplace_back(ps, prefix + ".dec_a" + std::to_string(level),
                            up_ch + level_ch(spec, level), level_ch(spec, level), spec.steps,
                            mix_seed(seed, 100 + uint64_t(j)));
        dec_b_.emplace_back(ps, prefix + ".dec_b" + std::to_string(level),
                            up_ch + level_ch(spec, level), level_ch(spec, level), spec.steps,
                            mix_seed(seed, 140 + uint64_t(j)));
    }
    tail_a_ = Conv2d(ps, prefix + ".tail_a", level_ch(spec, 0), 1, 1, 1, 0, mix_seed(seed, 200));
    tail_b_ = Conv2d(ps, prefix + ".tail_b", level_ch(spec, 0), 1, 1, 1, 0, mix_seed(seed, 201));
}

void DualUNet::forward(const ParamStore& ps, const Tensor& xa, const Tensor& xb, Ctx& ctx,
                       Tensor& out_a, Tensor& out_b) const {
    const int d = spec_.depth;
    ctx.enc_a.resize(d);
    ctx.enc_b.resize(d);
    ctx.enc_a_out.resize(d);
    ctx.enc_b_out.resize(d);
    ctx.pooled_a.resize(d - 1);
    ctx.pooled_b.resize(d - 1);
    ctx.dec_a.resize(d - 1);
    ctx.dec_b.resize(d - 1);
    ctx.up_a.resize(d - 1);
    ctx.up_b.resize(d - 1);
    ctx.cat_a.resize(d - 1);
    ctx.cat_b.resize(d - 1);

    Tensor cur = xa;
    for (int i = 0; i < d; ++i) {
        ctx.enc_a_out[i] = enc_a_[i].forward(ps, cur, ctx.enc_a[i]);
        if (i < d - 1) {
            ctx.pooled_a[i] = avgpool2(ctx.enc_a_out[i]);
            cur = ctx.pooled_a[i];
        }
    }
    cur = xb;
    for (int i = 0; i < d; ++i) {
        ctx.enc_b_out[i] = enc_b_[i].forward(ps, cur, ctx.enc_b[i]);
        if (i < d - 1) {
            ctx.pooled_b[i] = avgpool2(ctx.enc_b_out[i]);
            cur = ctx.pooled_b[i];
        }
    }
    ctx.bottleneck = concat_c(ctx.enc_a_out[d - 1], ctx.enc_b_out[d - 1]);

    auto run_decoder = [&](const std::vector<RRBlock>& dec, std::vector<RRBlock::Ctx>& dctx,
                           std::vector<Tensor>& up, std::vector<Tensor>& cat,
                           const std::vector<Tensor>& skips, const Conv2d& tail,
                           Conv2d::Ctx& tail_ctx) {
        Tensor curd = ctx.bottleneck;
        for (int j = 0; j < d - 1; ++j) {
            const int level = d - 2 - j;
            up[j] = upsample2(curd);
            cat[j] = concat_c(up[j], skips[level]);
            curd = dec[j].forward(ps, cat[j], dctx[j]);
        }
        return tail.forward(ps, curd, tail_ctx);
    };
    out_a = run_decoder(dec_a_, ctx.dec_a, ctx.up_a, ctx.cat_a, ctx.enc_a_out, tail_a_,
                        ctx.tail_a);
    out_b = run_decoder(dec_b_, ctx.dec_b, ctx.up_b, ctx.cat_b, ctx.enc_b_out, tail_b_,
                        ctx.tail_b);
}

void DualUNet::backward(const ParamStore& ps, const Tensor& ga, const Tensor& gb_out,
                        const Ctx& ctx, GradBuf& gb) const {
    const int d = spec_.depth;
    std::vector<Tensor> gskip_a(d), gskip_b(d);
    Tensor gbot;   // accumulated bottleneck gradient (concatenated layout)

    auto back_decoder = [&](const std::vector<RRBlock>& dec,
                            const std::vector<RRBlock::Ctx>& dctx,
                            const std::vector<Tensor>& up, const Conv2d& tail,
                            const Conv2d::Ctx& tail_ctx, const Tensor& gout,
                            std::vector<Tensor>& gskip) {
        Tensor g = tail.backward(ps, gout, tail_ctx, gb);
        for (int j = d - 2; j >= 0; --j) {
            const int level = d - 2 - j;
            Tensor gcat = dec[j].backward(ps, g, dctx[j], gb);
            Tensor gup, gsk;
            split_c(gcat, up[j].c, gup, gsk);
            if (gskip[level].v.empty())
                gskip[level] = std::move(gsk);
            else
                add_inplace(gskip[level], gsk);
            g = upsample2_back(gup);
        }
        if (gbot.v.empty())
            gbot = std::move(g);
        else
            add_inplace(gbot, g);
    };
    back_decoder(dec_a_, ctx.dec_a, ctx.up_a, tail_a_, ctx.tail_a, ga, gskip_a);
    back_decoder(dec_b_, ctx.dec_b, ctx.up_b, tail_b_, ctx.tail_b, gb_out, gskip_b);

    const int half = ctx.enc_a_out[d - 1].c;
    Tensor gbot_a, gbot_b;
    split_c(gbot, half, gbot_a, gbot_b);

    auto back_encoder = [&](const std::vector<RRBlock>& enc,
                            const std::vector<RRBlock::Ctx>& ectx,
                            const std::vector<Tensor>& enc_out, Tensor g,
                            std::vector<Tensor>& gskip) {
        for (int i = d - 1; i >= 1; --i) {
            if (i < d - 1) add_inplace(g, gskip[i]);
            Tensor gp = enc[i].backward(ps, g, ectx[i], gb);
            g = avgpool2_back(gp, enc_out[i - 1].h, enc_out[i - 1].w);
        }
        add_inplace(g, gskip[0]);
        enc[0].backward(ps, g, ectx[0], gb);
    };
    back_encoder(enc_a_, ctx.enc_a, ctx.enc_a_out, std::move(gbot_a), gskip_a);
    back_encoder(enc_b_, ctx.enc_b, ctx.enc_b_out, std::move(gbot_b), gskip_b);
}

// ---------------------------------------------------------------------------
// PatchDisc
// ---------------------------------------------------------------------------

PatchDisc::PatchDisc(ParamStore& ps, const std::string& prefix, int in_ch, int base,
                     uint64_t seed)
    : c1_(ps, prefix + ".c1", in_ch, base, 2, 2, 0, mix_seed(seed, 1)),
      c2_(ps, prefix + ".c2", base, base * 2, 2, 2, 0, mix_seed(seed, 2)),
      c3_(ps, prefix + ".c3", base * 2, base * 4, 2, 2, 0, mix_seed(seed, 3)),
      c4_(ps, prefix + ".c4", base * 4, 1, 2, 2, 0, mix_seed(seed, 4)) {}

Tensor PatchDisc::forward(const ParamStore& ps, const Tensor& x, Ctx& ctx) const {
    ctx.p1 = c1_.forward(ps, x, ctx.c1);
    Tensor h = lrelu(ctx.p1);
    ctx.p2 = c2_.forward(ps, h, ctx.c2);
    h = lrelu(ctx.p2);
    ctx.p3 = c3_.forward(ps, h, ctx.c3);
    h = lrelu(ctx.p3);
    return c4_.forward(ps, h, ctx.c4);
}

Tensor PatchDisc::backward(const ParamStore& ps, const Tensor& gout, const Ctx& ctx,
                           GradBuf& gb) const {
    Tensor g = c4_.backward(ps, gout, ctx.c4, gb);
    g = lrelu_back(g, ctx.p3);
    g = c3_.backward(ps, g, ctx.c3, gb);
    g = lrelu_back(g, ctx.p2);
    g = c2_.backward(ps, g, ctx.c2, gb);
    g = lrelu_back(g, ctx.p1);
    return c1_.backward(ps, g, ctx.c1, gb);
}

// ---------------------------------------------------------------------------
// Adam, threading, shuffling
// ---------------------------------------------------------------------------

void Adam::step(AVec& value, const GradBuf& grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        m_[i] = float(beta1_ * m_[i] + (1.0 - beta1_) * g);
        v_[i] = float(beta2_ * v_[i] + (1.0 - beta2_) * g * g);
        const double mh = m_[i] / bc1;
        const double vh = v_[i] / bc2;
        value[i] -= float(lr_ * mh / (std::sqrt(vh) + eps_));
    }
}

void parallel_for(int n, int threads, const std::function<void(int, int)>& fn) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::exception_ptr err;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int tid = 0; tid < threads; ++tid) {
        pool.emplace_back([&, tid]() {
            try {
                for (int i = tid; i < n; i += threads) fn(i, tid);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : int(hw);
}

void shuffle_indices(std::vector<int>& idx, uint64_t seed) {
    std::mt19937_64 gen(seed);
    for (size_t i = idx.size(); i > 1; --i) {
        const size_t j = size_t(gen() % i);
        std::swap(idx[i - 1], idx[j]);
    }
}

}  // namespace mvms::nn
