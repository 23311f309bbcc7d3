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
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvms/core.hpp"

// Minimal CPU training substrate: explicit forward/backward per layer,
// im2col convolutions on Eigen GEMM, flat parameter storage so Adam,
// checkpoints and batch-parallel gradient reduction stay uniform.
namespace mvms::nn {

// All buffers that feed GEMM are pinned to one alignment; otherwise the
// vectorised kernels peel differently per heap address and reruns stop
// being bit-identical.
template <typename T, size_t Align>
struct AlignedAllocator {
    using value_type = T;

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U, Align>&) {}

    T* allocate(size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
    }
    void deallocate(T* p, size_t n) {
        ::operator delete(p, n * sizeof(T), std::align_val_t(Align));
    }
    template <class U>
    struct rebind {
        using other = AlignedAllocator<U, Align>;
    };
    bool operator==(const AlignedAllocator&) const { return true; }
    bool operator!=(const AlignedAllocator&) const { return false; }
};

using AVec = std::vector<float, AlignedAllocator<float, 64>>;

struct Tensor {
    int c = 0, h = 0, w = 0;
    AVec v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(size_t(c_) * h_ * w_, 0.f) {}

    float* chan(int i) { return v.data() + size_t(i) * h * w; }
    const float* chan(int i) const { return v.data() + size_t(i) * h * w; }
    size_t size() const { return v.size(); }
    int plane() const { return h * w; }
};

Tensor tensor_from_image(const Image& img);
Tensor tensor_from_mask(const Mask& mask);
Image image_from_channel(const Tensor& t, int c);

// All trainable values live in one flat vector; layers hold entry indices.
struct ParamStore {
    struct Entry {
        std::string name;
        std::vector<int> shape;
        size_t offset = 0, count = 0;
    };
    std::vector<Entry> entries;
    AVec value;

    size_t add(const std::string& name, std::vector<int> shape);
    float* data(size_t idx) { return value.data() + entries[idx].offset; }
    const float* data(size_t idx) const { return value.data() + entries[idx].offset; }
    size_t count(size_t idx) const { return entries[idx].count; }
};

using GradBuf = AVec;

// Checkpoint: manifest.json (layer names/shapes plus caller info) and one
// .ten tensor file per parameter entry.
void save_checkpoint(const ParamStore& ps, const std::filesystem::path& dir,
                     const nlohmann::json& info);
nlohmann::json load_checkpoint(ParamStore& ps, const std::filesystem::path& dir);
nlohmann::json peek_checkpoint_info(const std::filesystem::path& dir);

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int k, int stride,
           int pad, uint64_t seed);

    struct Ctx {
        AVec col;                 // (cin*k*k) x (hout*wout), row-major
        int hin = 0, win = 0, hout = 0, wout = 0;
    };

    Tensor forward(const ParamStore& ps, const Tensor& x, Ctx& ctx) const;
    Tensor backward(const ParamStore& ps, const Tensor& gout, const Ctx& ctx,
                    GradBuf& gb) const;

    int out_channels() const { return cout_; }

private:
    size_t w_ = 0, b_ = 0;
    int cin_ = 0, cout_ = 0, k_ = 0, stride_ = 0, pad_ = 0;
};

constexpr float kLeakySlope = 0.1f;

Tensor lrelu(const Tensor& x);
Tensor lrelu_back(const Tensor& g, const Tensor& x);
Tensor tanh_fwd(const Tensor& x);
Tensor tanh_back(const Tensor& g, const Tensor& y);
Tensor avgpool2(const Tensor& x);
Tensor avgpool2_back(const Tensor& g, int hin, int win);
Tensor upsample2(const Tensor& x);
Tensor upsample2_back(const Tensor& g);
Tensor concat_c(const Tensor& a, const Tensor& b);
void split_c(const Tensor& g, int ca, Tensor& ga, Tensor& gb);

// 3x3 convolution applied recurrently with shared weights:
// h = act(conv(x)); then h = act(conv(x + h)) for the remaining steps.
class RecurrentConv {
public:
    RecurrentConv() = default;
    RecurrentConv(ParamStore& ps, const std::string& name, int ch, int steps, uint64_t seed);

    struct Ctx {
        std::vector<Conv2d::Ctx> conv;
        std::vector<Tensor> pre;   // pre-activation per step
    };

    Tensor forward(const ParamStore& ps, const Tensor& x, Ctx& ctx) const;
    Tensor backward(const ParamStore& ps, const Tensor& gout, const Ctx& ctx,
                    GradBuf& gb) const;

private:
    Conv2d conv_;
    int steps_ = 2;
};

// Recurrent-residual unit: 1x1 channel match, two recurrent conv layers,
// residual add.
class RRBlock {
public:
    RRBlock() = default;
    RRBlock(ParamStore& ps, const std::string& name, int cin, int cout, int steps,
            uint64_t seed);

    struct Ctx {
        Conv2d::Ctx match;
        RecurrentConv::Ctx rc1, rc2;
        Tensor m, r1_out;
    };

    Tensor forward(const ParamStore& ps, const Tensor& x, Ctx& ctx) const;
    Tensor backward(const ParamStore& ps, const Tensor& gout, const Ctx& ctx,
                    GradBuf& gb) const;

private:
    Conv2d match_;
    RecurrentConv rc1_, rc2_;
};

struct UNetSpec {
    int in_ch = 1, out_ch = 1;
    int base = 32, depth = 4, steps = 2;
};

// Single-stream recurrent-residual UNet; tail output is linear.
class UNetCore {
public:
    UNetCore() = default;
    UNetCore(ParamStore& ps, const std::string& prefix, const UNetSpec& spec, uint64_t seed);

    struct Ctx {
        std::vector<RRBlock::Ctx> enc;
        std::vector<Tensor> enc_out, pooled;
        std::vector<RRBlock::Ctx> dec;
        std::vector<Tensor> dec_up, dec_cat;
        Conv2d::Ctx tail;
    };

    Tensor forward(const ParamStore& ps, const Tensor& x, Ctx& ctx) const;
    Tensor backward(const ParamStore& ps, const Tensor& gout, const Ctx& ctx,
                    GradBuf& gb) const;

    const UNetSpec& spec() const { return spec_; }

private:
    UNetSpec spec_;
    std::vector<RRBlock> enc_, dec_;
    Conv2d tail_;
};

// Dual-stream UNet for joint image/mask synthesis: independent encoders
// and decoders per domain, concatenated bottleneck, two linear tails.
class DualUNet {
public:
    DualUNet() = default;
    DualUNet(ParamStore& ps, const std::string& prefix, const UNetSpec& spec, uint64_t seed);

    struct Ctx {
        std::vector<RRBlock::Ctx> enc_a, enc_b;
        std::vector<Tensor> enc_a_out, enc_b_out, pooled_a, pooled_b;
        Tensor bottleneck;
        std::vector<RRBlock::Ctx> dec_a, dec_b;
        std::vector<Tensor> up_a, up_b, cat_a, cat_b;
        Conv2d::Ctx tail_a, tail_b;
    };

    // Both streams share spec.in_ch input channels; tails emit 1 channel.
    void forward(const ParamStore& ps, const Tensor& xa, const Tensor& xb, Ctx& ctx,
                 Tensor& out_a, Tensor& out_b) const;
    void backward(const ParamStore& ps, const Tensor& ga, const Tensor& gb_out,
                  const Ctx& ctx, GradBuf& gb) const;

    const UNetSpec& spec() const { return spec_; }

private:
    UNetSpec spec_;
    std::vector<RRBlock> enc_a_, enc_b_, dec_a_, dec_b_;
    Conv2d tail_a_, tail_b_;
};

// Patch discriminator: four stride-2 kernel-2 conv blocks, so each output
// score sees exactly one 16x16 input patch; linear scores for the
// least-squares adversarial objective.
class PatchDisc {
public:
    PatchDisc() = default;
    PatchDisc(ParamStore& ps, const std::string& prefix, int in_ch, int base, uint64_t seed);

    struct Ctx {
        Conv2d::Ctx c1, c2, c3, c4;
        Tensor p1, p2, p3;     // pre-activations
    };

    Tensor forward(const ParamStore& ps, const Tensor& x, Ctx& ctx) const;
    Tensor backward(const ParamStore& ps, const Tensor& gout, const Ctx& ctx,
                    GradBuf& gb) const;

private:
    Conv2d c1_, c2_, c3_, c4_;
};

class Adam {
public:
    Adam(size_t n, double lr) : lr_(lr), m_(n, 0.f), v_(n, 0.f) {}
    void step(AVec& value, const GradBuf& grad);
    double lr() const { return lr_; }

private:
    double lr_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    std::vector<float> m_, v_;
    long t_ = 0;
};

// Static-partition parallel for: fn(index, thread). Sample i runs on
// thread i % threads, so per-thread accumulations are reproducible.
void parallel_for(int n, int threads, const std::function<void(int, int)>& fn);

int resolve_threads(int requested);

// Deterministic in-place Fisher-Yates shuffle.
void shuffle_indices(std::vector<int>& idx, uint64_t seed);

}  // namespace mvms::nn
