#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sems/common.hpp"
#include "sems/config.hpp"
#include "sems/grid.hpp"
#include "sems/pattern.hpp"
#include "sems/tensor.hpp"

namespace sems {

inline constexpr int kHiddenChannels = 8;
inline constexpr int kLatentDim = 16;
inline constexpr int kResidualBlocks = 2;
inline constexpr int kConvKernel = 3;
inline constexpr int kRegressorFeatures = 4;

struct NamedParam {
    std::string name;
    Tensor tensor;
};

// ---------------------------------------------------------------------------
// Receiver input assembly
// ---------------------------------------------------------------------------

/// Pilot-normalized receiver input: h~ = Y / s_p at pilot cells, 0 elsewhere,
/// stacked as [2, N, M] with channel 0 = real part, channel 1 = imaginary.
inline std::vector<double> normalize_pilots(const TFGrid& y, const PilotPattern& pattern,
                                            cplx pilot_symbol) {
    require(std::abs(pilot_symbol) > 0.0, "normalize_pilots: pilot symbol must be nonzero");
    require(pattern.n_slots() == y.n_slots() && pattern.n_subcarriers() == y.n_subcarriers(),
            "normalize_pilots: shape mismatch");
    const int n = y.n_slots(), m = y.n_subcarriers();
    const size_t plane = static_cast<size_t>(n) * m;
    std::vector<double> t(2 * plane, 0.0);
    const cplx inv = cplx(1.0, 0.0) / pilot_symbol;
    for (int slot = 0; slot < n; ++slot)
        for (int sub = 0; sub < m; ++sub) {
            if (!pattern.is_pilot(slot, sub)) continue;
            cplx h = y.at(slot, sub) * inv;
            size_t idx = static_cast<size_t>(slot) * m + sub;
            t[idx] = h.real();
            t[plane + idx] = h.imag();
        }
    return t;
}

/// Full channel as a [2, N, M] real stack (perfect-CSI input, no masking).
inline std::vector<double> grid_to_stacked(const TFGrid& h) {
    const size_t plane = h.size();
    std::vector<double> t(2 * plane);
    for (size_t i = 0; i < plane; ++i) {
        t[i] = h.data()[i].real();
        t[plane + i] = h.data()[i].imag();
    }
    return t;
}

// ---------------------------------------------------------------------------
// Classification branch
// ---------------------------------------------------------------------------

/// Residual 2-D CNN backbone -> 16-dim latent -> C-way softmax head.
/// Each block: conv(2 -> 8, 3x3), relu, conv(8 -> 2, 3x3), additive skip, relu.
struct ClassifierParams {
    struct Block {
        Tensor k1, b1;  // [8,2,3,3], [8]
        Tensor k2, b2;  // [2,8,3,3], [2]
    };
    std::vector<Block> blocks;
    Tensor w_proj, b_proj;  // [2*N*M, 16], [16]
    Tensor w_head, b_head;  // [16, C], [C]
    int n_slots = 0, n_subcarriers = 0;

    static ClassifierParams init(const FrameConfig& cfg, uint64_t seed) {
        Rng rng(seed);
        ClassifierParams p;
        p.n_slots = cfg.n_slots();
        p.n_subcarriers = cfg.n_subcarriers();
        for (int b = 0; b < kResidualBlocks; ++b) {
            Block blk;
            blk.k1 = Tensor::gaussian({kHiddenChannels, 2, kConvKernel, kConvKernel},
                                      std::sqrt(2.0 / (2 * kConvKernel * kConvKernel)), rng);
            blk.b1 = Tensor::zeros({kHiddenChannels});
            blk.k2 = Tensor::gaussian({2, kHiddenChannels, kConvKernel, kConvKernel},
                                      std::sqrt(2.0 / (kHiddenChannels * kConvKernel * kConvKernel)), rng);
            blk.b2 = Tensor::zeros({2});
            p.blocks.push_back(blk);
        }
        const int flat = 2 * cfg.grid_cells();
        p.w_proj = Tensor::gaussian({flat, kLatentDim}, std::sqrt(2.0 / flat), rng);
        p.b_proj = Tensor::zeros({kLatentDim});
        p.w_head = Tensor::gaussian({kLatentDim, kNumClasses}, std::sqrt(2.0 / kLatentDim), rng);
        p.b_head = Tensor::zeros({kNumClasses});
        return p;
    }

    std::vector<NamedParam> named() const {
        std::vector<NamedParam> out;
        for (size_t b = 0; b < blocks.size(); ++b) {
            std::string base = "classifier.block" + std::to_string(b) + ".";
            out.push_back({base + "k1", blocks[b].k1});
            out.push_back({base + "b1", blocks[b].b1});
            out.push_back({base + "k2", blocks[b].k2});
            out.push_back({base + "b2", blocks[b].b2});
        }
        out.push_back({"classifier.w_proj", w_proj});
        out.push_back({"classifier.b_proj", b_proj});
        out.push_back({"classifier.w_head", w_head});
        out.push_back({"classifier.b_head", b_head});
        return out;
    }
};

struct ClassifierOutput {
    Tensor probs;   // [C], on the simplex
    Tensor latent;  // [16]
};

inline ClassifierOutput classify(const Tensor& t_in, const ClassifierParams& params) {
    require(t_in.shape() == std::vector<int>{2, params.n_slots, params.n_subcarriers},
            "classify: input shape mismatch");
    Tensor x = t_in;
    for (const auto& blk : params.blocks) {
        Tensor h = relu(bias_channels(conv2d(x, blk.k1), blk.b1));
        Tensor h2 = bias_channels(conv2d(h, blk.k2), blk.b2);
        x = relu(add(x, h2));
    }
    Tensor flat = reshape(x, {2 * params.n_slots * params.n_subcarriers});
    ClassifierOutput out;
    out.latent = relu(dense(flat, params.w_proj, params.b_proj));
    out.probs = softmax(dense(out.latent, params.w_head, params.b_head));
    return out;
}

// ---------------------------------------------------------------------------
// Delay dictionary
// ---------------------------------------------------------------------------

/// Steering dictionary over a uniform delay grid: D[m][q] = exp(-j2 pi m df tau_q).
/// Stored column-major (per grid point) for fast correlation.
class DelayDictionary {
public:
    DelayDictionary() = default;
    DelayDictionary(int n_subcarriers, std::vector<double> grid, double df)
        : m_(n_subcarriers), grid_(std::move(grid)), re_(grid_.size() * m_), im_(grid_.size() * m_) {
        for (size_t q = 0; q < grid_.size(); ++q)
            for (int m = 0; m < m_; ++m) {
                double phase = -kTwoPi * m * df * grid_[q];
                re_[q * m_ + m] = std::cos(phase);
                im_[q * m_ + m] = std::sin(phase);
            }
    }

    int n_subcarriers() const { return m_; }
    int n_grid() const { return static_cast<int>(grid_.size()); }
    const std::vector<double>& grid() const { return grid_; }
    double grid_spacing() const { return grid_[1] - grid_[0]; }
    cplx at(int m, int q) const { return {re_[static_cast<size_t>(q) * m_ + m], im_[static_cast<size_t>(q) * m_ + m]}; }
    const double* col_re(int q) const { return re_.data() + static_cast<size_t>(q) * m_; }
    const double* col_im(int q) const { return im_.data() + static_cast<size_t>(q) * m_; }

    /// Column q restricted to a subcarrier subset.
    std::vector<cplx> steering(int q, const std::vector<int>& subcarriers) const {
        std::vector<cplx> a(subcarriers.size());
        for (size_t i = 0; i < subcarriers.size(); ++i) a[i] = at(subcarriers[i], q);
        return a;
    }

private:
    int m_ = 0;
    std::vector<double> grid_;
    std::vector<double> re_, im_;  // q-major [Q][M]
};

inline DelayDictionary build_delay_dictionary(const FrameConfig& cfg, int n_grid, double tau_max) {
    require(n_grid >= 2, "delay dictionary: need at least two grid points");
    require(tau_max > 0.0 && tau_max < cfg.delay_support_s(),
            "delay dictionary: tau_max outside unambiguous support");
    std::vector<double> grid(n_grid);
    for (int q = 0; q < n_grid; ++q) grid[q] = q * tau_max / (n_grid - 1);
    return DelayDictionary(cfg.n_subcarriers(), std::move(grid), cfg.subcarrier_spacing_hz);
}

// ---------------------------------------------------------------------------
// Regression branch
// ---------------------------------------------------------------------------

/// Slot-axis linear projection: 4 real weight rows applied to the
/// complexified pilot tensor give 4 complex feature rows of length M,
/// returned as [8, M] with rows (2i, 2i+1) = (Re c_i, Im c_i).
inline Tensor time_projection(const Tensor& t_in, const Tensor& w) {
    require(t_in.shape().size() == 3 && t_in.shape()[0] == 2, "time_projection: input must be [2,N,M]");
    const int n = t_in.shape()[1], m = t_in.shape()[2];
    require(w.shape() == std::vector<int>{kRegressorFeatures, n}, "time_projection: weight shape mismatch");
    const size_t plane = static_cast<size_t>(n) * m;

    std::vector<double> out(static_cast<size_t>(2 * kRegressorFeatures) * m, 0.0);
    const double* t0 = t_in.values().data();
    const double* t1 = t0 + plane;
    for (int i = 0; i < kRegressorFeatures; ++i) {
        double* o_re = out.data() + static_cast<size_t>(2 * i) * m;
        double* o_im = out.data() + static_cast<size_t>(2 * i + 1) * m;
        for (int slot = 0; slot < n; ++slot) {
            const double wv = w.values()[static_cast<size_t>(i) * n + slot];
            const double* r0 = t0 + static_cast<size_t>(slot) * m;
            const double* r1 = t1 + static_cast<size_t>(slot) * m;
            for (int sub = 0; sub < m; ++sub) {
                o_re[sub] += wv * r0[sub];
                o_im[sub] += wv * r1[sub];
            }
        }
    }
    return ad::make_op({2 * kRegressorFeatures, m}, std::move(out), {t_in.node(), w.node()},
                       [n, m, plane](Node& self) {
        Node& pt = *self.parents[0];
        Node& pw = *self.parents[1];
        const double* go = self.grad.data();
        if (pw.requires_grad) {
            pw.ensure_grad();
            for (int i = 0; i < kRegressorFeatures; ++i) {
                const double* g_re = go + static_cast<size_t>(2 * i) * m;
                const double* g_im = go + static_cast<size_t>(2 * i + 1) * m;
                for (int slot = 0; slot < n; ++slot) {
                    const double* r0 = pt.values.data() + static_cast<size_t>(slot) * m;
                    const double* r1 = pt.values.data() + plane + static_cast<size_t>(slot) * m;
                    double acc = 0.0;
                    for (int sub = 0; sub < m; ++sub) acc += g_re[sub] * r0[sub] + g_im[sub] * r1[sub];
                    pw.grad[static_cast<size_t>(i) * n + slot] += acc;
                }
            }
        }
        if (pt.requires_grad) {
            pt.ensure_grad();
            for (int i = 0; i < kRegressorFeatures; ++i) {
                const double* g_re = go + static_cast<size_t>(2 * i) * m;
                const double* g_im = go + static_cast<size_t>(2 * i + 1) * m;
                for (int slot = 0; slot < n; ++slot) {
                    const double wv = pw.values[static_cast<size_t>(i) * n + slot];
                    double* gr0 = pt.grad.data() + static_cast<size_t>(slot) * m;
                    double* gr1 = pt.grad.data() + plane + static_cast<size_t>(slot) * m;
                    for (int sub = 0; sub < m; ++sub) {
                        gr0[sub] += wv * g_re[sub];
                        gr1[sub] += wv * g_im[sub];
                    }
                }
            }
        }
    });
}

/// Matched filtering of the 4 complex feature rows against the dictionary:
/// out[i][q] = | sum_m c_i[m] conj(D[m][q]) |. Phase is carried through the
/// inner product and collapses only at the modulus.
inline Tensor dict_correlate_mag(const Tensor& features, const DelayDictionary& dict) {
    require(features.shape().size() == 2 && features.shape()[0] == 2 * kRegressorFeatures,
            "dict_correlate_mag: features must be [8, M]");
    const int m = features.shape()[1];
    require(m == dict.n_subcarriers(), "dict_correlate_mag: subcarrier count mismatch");
    const int nq = dict.n_grid();

    std::vector<double> out(static_cast<size_t>(kRegressorFeatures) * nq);
    std::vector<double> z_re(out.size()), z_im(out.size());
    const double* fv = features.values().data();
    for (int i = 0; i < kRegressorFeatures; ++i) {
        const double* f_re = fv + static_cast<size_t>(2 * i) * m;
        const double* f_im = fv + static_cast<size_t>(2 * i + 1) * m;
        for (int q = 0; q < nq; ++q) {
            const double* d_re = dict.col_re(q);
            const double* d_im = dict.col_im(q);
            double zr = 0.0, zi = 0.0;
            for (int sub = 0; sub < m; ++sub) {
                // c * conj(d) = (fr + j fi)(dr - j di)
                zr += f_re[sub] * d_re[sub] + f_im[sub] * d_im[sub];
                zi += f_im[sub] * d_re[sub] - f_re[sub] * d_im[sub];
            }
            size_t idx = static_cast<size_t>(i) * nq + q;
            z_re[idx] = zr;
            z_im[idx] = zi;
            out[idx] = std::sqrt(zr * zr + zi * zi);
        }
    }
    const DelayDictionary* dict_ptr = &dict;
    return ad::make_op({kRegressorFeatures, nq}, std::move(out), {features.node()},
                       [m, nq, dict_ptr, z_re = std::move(z_re), z_im = std::move(z_im)](Node& self) {
        Node& pf = *self.parents[0];
        pf.ensure_grad();
        for (int i = 0; i < kRegressorFeatures; ++i) {
            double* g_re = pf.grad.data() + static_cast<size_t>(2 * i) * m;
            double* g_im = pf.grad.data() + static_cast<size_t>(2 * i + 1) * m;
            for (int q = 0; q < nq; ++q) {
                size_t idx = static_cast<size_t>(i) * nq + q;
                const double mag = self.values[idx];
                if (mag < 1e-300) continue;
                const double u = self.grad[idx] * z_re[idx] / mag;
                const double v = self.grad[idx] * z_im[idx] / mag;
                const double* d_re = dict_ptr->col_re(q);
                const double* d_im = dict_ptr->col_im(q);
                for (int sub = 0; sub < m; ++sub) {
                    g_re[sub] += u * d_re[sub] - v * d_im[sub];
                    g_im[sub] += u * d_im[sub] + v * d_re[sub];
                }
            }
        }
    });
}

/// Differentiable expectation of grid values under softmax(z).
inline Tensor soft_argmax(const Tensor& z, const std::vector<double>& grid) {
    require(z.shape().size() == 1, "soft_argmax: scores must be 1-D");
    require(z.size() == grid.size(), "soft_argmax: score/grid length mismatch");
    return dot_const(softmax(z), grid);
}

inline double soft_argmax_value(const std::vector<double>& z, const std::vector<double>& grid) {
    require(z.size() == grid.size(), "soft_argmax: score/grid length mismatch");
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double denom = 0.0, acc = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        double e = std::exp(z[i] - mx);
        denom += e;
        acc += e * grid[i];
    }
    return acc / denom;
}

/// Correlation-driven regression decoder. One residual conv block on the
/// 4-channel correlation map, then a 1-channel head and soft-argmax over the
/// delay grid.
struct RegressorParams {
    Tensor w_proj;          // [4, N]
    Tensor k1, b1;          // [8,4,3], [8]
    Tensor k2, b2;          // [4,8,3], [4]
    Tensor k_head, b_head;  // [1,4,3], [1]
    int n_slots = 0;

    static RegressorParams init(const FrameConfig& cfg, uint64_t seed) {
        Rng rng(seed);
        RegressorParams p;
        p.n_slots = cfg.n_slots();
        p.w_proj = Tensor::gaussian({kRegressorFeatures, cfg.n_slots()},
                                    std::sqrt(1.0 / cfg.n_slots()), rng);
        p.k1 = Tensor::gaussian({kHiddenChannels, kRegressorFeatures, kConvKernel},
                                std::sqrt(2.0 / (kRegressorFeatures * kConvKernel)), rng);
        p.b1 = Tensor::zeros({kHiddenChannels});
        p.k2 = Tensor::gaussian({kRegressorFeatures, kHiddenChannels, kConvKernel},
                                std::sqrt(2.0 / (kHiddenChannels * kConvKernel)), rng);
        p.b2 = Tensor::zeros({kRegressorFeatures});
        p.k_head = Tensor::gaussian({1, kRegressorFeatures, kConvKernel},
                                    std::sqrt(2.0 / (kRegressorFeatures * kConvKernel)), rng);
        p.b_head = Tensor::zeros({1});
        return p;
    }

    std::vector<NamedParam> named() const {
        return {{"regressor.w_proj", w_proj}, {"regressor.k1", k1}, {"regressor.b1", b1},
                {"regressor.k2", k2},         {"regressor.b2", b2}, {"regressor.k_head", k_head},
                {"regressor.b_head", b_head}};
    }
};

/// Pre-conv correlation map of the pipeline; exposed for matched-filter checks.
inline Tensor delay_correlation_map(const Tensor& t_in, const RegressorParams& params,
                                    const DelayDictionary& dict) {
    return dict_correlate_mag(time_projection(t_in, params.w_proj), dict);
}

inline Tensor estimate_delay(const Tensor& t_in, const RegressorParams& params,
                             const DelayDictionary& dict) {
    Tensor corr = delay_correlation_map(t_in, params, dict);
    Tensor h = relu(bias_channels(conv1d(corr, params.k1), params.b1));
    Tensor h2 = bias_channels(conv1d(h, params.k2), params.b2);
    Tensor x = relu(add(corr, h2));
    Tensor z = reshape(bias_channels(conv1d(x, params.k_head), params.b_head), {dict.n_grid()});
    return soft_argmax(z, dict.grid());
}

/// Squared delay error with both values normalized by tau_max.
inline Tensor loss_mse(const Tensor& pred, double target, double tau_max) {
    require(pred.size() == 1, "loss_mse: prediction must be scalar");
    require(tau_max > 0.0, "loss_mse: tau_max must be positive");
    Tensor d = affine(pred, 1.0 / tau_max, -target / tau_max);
    return mul(d, d);
}

// ---------------------------------------------------------------------------
// Channel-reconstruction decoder (MSE benchmark stage 1)
// ---------------------------------------------------------------------------

/// Mirror of the classifier backbone with a 2-channel output; maps the pilot
/// tensor to a full-grid channel estimate.
struct ReconParams {
    std::vector<ClassifierParams::Block> blocks;
    int n_slots = 0, n_subcarriers = 0;

    static ReconParams init(const FrameConfig& cfg, uint64_t seed) {
        Rng rng(seed);
        ReconParams p;
        p.n_slots = cfg.n_slots();
        p.n_subcarriers = cfg.n_subcarriers();
        for (int b = 0; b < kResidualBlocks; ++b) {
            ClassifierParams::Block blk;
            blk.k1 = Tensor::gaussian({kHiddenChannels, 2, kConvKernel, kConvKernel},
                                      std::sqrt(2.0 / (2 * kConvKernel * kConvKernel)), rng);
            blk.b1 = Tensor::zeros({kHiddenChannels});
            blk.k2 = Tensor::gaussian({2, kHiddenChannels, kConvKernel, kConvKernel},
                                      std::sqrt(2.0 / (kHiddenChannels * kConvKernel * kConvKernel)), rng);
            blk.b2 = Tensor::zeros({2});
            p.blocks.push_back(blk);
        }
        return p;
    }

    std::vector<NamedParam> named() const {
        std::vector<NamedParam> out;
        for (size_t b = 0; b < blocks.size(); ++b) {
            std::string base = "recon.block" + std::to_string(b) + ".";
            out.push_back({base + "k1", blocks[b].k1});
            out.push_back({base + "b1", blocks[b].b1});
            out.push_back({base + "k2", blocks[b].k2});
            out.push_back({base + "b2", blocks[b].b2});
        }
        return out;
    }
};

/// Full-grid channel estimate as a [2, N, M] real stack.
inline Tensor reconstruct_channel(const Tensor& t_in, const ReconParams& params) {
    require(t_in.shape() == std::vector<int>{2, params.n_slots, params.n_subcarriers},
            "reconstruct_channel: input shape mismatch");
    Tensor x = t_in;
    for (size_t b = 0; b < params.blocks.size(); ++b) {
        const auto& blk = params.blocks[b];
        Tensor h = relu(bias_channels(conv2d(x, blk.k1), blk.b1));
        Tensor h2 = bias_channels(conv2d(h, blk.k2), blk.b2);
        x = b + 1 < params.blocks.size() ? relu(add(x, h2)) : add(x, h2);
    }
    return x;
}

/// Mean per-cell squared complex error between a [2,N,M] estimate and the
/// true channel.
inline Tensor loss_channel_mse(const Tensor& estimate, const TFGrid& truth) {
    require(estimate.shape() == std::vector<int>{2, truth.n_slots(), truth.n_subcarriers()},
            "loss_channel_mse: shape mismatch");
    Tensor target = Tensor::constant(estimate.shape(), grid_to_stacked(truth));
    Tensor d = sub(estimate, target);
    return affine(sum(mul(d, d)), 1.0 / static_cast<double>(truth.size()), 0.0);
}

}  // namespace sems
