#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sems/common.hpp"
#include "sems/config.hpp"
#include "sems/grid.hpp"
#include "sems/pattern.hpp"
#include "sems/rng.hpp"
#include "sems/tensor.hpp"

namespace sems {

struct TemperatureSchedule {
    double init = 1.0;
    double decay_per_epoch = 0.97;
    double min = 0.1;

    double at_epoch(int epoch) const {
        double t = init;
        for (int e = 0; e < epoch; ++e) t = std::max(min, t * decay_per_epoch);
        return t;
    }
};

/// Learnable per-head score matrices over the TF grid. Head r's scores live
/// in row r of a single [N_p, N, M] leaf tensor.
struct SelectorParams {
    Tensor scores;  // [N_p, N, M]
    int n_pilots = 0;
    int n_slots = 0;
    int n_subcarriers = 0;
    TemperatureSchedule schedule;

    int grid_cells() const { return n_slots * n_subcarriers; }
};

/// Row r of a [R, ...] leaf as a flat [cells] tensor (scatter on backward).
inline Tensor slice_head(const Tensor& scores, int head, int cells) {
    require(head >= 0 && head * cells < static_cast<int>(scores.size()),
            "slice_head: head out of range");
    std::vector<double> out(scores.values().begin() + static_cast<size_t>(head) * cells,
                            scores.values().begin() + static_cast<size_t>(head + 1) * cells);
    return ad::make_op({cells}, std::move(out), {scores.node()}, [head, cells](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        double* gp = p.grad.data() + static_cast<size_t>(head) * cells;
        for (int i = 0; i < cells; ++i) gp[i] += self.grad[i];
    });
}

inline SelectorParams init_selector(int n_pilots, const FrameConfig& cfg,
                                    const TemperatureSchedule& schedule, uint64_t seed) {
    require(n_pilots >= 1, "init_selector: need at least one pilot");
    require(n_pilots <= cfg.grid_cells(), "init_selector: pilot budget exceeds grid");
    SelectorParams params;
    params.n_pilots = n_pilots;
    params.n_slots = cfg.n_slots();
    params.n_subcarriers = cfg.n_subcarriers();
    params.schedule = schedule;
    Rng rng(seed);
    params.scores = Tensor::gaussian({n_pilots, cfg.n_slots(), cfg.n_subcarriers()},
                                     std::sqrt(0.01), rng);
    return params;
}

/// One relaxed mask per head at the given temperature; soft masks each sum
/// to 1, hard indices are the per-head argmax of the perturbed scores.
inline std::vector<GumbelSample> soft_masks(const SelectorParams& params, double temperature,
                                            uint64_t rng_seed) {
    const int cells = params.grid_cells();
    std::vector<GumbelSample> heads;
    heads.reserve(params.n_pilots);
    uint64_t chain = rng_seed;
    for (int r = 0; r < params.n_pilots; ++r) {
        uint64_t head_seed = splitmix64(chain);
        heads.push_back(gumbel_softmax_st(slice_head(params.scores, r, cells), temperature, head_seed));
    }
    return heads;
}

/// Resolves head collisions: scanning in head order, a head whose preferred
/// cell is already claimed takes its own next-highest-scoring unclaimed cell.
/// Equal scores break toward the lowest flat index, so all-equal scores give
/// the first n_heads cells in row-major order.
inline std::vector<int> combine_masks(const std::vector<const std::vector<double>*>& head_scores,
                                      int cells) {
    std::vector<uint8_t> claimed(cells, 0);
    std::vector<int> assigned;
    assigned.reserve(head_scores.size());
    require(static_cast<int>(head_scores.size()) <= cells,
            "combine_masks: more heads than grid cells");
    for (const auto* scores : head_scores) {
        require(static_cast<int>(scores->size()) == cells, "combine_masks: score size mismatch");
        int best = -1;
        for (int i = 0; i < cells; ++i) {
            if (claimed[i]) continue;
            if (best < 0 || (*scores)[i] > (*scores)[best]) best = i;
        }
        claimed[best] = 1;
        assigned.push_back(best);
    }
    return assigned;
}

inline PilotPattern pattern_from_flat(const std::vector<int>& flat_cells, int n_slots,
                                      int n_subcarriers) {
    std::vector<std::pair<int, int>> cells;
    cells.reserve(flat_cells.size());
    for (int idx : flat_cells) cells.emplace_back(idx / n_subcarriers, idx % n_subcarriers);
    return PilotPattern(n_slots, n_subcarriers, std::move(cells));
}

/// Training-time selector forward: one Gumbel draw per head, collisions
/// resolved on the perturbed scores, and the combined mask assembled from
/// straight-through one-hots so exactly n_pilots cells are active while
/// gradients flow through the soft masks.
struct SelectorForward {
    Tensor mask;  // flat [N*M], forward values in {0,1} with sum == n_pilots
    PilotPattern pattern;
};

inline SelectorForward selector_forward(const SelectorParams& params, double temperature,
                                        uint64_t rng_seed) {
    const int cells = params.grid_cells();
    std::vector<GumbelSample> heads = soft_masks(params, temperature, rng_seed);
    std::vector<const std::vector<double>*> scores;
    scores.reserve(heads.size());
    for (const auto& h : heads) scores.push_back(&h.perturbed);
    std::vector<int> assigned = combine_masks(scores, cells);

    std::vector<Tensor> hard_heads;
    hard_heads.reserve(heads.size());
    for (size_t r = 0; r < heads.size(); ++r) {
        std::vector<double> onehot(cells, 0.0);
        onehot[assigned[r]] = 1.0;
        hard_heads.push_back(straight_through(heads[r].soft, std::move(onehot)));
    }
    SelectorForward fwd;
    fwd.mask = add_n(hard_heads);
    fwd.pattern = pattern_from_flat(assigned, params.n_slots, params.n_subcarriers);
    return fwd;
}

/// Soft-blended mask (sum of the per-head soft masks, no straight-through);
/// used by finite-difference checks of the selector gradient path.
inline Tensor selector_soft_mask(const SelectorParams& params, double temperature,
                                 uint64_t rng_seed) {
    std::vector<GumbelSample> heads = soft_masks(params, temperature, rng_seed);
    std::vector<Tensor> softs;
    softs.reserve(heads.size());
    for (const auto& h : heads) softs.push_back(h.soft);
    return add_n(softs);
}

/// Noise-free argmax per head followed by collision resolution; deterministic.
inline PilotPattern export_pattern(const SelectorParams& params) {
    const int cells = params.grid_cells();
    std::vector<std::vector<double>> raw(params.n_pilots);
    std::vector<const std::vector<double>*> scores;
    for (int r = 0; r < params.n_pilots; ++r) {
        raw[r].assign(params.scores.values().begin() + static_cast<size_t>(r) * cells,
                      params.scores.values().begin() + static_cast<size_t>(r + 1) * cells);
        scores.push_back(&raw[r]);
    }
    std::vector<int> assigned = combine_masks(scores, cells);
    return pattern_from_flat(assigned, params.n_slots, params.n_subcarriers);
}

/// X_s = sqrt(E_p) s_p at pilot cells and sqrt(E_d) x_data elsewhere.
inline TFGrid multiplex(const PilotPattern& pattern, const TFGrid& x_data, const FrameConfig& cfg) {
    require(pattern.n_slots() == x_data.n_slots() && pattern.n_subcarriers() == x_data.n_subcarriers(),
            "multiplex: pattern/grid shape mismatch");
    TFGrid x_s(x_data.n_slots(), x_data.n_subcarriers());
    const cplx pilot_value = std::sqrt(cfg.pilot_energy()) * cfg.pilot_symbol();
    const double data_scale = std::sqrt(cfg.data_energy());
    for (int n = 0; n < x_data.n_slots(); ++n)
        for (int m = 0; m < x_data.n_subcarriers(); ++m)
            x_s.at(n, m) = pattern.is_pilot(n, m) ? pilot_value : data_scale * x_data.at(n, m);
    return x_s;
}

/// Unit-power QPSK filler for the data cells; never decoded.
inline TFGrid random_qpsk(int n_slots, int n_subcarriers, uint64_t seed) {
    static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    TFGrid x(n_slots, n_subcarriers);
    Rng rng(seed);
    for (size_t i = 0; i < x.size(); ++i) {
        uint64_t bits = rng.next_u64();
        double re = (bits & 1) ? inv_sqrt2 : -inv_sqrt2;
        double im = (bits & 2) ? inv_sqrt2 : -inv_sqrt2;
        x.data()[i] = {re, im};
    }
    return x;
}

}  // namespace sems
