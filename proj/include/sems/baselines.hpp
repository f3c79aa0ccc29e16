#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "sems/common.hpp"
#include "sems/config.hpp"
#include "sems/decoders.hpp"
#include "sems/pattern.hpp"
#include "sems/rng.hpp"

namespace sems {

enum class MusicVariant { UniformPilots, RandomPilots, OptimizedPilots };

// ---------------------------------------------------------------------------
// Doppler-feature classification (conventional pipeline)
// ---------------------------------------------------------------------------

/// Magnitude Doppler spectrum of the pilot tensor: per pilot-bearing
/// subcarrier, DFT of the complex slot sequence (zeros at missing slots),
/// magnitudes averaged over subcarriers and fft-shifted so the zero-Doppler
/// bin sits at index N/2.
inline std::vector<double> doppler_spectrum(const std::vector<double>& pilots, int n_slots,
                                            int n_subcarriers, const PilotPattern& pattern) {
    require(!pattern.empty(), "doppler_spectrum: empty pilot pattern");
    require(static_cast<int>(pilots.size()) == 2 * n_slots * n_subcarriers,
            "doppler_spectrum: pilot tensor size mismatch");
    std::vector<int> subs = pattern.pilot_subcarriers();
    bool has_series = false;
    for (int sub : subs)
        if (static_cast<int>(pattern.slots_of_subcarrier(sub).size()) >= 2) has_series = true;
    require(has_series, "doppler_spectrum: no subcarrier carries a slot series");

    const size_t plane = static_cast<size_t>(n_slots) * n_subcarriers;
    std::vector<double> spectrum(n_slots, 0.0);
    std::vector<cplx> seq(n_slots);
    for (int sub : subs) {
        for (int n = 0; n < n_slots; ++n) {
            size_t idx = static_cast<size_t>(n) * n_subcarriers + sub;
            seq[n] = {pilots[idx], pilots[plane + idx]};
        }
        for (int k = 0; k < n_slots; ++k) {
            cplx acc{0.0, 0.0};
            for (int n = 0; n < n_slots; ++n)
                acc += seq[n] * std::polar(1.0, -kTwoPi * k * n / n_slots);
            spectrum[(k + n_slots / 2) % n_slots] += std::abs(acc);
        }
    }
    for (double& v : spectrum) v /= static_cast<double>(subs.size());
    return spectrum;
}

struct DopplerFeatures {
    double mean = 0.0;
    double stddev = 0.0;
    double skewness = 0.0;
    double excess_kurtosis = 0.0;

    std::vector<double> to_vector() const { return {mean, stddev, skewness, excess_kurtosis}; }
};

/// Moments of the bin-index random variable under the spectrum normalized to
/// a probability mass. A degenerate (zero-spread) spectrum reports skewness
/// and excess kurtosis of 0 by convention.
inline DopplerFeatures stat_features(const std::vector<double>& spectrum) {
    require(!spectrum.empty(), "stat_features: empty spectrum");
    double total = 0.0;
    for (double v : spectrum) {
        require(v >= 0.0, "stat_features: spectrum must be non-negative");
        total += v;
    }
    require(total > 0.0, "stat_features: all-zero spectrum");

    DopplerFeatures f;
    for (size_t b = 0; b < spectrum.size(); ++b) f.mean += b * spectrum[b] / total;
    double var = 0.0;
    for (size_t b = 0; b < spectrum.size(); ++b) {
        double d = b - f.mean;
        var += d * d * spectrum[b] / total;
    }
    f.stddev = std::sqrt(var);
    if (f.stddev < 1e-9) return f;
    double m3 = 0.0, m4 = 0.0;
    for (size_t b = 0; b < spectrum.size(); ++b) {
        double z = (b - f.mean) / f.stddev;
        m3 += z * z * z * spectrum[b] / total;
        m4 += z * z * z * z * spectrum[b] / total;
    }
    f.skewness = m3;
    f.excess_kurtosis = m4 - 3.0;
    return f;
}

// ---------------------------------------------------------------------------
// Linear one-vs-rest SVM on the 4-dim feature vectors
// ---------------------------------------------------------------------------

struct LinearSvmModel {
    int n_classes = 0;
    int dim = 0;
    std::vector<double> feat_mean, feat_std;       // z-score standardizer
    std::vector<std::vector<double>> weights;      // per class, dim+1 with bias last

    double score(int cls, const std::vector<double>& x) const {
        double s = weights[cls][dim];
        for (int d = 0; d < dim; ++d)
            s += weights[cls][d] * (x[d] - feat_mean[d]) / feat_std[d];
        return s;
    }

    int predict(const std::vector<double>& x) const {
        int best = 0;
        double best_s = score(0, x);
        for (int c = 1; c < n_classes; ++c) {
            double s = score(c, x);
            if (s > best_s) {
                best_s = s;
                best = c;
            }
        }
        return best;
    }
};

struct SvmHyper {
    double l2 = 1e-4;
    double lr = 0.5;
    int iterations = 600;
};

/// Full-batch subgradient descent on the L2-regularized hinge loss, one
/// one-vs-rest machine per class. Full-batch keeps the decision function
/// invariant to duplicating the training set.
inline LinearSvmModel train_linear_svm(const std::vector<std::vector<double>>& features,
                                       const std::vector<int>& labels, int n_classes,
                                       const SvmHyper& hyper = {}, uint64_t seed = 0) {
    require(features.size() == labels.size() && !features.empty(), "svm: bad training data");
    std::vector<int> present(n_classes, 0);
    for (int l : labels) {
        require(l >= 0 && l < n_classes, "svm: label out of range");
        present[l] = 1;
    }
    require(std::accumulate(present.begin(), present.end(), 0) >= 2,
            "svm: need at least two classes present");
    (void)seed;  // training is deterministic; kept for interface stability

    LinearSvmModel model;
    model.n_classes = n_classes;
    model.dim = static_cast<int>(features[0].size());
    model.feat_mean.assign(model.dim, 0.0);
    model.feat_std.assign(model.dim, 0.0);
    const double n = static_cast<double>(features.size());
    for (const auto& x : features)
        for (int d = 0; d < model.dim; ++d) model.feat_mean[d] += x[d] / n;
    for (const auto& x : features)
        for (int d = 0; d < model.dim; ++d) {
            double diff = x[d] - model.feat_mean[d];
            model.feat_std[d] += diff * diff / n;
        }
    for (int d = 0; d < model.dim; ++d) model.feat_std[d] = std::max(1e-9, std::sqrt(model.feat_std[d]));

    std::vector<std::vector<double>> z(features.size(), std::vector<double>(model.dim));
    for (size_t i = 0; i < features.size(); ++i)
        for (int d = 0; d < model.dim; ++d)
            z[i][d] = (features[i][d] - model.feat_mean[d]) / model.feat_std[d];

    model.weights.assign(n_classes, std::vector<double>(model.dim + 1, 0.0));
    std::vector<double> grad(model.dim + 1);
    for (int cls = 0; cls < n_classes; ++cls) {
        auto& w = model.weights[cls];
        for (int it = 0; it < hyper.iterations; ++it) {
            std::fill(grad.begin(), grad.end(), 0.0);
            for (size_t i = 0; i < z.size(); ++i) {
                const double y = labels[i] == cls ? 1.0 : -1.0;
                double margin = w[model.dim];
                for (int d = 0; d < model.dim; ++d) margin += w[d] * z[i][d];
                if (y * margin < 1.0) {
                    for (int d = 0; d < model.dim; ++d) grad[d] -= y * z[i][d] / n;
                    grad[model.dim] -= y / n;
                }
            }
            const double lr = hyper.lr / (1.0 + 0.01 * it);
            for (int d = 0; d < model.dim; ++d)
                w[d] -= lr * (grad[d] + hyper.l2 * w[d]);
            w[model.dim] -= lr * grad[model.dim];
        }
    }
    return model;
}

// ---------------------------------------------------------------------------
// OMP delay recovery
// ---------------------------------------------------------------------------

/// Greedy sparse recovery run independently per slot carrying at least two
/// pilot subcarriers; the per-path delay is the median grid selection across
/// slots, returned strongest-first by mean residual-energy contribution.
/// residual_trace, when given, receives the per-iteration residual energies
/// of the first eligible slot.
inline std::vector<double> omp_delay(const std::vector<double>& pilots, int n_slots,
                                     int n_subcarriers, const DelayDictionary& dict,
                                     const PilotPattern& pattern, int k_paths,
                                     std::vector<double>* residual_trace = nullptr) {
    require(!pattern.empty(), "omp_delay: empty pilot pattern");
    require(k_paths >= 1, "omp_delay: k_paths must be >= 1");
    const size_t plane = static_cast<size_t>(n_slots) * n_subcarriers;
    const int nq = dict.n_grid();

    // selections[j] = grid picks for path rank j (per slot, sorted by energy)
    std::vector<std::vector<int>> selections(k_paths);
    std::vector<std::vector<double>> energies(k_paths);
    bool any_eligible_slot = false;

    for (int slot = 0; slot < n_slots; ++slot) {
        std::vector<int> subs;
        for (int sub = 0; sub < n_subcarriers; ++sub)
            if (pattern.is_pilot(slot, sub)) subs.push_back(sub);
        if (static_cast<int>(subs.size()) < std::max(2, k_paths)) continue;
        any_eligible_slot = true;

        const int rows = static_cast<int>(subs.size());
        Eigen::VectorXcd y(rows);
        for (int i = 0; i < rows; ++i) {
            size_t idx = static_cast<size_t>(slot) * n_subcarriers + subs[i];
            y(i) = cplx(pilots[idx], pilots[plane + idx]);
        }
        const double y_energy = y.squaredNorm();
        if (y_energy < 1e-24) continue;  // zero observation: no selections

        Eigen::VectorXcd residual = y;
        std::vector<int> picked;
        Eigen::MatrixXcd atoms(rows, k_paths);
        Eigen::VectorXcd coef;
        const bool trace_this_slot = residual_trace && residual_trace->empty();
        if (trace_this_slot) residual_trace->push_back(residual.squaredNorm());
        for (int it = 0; it < k_paths; ++it) {
            if (residual.squaredNorm() < 1e-20 * y_energy) break;
            int best_q = -1;
            double best_corr = -1.0;
            for (int q = 0; q < nq; ++q) {
                cplx acc{0.0, 0.0};
                const double* dre = dict.col_re(q);
                const double* dim = dict.col_im(q);
                for (int i = 0; i < rows; ++i)
                    acc += residual(i) * cplx(dre[subs[i]], -dim[subs[i]]);
                double corr = std::norm(acc);
                if (corr > best_corr + 1e-15 * best_corr) {
                    best_corr = corr;
                    best_q = q;
                }
            }
            picked.push_back(best_q);
            for (int i = 0; i < rows; ++i) atoms(i, it) = dict.at(subs[i], best_q);
            auto block = atoms.leftCols(it + 1);
            coef = block.colPivHouseholderQr().solve(y);
            residual = y - block * coef;
            if (trace_this_slot) residual_trace->push_back(residual.squaredNorm());
        }
        // rank this slot's picks by coefficient energy, strongest first
        std::vector<int> order(picked.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return std::norm(coef(a)) > std::norm(coef(b));
        });
        for (size_t j = 0; j < order.size(); ++j) {
            selections[j].push_back(picked[order[j]]);
            energies[j].push_back(std::norm(coef(order[j])));
        }
    }
    require(any_eligible_slot, "omp_delay: fewer pilot subcarriers than k_paths in every slot");

    struct PathEstimate {
        double delay;
        double energy;
    };
    std::vector<PathEstimate> paths;
    for (int j = 0; j < k_paths; ++j) {
        if (selections[j].empty()) continue;
        std::vector<int> picks = selections[j];
        size_t mid = (picks.size() - 1) / 2;  // lower median stays on the grid
        std::nth_element(picks.begin(), picks.begin() + mid, picks.end());
        double energy = std::accumulate(energies[j].begin(), energies[j].end(), 0.0) /
                        static_cast<double>(energies[j].size());
        paths.push_back({dict.grid()[picks[mid]], energy});
    }
    std::stable_sort(paths.begin(), paths.end(),
                     [](const PathEstimate& a, const PathEstimate& b) { return a.energy > b.energy; });
    std::vector<double> delays;
    delays.reserve(paths.size());
    for (const auto& p : paths) delays.push_back(p.delay);
    return delays;
}

// ---------------------------------------------------------------------------
// MUSIC delay estimation
// ---------------------------------------------------------------------------

struct MusicSnapshots {
    Eigen::MatrixXcd covariance;  // M_p x M_p sample covariance over slots
    std::vector<int> subcarriers;
};

inline MusicSnapshots music_snapshot_covariance(const std::vector<double>& pilots, int n_slots,
                                                int n_subcarriers, const PilotPattern& pattern) {
    require(!pattern.empty(), "music: empty pilot pattern");
    MusicSnapshots s;
    s.subcarriers = pattern.pilot_subcarriers();
    const int mp = static_cast<int>(s.subcarriers.size());
    std::vector<int> slots = pattern.pilot_slots();
    if (static_cast<int>(slots.size()) < 2)
        throw ValidationError("music: insufficient snapshots (need at least 2 pilot slots)");

    const size_t plane = static_cast<size_t>(n_slots) * n_subcarriers;
    s.covariance = Eigen::MatrixXcd::Zero(mp, mp);
    Eigen::VectorXcd v(mp);
    for (int slot : slots) {
        for (int i = 0; i < mp; ++i) {
            int sub = s.subcarriers[i];
            if (pattern.is_pilot(slot, sub)) {
                size_t idx = static_cast<size_t>(slot) * n_subcarriers + sub;
                v(i) = cplx(pilots[idx], pilots[plane + idx]);
            } else {
                v(i) = cplx(0.0, 0.0);
            }
        }
        s.covariance += v * v.adjoint();
    }
    s.covariance /= static_cast<double>(slots.size());
    return s;
}

/// P(tau_q) = 1 / ||E_n^H a(tau_q)||^2 with E_n the eigenvectors beyond the
/// k largest of the snapshot covariance.
inline std::vector<double> music_pseudospectrum(const Eigen::MatrixXcd& covariance, int k_paths,
                                                const DelayDictionary& dict,
                                                const std::vector<int>& subcarriers) {
    const int mp = static_cast<int>(subcarriers.size());
    require(covariance.rows() == mp && covariance.cols() == mp, "music: covariance size mismatch");
    require(k_paths >= 1 && k_paths < mp, "music: need more pilot subcarriers than sources");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(covariance);
    require(eig.info() == Eigen::Success, "music: eigendecomposition failed");
    // Eigenvalues ascend, so the noise subspace is the leading mp-k columns.
    Eigen::MatrixXcd noise = eig.eigenvectors().leftCols(mp - k_paths);

    std::vector<double> spectrum(dict.n_grid());
    Eigen::VectorXcd a(mp);
    for (int q = 0; q < dict.n_grid(); ++q) {
        for (int i = 0; i < mp; ++i) a(i) = dict.at(subcarriers[i], q);
        double denom = (noise.adjoint() * a).squaredNorm();
        spectrum[q] = 1.0 / std::max(denom, 1e-300);
    }
    return spectrum;
}

inline double music_delay(const std::vector<double>& pilots, int n_slots, int n_subcarriers,
                          const PilotPattern& pattern, int k_paths, const DelayDictionary& dict) {
    MusicSnapshots snap = music_snapshot_covariance(pilots, n_slots, n_subcarriers, pattern);
    std::vector<double> spectrum =
        music_pseudospectrum(snap.covariance, k_paths, dict, snap.subcarriers);
    size_t best = 0;
    for (size_t q = 1; q < spectrum.size(); ++q)
        if (spectrum[q] > spectrum[best]) best = q;
    return dict.grid()[best];
}

// ---------------------------------------------------------------------------
// Baseline pilot patterns
// ---------------------------------------------------------------------------

/// Positions maximizing the number of distinct pairwise differences on a
/// reduced grid of min(M, 2n) slots, scaled up to M. Exhaustive lexicographic
/// search for small orders (first maximizer wins), greedy beyond that.
inline std::vector<int> min_redundancy_subcarriers(int n_marks, int n_subcarriers) {
    require(n_marks >= 1 && n_marks <= n_subcarriers, "min_redundancy: bad mark count");
    if (n_marks == n_subcarriers) {
        std::vector<int> all(n_subcarriers);
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    const int reduced = std::min(n_subcarriers, 2 * n_marks);
    const int scale = n_subcarriers / reduced;

    auto distinct_diffs = [](const std::vector<int>& marks) {
        std::vector<uint8_t> seen(marks.back() + 1, 0);
        int count = 0;
        for (size_t i = 0; i < marks.size(); ++i)
            for (size_t j = i + 1; j < marks.size(); ++j) {
                int d = marks[j] - marks[i];
                if (!seen[d]) {
                    seen[d] = 1;
                    ++count;
                }
            }
        return count;
    };

    double combos = 1.0;
    for (int i = 0; i < n_marks; ++i) combos *= static_cast<double>(reduced - i) / (i + 1);

    std::vector<int> best;
    if (combos <= 2e6) {
        std::vector<int> marks(n_marks);
        std::iota(marks.begin(), marks.end(), 0);
        int best_count = -1;
        for (;;) {
            int c = distinct_diffs(marks);
            if (c > best_count) {
                best_count = c;
                best = marks;
            }
            // next combination in lexicographic order
            int i = n_marks - 1;
            while (i >= 0 && marks[i] == reduced - n_marks + i) --i;
            if (i < 0) break;
            ++marks[i];
            for (int j = i + 1; j < n_marks; ++j) marks[j] = marks[j - 1] + 1;
        }
    } else {
        best = {0};
        std::vector<uint8_t> taken(reduced, 0);
        taken[0] = 1;
        while (static_cast<int>(best.size()) < n_marks) {
            int pick = -1, pick_count = -1;
            for (int cand = 0; cand < reduced; ++cand) {
                if (taken[cand]) continue;
                std::vector<int> trial = best;
                trial.push_back(cand);
                std::sort(trial.begin(), trial.end());
                int c = distinct_diffs(trial);
                if (c > pick_count) {
                    pick_count = c;
                    pick = cand;
                }
            }
            taken[pick] = 1;
            best.push_back(pick);
            std::sort(best.begin(), best.end());
        }
    }
    for (int& p : best) p *= scale;
    return best;
}

namespace detail {

/// Splits a pilot budget into (subcarriers, slots) matching the grid aspect
/// ratio as closely as a divisor allows (ties toward more subcarriers).
inline std::pair<int, int> lattice_factorization(int n_pilots, int n_slots, int n_subcarriers) {
    const double target = static_cast<double>(n_subcarriers) / n_slots;
    int best_f = -1;
    double best_err = 0.0;
    for (int f = 1; f <= n_pilots; ++f) {
        if (n_pilots % f != 0) continue;
        int t = n_pilots / f;
        if (f > n_subcarriers || t > n_slots) continue;
        double err = std::abs(static_cast<double>(f) / t - target);
        if (best_f < 0 || err < best_err - 1e-12 || (std::abs(err - best_err) <= 1e-12 && f > best_f)) {
            best_f = f;
            best_err = err;
        }
    }
    require(best_f > 0, "pattern: pilot budget has no lattice factorization for this grid");
    return {best_f, n_pilots / best_f};
}

inline std::vector<int> evenly_spaced(int count, int extent) {
    std::vector<int> out(count);
    for (int i = 0; i < count; ++i) out[i] = static_cast<int>(static_cast<int64_t>(i) * extent / count);
    return out;
}

}  // namespace detail

/// Uniform: an evenly spaced lattice. Random: cells without replacement.
/// Optimized: the minimum-redundancy frequency layout replicated across the
/// lattice slots (a documented heuristic; the stand-in for "optimized"
/// patterns in the classical benchmarks). With full_slot_columns the budget
/// is laid out as complete slot columns so slot series exist for Doppler
/// processing (requires n_pilots divisible by n_slots).
inline PilotPattern make_baseline_pattern(MusicVariant variant, int n_pilots,
                                          const FrameConfig& cfg, uint64_t seed,
                                          bool full_slot_columns = false) {
    const int n = cfg.n_slots(), m = cfg.n_subcarriers();
    require(n_pilots >= 1 && n_pilots <= n * m, "pattern: pilot budget out of range");

    if (variant == MusicVariant::RandomPilots) {
        std::vector<int> flat(static_cast<size_t>(n) * m);
        std::iota(flat.begin(), flat.end(), 0);
        Rng rng(seed);
        for (int i = 0; i < n_pilots; ++i) {
            int j = i + static_cast<int>(rng.uniform_index(flat.size() - i));
            std::swap(flat[i], flat[j]);
        }
        std::vector<std::pair<int, int>> cells;
        for (int i = 0; i < n_pilots; ++i) cells.emplace_back(flat[i] / m, flat[i] % m);
        return PilotPattern(n, m, std::move(cells));
    }

    int n_f = 0, n_t = 0;
    if (full_slot_columns) {
        require(n_pilots % n == 0 && n_pilots >= n,
                "pattern: full-column layout needs a budget divisible by n_slots");
        n_f = n_pilots / n;
        n_t = n;
    } else {
        std::tie(n_f, n_t) = detail::lattice_factorization(n_pilots, n, m);
    }
    std::vector<int> subs = variant == MusicVariant::OptimizedPilots
                                ? min_redundancy_subcarriers(n_f, m)
                                : detail::evenly_spaced(n_f, m);
    std::vector<int> slots = detail::evenly_spaced(n_t, n);
    std::vector<std::pair<int, int>> cells;
    cells.reserve(static_cast<size_t>(n_f) * n_t);
    for (int slot : slots)
        for (int sub : subs) cells.emplace_back(slot, sub);
    return PilotPattern(n, m, std::move(cells));
}

}  // namespace sems
