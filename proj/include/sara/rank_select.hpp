// rank_select.hpp - threshold-based rank selection from singular spectra.
//
// calculate_k returns the smallest count of leading singular values whose sum
// reaches a proportion threshold of the total. Applied per layer and per
// matrix kind over a checkpoint it yields a RankProfile, exportable as CSV.

#ifndef SARA_RANK_SELECT_HPP
#define SARA_RANK_SELECT_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "sara/checkpoint.hpp"
#include "sara/format.hpp"
#include "sara/svd.hpp"

namespace sara {

inline std::size_t calculate_k(const std::vector<double>& singular_values, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0) {
        throw std::invalid_argument("calculate_k: threshold must be in (0,1), got " +
                                    format_double(threshold));
    }
    if (singular_values.empty()) {
        throw std::invalid_argument("calculate_k: empty spectrum");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < singular_values.size(); ++i) {
        const double v = singular_values[i];
        if (v < 0.0) {
            throw std::invalid_argument("calculate_k: negative singular value at index " +
                                        std::to_string(i));
        }
        if (i > 0 && singular_values[i - 1] < v) {
            throw std::invalid_argument("calculate_k: values not sorted descending at index " +
                                        std::to_string(i));
        }
        total += v;
    }
    if (total == 0.0) {
        throw std::invalid_argument("calculate_k: degenerate spectrum (all zero)");
    }

    const double target = threshold * total;
    const double slack = 1e-12 * total; // absorbs rounding at exact boundaries
    double cumulative = 0.0;
    for (std::size_t k = 0; k < singular_values.size(); ++k) {
        cumulative += singular_values[k];
        if (cumulative + slack >= target) {
            return k + 1;
        }
    }
    return singular_values.size();
}

inline std::size_t k_from_weight(const Matrix& w, double threshold) {
    return calculate_k(svd(w).s, threshold);
}

// ============================================================================
// RankProfile
// ============================================================================

struct RankProfileEntry {
    std::size_t layer_index;
    std::string matrix_kind;
    double threshold;
    std::size_t k;
    std::size_t dim;
};

struct RankProfile {
    std::vector<RankProfileEntry> entries;
};

inline std::vector<std::size_t> checkpoint_layer_indices(const Checkpoint& cp) {
    std::vector<std::size_t> layers;
    for (const TensorEntry& e : cp.entries()) {
        if (e.name.rfind("layer.", 0) != 0) {
            continue;
        }
        const std::size_t dot = e.name.find('.', 6);
        if (dot == std::string::npos) {
            continue;
        }
        try {
            const std::size_t idx = std::stoul(e.name.substr(6, dot - 6));
            bool seen = false;
            for (std::size_t l : layers) {
                seen = seen || l == idx;
            }
            if (!seen) {
                layers.push_back(idx);
            }
        } catch (const std::exception&) {
            continue;
        }
    }
    std::sort(layers.begin(), layers.end());
    return layers;
}

// One entry per (layer, kind, threshold), ordered by layer, then by the
// position of the kind in `kinds`, then by threshold order as given.
inline RankProfile rank_profile(const Checkpoint& cp, const std::vector<std::string>& kinds,
                                const std::vector<double>& thresholds) {
    RankProfile profile;
    const std::vector<std::size_t> layers = checkpoint_layer_indices(cp);
    if (layers.empty()) {
        throw std::invalid_argument("rank_profile: checkpoint has no 'layer.{i}.*' tensors");
    }
    for (std::size_t layer : layers) {
        for (const std::string& kind : kinds) {
            const std::string key = "layer." + std::to_string(layer) + "." + kind;
            if (!cp.has(key)) {
                throw std::out_of_range("rank_profile: missing tensor '" + key + "'");
            }
            const Matrix w = cp.matrix(key);
            const std::vector<double> s = svd(w).s;
            for (double t : thresholds) {
                profile.entries.push_back({layer, kind, t, calculate_k(s, t), s.size()});
            }
        }
    }
    return profile;
}

inline std::string rank_profile_csv(const RankProfile& profile) {
    std::string out = "layer,kind,threshold,k,dim\n";
    for (const RankProfileEntry& e : profile.entries) {
        out += std::to_string(e.layer_index) + "," + e.matrix_kind + "," +
               format_double(e.threshold) + "," + std::to_string(e.k) + "," +
               std::to_string(e.dim) + "\n";
    }
    return out;
}

} // namespace sara

#endif // SARA_RANK_SELECT_HPP
