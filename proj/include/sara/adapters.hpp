// adapters.hpp - the three low-rank adapter mechanisms.
//
// LoraAdapter:   h = x(W0 + scaling * A B), A Kaiming, B zero at init.
// SaraAdapter:   h = x(W0 + U diag(lambda) Vt), k picked from the frozen
//                weight's spectrum at a proportion threshold; all factors
//                trainable, no fixed scaling.
// MoSaraAdapter: h = x W0 + (x U ⊙ (g L)) Vt diag(v), with U/Vt frozen from
//                the truncated SVD, m trainable singular-value vectors mixed
//                by a token-level softmax gate g, and a zero-initialized v.
//
// Forward passes here are pure; the training tape mirrors the same math.

#ifndef SARA_ADAPTERS_HPP
#define SARA_ADAPTERS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "sara/checkpoint.hpp"
#include "sara/matrix.hpp"
#include "sara/rank_select.hpp"
#include "sara/rng.hpp"
#include "sara/svd.hpp"

namespace sara {

// ============================================================================
// LoRA baseline
// ============================================================================

struct LoraAdapter {
    Matrix a;       // d_in x r, trainable
    Matrix b;       // r x d_out, trainable
    double scaling; // fixed lambda
    std::size_t rank;
};

inline LoraAdapter lora_init(Rng& rng, std::size_t d_in, std::size_t d_out, std::size_t rank,
                             double scaling) {
    if (rank < 1) {
        throw std::invalid_argument("lora_init: rank must be >= 1");
    }
    LoraAdapter ad;
    ad.a = kaiming_uniform(rng, d_in, rank, d_in);
    ad.b = Matrix(rank, d_out); // zero so the adapter starts as a no-op
    ad.scaling = scaling;
    ad.rank = rank;
    return ad;
}

inline Matrix lora_delta(const LoraAdapter& ad) {
    return scale(matmul(ad.a, ad.b), ad.scaling);
}

inline Matrix lora_forward(const LoraAdapter& ad, const Matrix& base_weight, const Matrix& x) {
    return add(matmul(x, base_weight), scale(matmul(matmul(x, ad.a), ad.b), ad.scaling));
}

inline Matrix merge_lora(const LoraAdapter& ad, const Matrix& base_weight) {
    return add(base_weight, lora_delta(ad));
}

inline std::size_t param_count(const LoraAdapter& ad) {
    return ad.rank * (ad.a.rows() + ad.b.cols());
}

// ============================================================================
// SARA
// ============================================================================

enum class SaraInitMode { random, v_zero, svd_seeded };

struct SaraAdapter {
    Matrix u;                   // d_in x k, trainable
    std::vector<double> lambda; // length k, trainable diagonal
    Matrix vt;                  // k x d_out, trainable
    std::size_t k;
    SaraInitMode init_mode = SaraInitMode::random;
    bool use_lambda = true;
};

inline SaraAdapter sara_init(Rng& rng, const Matrix& base_weight, double threshold,
                             SaraInitMode mode = SaraInitMode::random) {
    require_finite(base_weight, "sara_init");
    const SvdResult f = svd(base_weight);
    const std::size_t k = calculate_k(f.s, threshold);
    const std::size_t d_in = base_weight.rows();
    const std::size_t d_out = base_weight.cols();

    SaraAdapter ad;
    ad.k = k;
    ad.init_mode = mode;
    if (mode == SaraInitMode::svd_seeded) {
        const SvdResult t = truncate_svd(f, k);
        ad.u = t.u;
        ad.lambda = t.s;
        ad.vt = t.vt;
    } else {
        ad.u = kaiming_uniform(rng, d_in, k, d_in);
        ad.lambda = kaiming_uniform_vec(rng, k, k);
        ad.vt = mode == SaraInitMode::v_zero ? Matrix(k, d_out)
                                             : kaiming_uniform(rng, k, d_out, k);
    }
    return ad;
}

inline Matrix sara_delta(const SaraAdapter& ad) {
    return matmul(ad.use_lambda ? scale_cols(ad.u, ad.lambda) : ad.u, ad.vt);
}

inline Matrix sara_forward(const SaraAdapter& ad, const Matrix& base_weight, const Matrix& x) {
    if (x.cols() != base_weight.rows()) {
        throw std::invalid_argument("sara_forward: x cols " + std::to_string(x.cols()) +
                                    " != d_in " + std::to_string(base_weight.rows()));
    }
    Matrix xu = matmul(x, ad.u);
    if (ad.use_lambda) {
        xu = scale_cols(xu, ad.lambda);
    }
    return add(matmul(x, base_weight), matmul(xu, ad.vt));
}

inline double sara_delta_entry(const SaraAdapter& ad, std::size_t i, std::size_t j) {
    if (i >= ad.u.rows() || j >= ad.vt.cols()) {
        throw std::out_of_range("sara_delta_entry: index (" + std::to_string(i) + "," +
                                std::to_string(j) + ") out of range for " +
                                std::to_string(ad.u.rows()) + "x" + std::to_string(ad.vt.cols()));
    }
    double acc = 0.0;
    for (std::size_t r = 0; r < ad.k; ++r) {
        acc += ad.u(i, r) * (ad.use_lambda ? ad.lambda[r] : 1.0) * ad.vt(r, j);
    }
    return acc;
}

inline Matrix merge_sara(const SaraAdapter& ad, const Matrix& base_weight) {
    return add(base_weight, sara_delta(ad));
}

inline std::size_t param_count(const SaraAdapter& ad) {
    const std::size_t d_in = ad.u.rows();
    const std::size_t d_out = ad.vt.cols();
    return ad.use_lambda ? ad.k * (d_in + d_out + 1) : ad.k * (d_in + d_out);
}

// ============================================================================
// Mo-SARA
// ============================================================================

enum class VMode { after, front, off };

struct MoSaraAdapter {
    Matrix u_frozen;  // d_in x k, fixed
    Matrix vt_frozen; // k x d_out, fixed
    std::vector<std::vector<double>> lambdas; // m vectors of length k, trainable
    Matrix wg1;            // k x 1, trainable
    Matrix wg2;            // 1 x m, trainable
    std::vector<double> v; // length d_out (after) or k (front); empty when off
    std::size_t heads;
    VMode v_mode = VMode::after;

    std::size_t k() const { return u_frozen.cols(); }
};

inline MoSaraAdapter mosara_init(Rng& rng, const Matrix& base_weight, double threshold,
                                 std::size_t heads, VMode v_mode = VMode::after) {
    if (heads < 1) {
        throw std::invalid_argument("mosara_init: heads must be >= 1");
    }
    require_finite(base_weight, "mosara_init");
    const SvdResult f = svd(base_weight);
    const std::size_t k = calculate_k(f.s, threshold);
    const SvdResult t = truncate_svd(f, k);

    MoSaraAdapter ad;
    ad.u_frozen = t.u;
    ad.vt_frozen = t.vt;
    ad.heads = heads;
    ad.v_mode = v_mode;
    ad.lambdas.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        ad.lambdas.push_back(kaiming_uniform_vec(rng, k, k));
    }
    ad.wg1 = kaiming_uniform(rng, k, 1, k);
    ad.wg2 = kaiming_uniform(rng, 1, heads, 1);
    switch (v_mode) {
    case VMode::after:
        ad.v.assign(base_weight.cols(), 0.0);
        break;
    case VMode::front:
        ad.v.assign(k, 0.0);
        break;
    case VMode::off:
        break;
    }
    return ad;
}

// Token-level gate g = softmax((x U) (Wg1 Wg2)), one probability row per token.
inline Matrix mosara_gate(const MoSaraAdapter& ad, const Matrix& x) {
    if (x.cols() != ad.u_frozen.rows()) {
        throw std::invalid_argument("mosara_gate: x cols " + std::to_string(x.cols()) +
                                    " != d_in " + std::to_string(ad.u_frozen.rows()));
    }
    const Matrix logits = matmul(matmul(x, ad.u_frozen), matmul(ad.wg1, ad.wg2));
    return softmax_rows(logits);
}

// Stacks the m lambda vectors into an m x k matrix, so g (l x m) times it
// gives the per-token mixed diagonal.
inline Matrix mosara_lambda_matrix(const MoSaraAdapter& ad) {
    Matrix lam(ad.heads, ad.k());
    for (std::size_t h = 0; h < ad.heads; ++h) {
        for (std::size_t j = 0; j < ad.k(); ++j) {
            lam(h, j) = ad.lambdas[h][j];
        }
    }
    return lam;
}

inline Matrix mosara_forward(const MoSaraAdapter& ad, const Matrix& base_weight, const Matrix& x) {
    if (x.cols() != base_weight.rows()) {
        throw std::invalid_argument("mosara_forward: x cols " + std::to_string(x.cols()) +
                                    " != d_in " + std::to_string(base_weight.rows()));
    }
    const Matrix g = mosara_gate(ad, x);           // l x m
    const Matrix mixed = matmul(g, mosara_lambda_matrix(ad)); // l x k, row t = mixed diagonal
    Matrix xu = matmul(x, ad.u_frozen);            // l x k
    if (ad.v_mode == VMode::front) {
        xu = scale_cols(xu, ad.v);
    }
    Matrix branch = matmul(hadamard(xu, mixed), ad.vt_frozen);
    if (ad.v_mode == VMode::after) {
        branch = scale_cols(branch, ad.v);
    }
    return add(matmul(x, base_weight), branch);
}

inline std::size_t param_count(const MoSaraAdapter& ad) {
    // m lambda vectors + wg1 + wg2 + v (when present); frozen factors excluded
    return ad.heads * ad.k() + ad.k() + ad.heads + ad.v.size();
}

// ============================================================================
// checkpoint (de)serialization, names `prefix.field`
// ============================================================================

inline void lora_to_checkpoint(Checkpoint& cp, const std::string& prefix, const LoraAdapter& ad) {
    cp.put_matrix(prefix + ".a", ad.a);
    cp.put_matrix(prefix + ".b", ad.b);
    cp.put_vector(prefix + ".scaling", {ad.scaling});
}

inline LoraAdapter lora_from_checkpoint(const Checkpoint& cp, const std::string& prefix) {
    LoraAdapter ad;
    ad.a = cp.matrix(prefix + ".a");
    ad.b = cp.matrix(prefix + ".b");
    ad.scaling = cp.vec(prefix + ".scaling").at(0);
    ad.rank = ad.a.cols();
    return ad;
}

inline void sara_to_checkpoint(Checkpoint& cp, const std::string& prefix, const SaraAdapter& ad) {
    cp.put_matrix(prefix + ".u", ad.u);
    cp.put_vector(prefix + ".lambda", ad.lambda); // rank-1 storage
    cp.put_matrix(prefix + ".vt", ad.vt);
}

inline SaraAdapter sara_from_checkpoint(const Checkpoint& cp, const std::string& prefix,
                                        bool use_lambda = true) {
    SaraAdapter ad;
    ad.u = cp.matrix(prefix + ".u");
    ad.lambda = cp.vec(prefix + ".lambda");
    ad.vt = cp.matrix(prefix + ".vt");
    ad.k = ad.lambda.size();
    ad.use_lambda = use_lambda;
    return ad;
}

inline void mosara_to_checkpoint(Checkpoint& cp, const std::string& prefix,
                                 const MoSaraAdapter& ad) {
    cp.put_matrix(prefix + ".u_frozen", ad.u_frozen);
    cp.put_matrix(prefix + ".vt_frozen", ad.vt_frozen);
    for (std::size_t h = 0; h < ad.heads; ++h) {
        cp.put_vector(prefix + ".lambda" + std::to_string(h), ad.lambdas[h]); // rank-1 storage
    }
    cp.put_matrix(prefix + ".wg1", ad.wg1);
    cp.put_matrix(prefix + ".wg2", ad.wg2);
    if (ad.v_mode != VMode::off) {
        cp.put_vector(prefix + ".v", ad.v); // rank-1 storage
    }
}

inline MoSaraAdapter mosara_from_checkpoint(const Checkpoint& cp, const std::string& prefix,
                                            VMode v_mode) {
    MoSaraAdapter ad;
    ad.u_frozen = cp.matrix(prefix + ".u_frozen");
    ad.vt_frozen = cp.matrix(prefix + ".vt_frozen");
    ad.wg1 = cp.matrix(prefix + ".wg1");
    ad.wg2 = cp.matrix(prefix + ".wg2");
    ad.heads = ad.wg2.cols();
    for (std::size_t h = 0; h < ad.heads; ++h) {
        ad.lambdas.push_back(cp.vec(prefix + ".lambda" + std::to_string(h)));
    }
    ad.v_mode = v_mode;
    if (v_mode != VMode::off) {
        ad.v = cp.vec(prefix + ".v");
    }
    return ad;
}

} // namespace sara

#endif // SARA_ADAPTERS_HPP
