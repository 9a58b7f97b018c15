#include <doctest.h>

#include <cmath>

#include "sara/model.hpp"
#include "sara/rank_select.hpp"
#include "sara/rng.hpp"

using namespace sara;

namespace {

// brute-force oracle: accumulate and compare against threshold * total
std::size_t oracle_k(const std::vector<double>& s, double threshold) {
    double total = 0.0;
    for (double v : s) {
        total += v;
    }
    const double target = threshold * total;
    double cum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        cum += s[i];
        if (cum + 1e-12 * total >= target) {
            return i + 1;
        }
    }
    return s.size();
}

std::vector<double> random_descending_spectrum(Rng& rng, std::size_t n) {
    std::vector<double> s(n);
    for (auto& v : s) {
        v = rng.uniform(0.01, 10.0);
    }
    std::sort(s.begin(), s.end(), std::greater<>());
    return s;
}

} // namespace

TEST_CASE("equal values force a proportional count") {
    for (std::size_t d : {4u, 7u, 16u, 33u}) {
        for (double t : {0.1, 0.25, 0.5, 0.75, 0.9}) {
            const std::vector<double> ones(d, 1.0);
            CHECK(calculate_k(ones, t) ==
                  static_cast<std::size_t>(std::ceil(t * static_cast<double>(d))));
        }
    }
    CHECK(calculate_k(std::vector<double>(4, 1.0), 0.5) == 2);
}

TEST_CASE("hand case 3,2,1 at 0.5") {
    CHECK(calculate_k({3, 2, 1}, 0.5) == 1); // 3/6 reaches the target exactly
}

TEST_CASE("100 random spectra match the cumulative-sum oracle exactly") {
    Rng rng(6021);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.uniform_int(64);
        const std::vector<double> s = random_descending_spectrum(rng, n);
        for (int ti = 1; ti <= 9; ++ti) {
            const double t = 0.1 * ti;
            CHECK(calculate_k(s, t) == oracle_k(s, t));
        }
    }
}

TEST_CASE("monotone in the threshold") {
    Rng rng(88);
    for (int trial = 0; trial < 30; ++trial) {
        const std::vector<double> s = random_descending_spectrum(rng, 1 + rng.uniform_int(40));
        std::size_t prev = 0;
        for (int ti = 1; ti <= 9; ++ti) {
            const std::size_t k = calculate_k(s, 0.1 * ti);
            CHECK(k >= prev);
            prev = k;
        }
    }
}

TEST_CASE("scale invariance") {
    Rng rng(99);
    for (int trial = 0; trial < 30; ++trial) {
        const std::vector<double> s = random_descending_spectrum(rng, 1 + rng.uniform_int(40));
        for (double c : {1e-6, 0.5, 3.0, 1e6}) {
            std::vector<double> scaled = s;
            for (auto& v : scaled) {
                v *= c;
            }
            CHECK(calculate_k(scaled, 0.37) == calculate_k(s, 0.37));
        }
    }
}

TEST_CASE("calculate_k input validation") {
    CHECK_THROWS_AS(calculate_k({1, 2, 3}, 0.5), std::invalid_argument); // unsorted
    CHECK_THROWS_WITH_AS(calculate_k({0, 0, 0}, 0.5), doctest::Contains("degenerate"),
                         std::invalid_argument);
    CHECK_THROWS_AS(calculate_k({3, 2, 1}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(calculate_k({3, 2, 1}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(calculate_k({3, -1.0}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(calculate_k({}, 0.5), std::invalid_argument);
}

TEST_CASE("k from an identity weight") {
    CHECK(k_from_weight(Matrix::identity(8), 0.5) == 4);
}

TEST_CASE("k from diag(3,2,1) at 0.9 needs the whole spectrum") {
    CHECK(k_from_weight(Matrix::diag({3, 2, 1}), 0.9) == 3); // target 5.4 > 5
}

TEST_CASE("k_from_weight equals the two-step composition") {
    Rng rng(41);
    Matrix w = kaiming_uniform(rng, 16, 16, 16);
    for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        CHECK(k_from_weight(w, t) == calculate_k(svd(w).s, t));
    }
}

namespace {

Checkpoint toy_checkpoint(std::size_t layers, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    Checkpoint cp;
    for (std::size_t i = 0; i < layers; ++i) {
        cp.put_matrix(layer_tensor(i, "Q"), kaiming_uniform(rng, dim, dim, dim));
        cp.put_matrix(layer_tensor(i, "V"), kaiming_uniform(rng, dim, dim, dim));
    }
    return cp;
}

} // namespace

TEST_CASE("rank_profile cardinality") {
    Checkpoint cp = toy_checkpoint(2, 8, 1);
    RankProfile p = rank_profile(cp, {"Q", "V"}, {0.5});
    CHECK(p.entries.size() == 4);
}

TEST_CASE("rank_profile on constructed spectra") {
    Checkpoint cp;
    cp.put_matrix("layer.0.Q", Matrix::identity(32));
    std::vector<double> dominant(32, 1e-9);
    dominant[0] = 100.0;
    cp.put_matrix("layer.1.Q", Matrix::diag(dominant));
    RankProfile p = rank_profile(cp, {"Q"}, {0.5});
    REQUIRE(p.entries.size() == 2);
    CHECK(p.entries[0].k == 16);
    CHECK(p.entries[1].k == 1);
    CHECK(p.entries[0].dim == 32);
}

TEST_CASE("rank_profile equals per-entry recomputation") {
    Checkpoint cp = toy_checkpoint(3, 12, 7);
    const std::vector<double> thresholds{0.2, 0.5, 0.8};
    RankProfile p = rank_profile(cp, {"Q", "V"}, thresholds);
    REQUIRE(p.entries.size() == 3 * 2 * 3);
    for (const RankProfileEntry& e : p.entries) {
        const Matrix w = cp.matrix(layer_tensor(e.layer_index, e.matrix_kind));
        CHECK(e.k == k_from_weight(w, e.threshold));
        CHECK(e.k >= 1);
        CHECK(e.k <= e.dim);
    }
}

TEST_CASE("rank_profile k is monotone per (layer, kind)") {
    Checkpoint cp = toy_checkpoint(2, 10, 3);
    RankProfile p = rank_profile(cp, {"Q", "V"}, {0.1, 0.3, 0.5, 0.7, 0.9});
    for (std::size_t i = 1; i < p.entries.size(); ++i) {
        const auto& prev = p.entries[i - 1];
        const auto& cur = p.entries[i];
        if (prev.layer_index == cur.layer_index && prev.matrix_kind == cur.matrix_kind) {
            CHECK(prev.k <= cur.k);
        }
    }
}

TEST_CASE("rank_profile names the missing tensor") {
    Checkpoint cp;
    cp.put_matrix("layer.0.Q", Matrix::identity(4));
    CHECK_THROWS_WITH_AS(rank_profile(cp, {"Q", "V"}, {0.5}),
                         doctest::Contains("layer.0.V"), std::out_of_range);
}

TEST_CASE("permuting layers permutes entries and nothing else") {
    Rng rng(13);
    Matrix q0 = kaiming_uniform(rng, 8, 8, 8);
    Matrix q1 = kaiming_uniform(rng, 8, 8, 8);
    Checkpoint a;
    a.put_matrix("layer.0.Q", q0);
    a.put_matrix("layer.1.Q", q1);
    Checkpoint b;
    b.put_matrix("layer.0.Q", q1);
    b.put_matrix("layer.1.Q", q0);
    RankProfile pa = rank_profile(a, {"Q"}, {0.3, 0.6});
    RankProfile pb = rank_profile(b, {"Q"}, {0.3, 0.6});
    REQUIRE(pa.entries.size() == pb.entries.size());
    for (std::size_t i = 0; i < pa.entries.size(); ++i) {
        const std::size_t swapped = pa.entries[i].layer_index == 0 ? 1 : 0;
        bool found = false;
        for (const auto& e : pb.entries) {
            found = found || (e.layer_index == swapped &&
                              e.threshold == pa.entries[i].threshold &&
                              e.k == pa.entries[i].k);
        }
        CHECK(found);
    }
}

TEST_CASE("csv export format") {
    Checkpoint cp = toy_checkpoint(1, 6, 2);
    RankProfile p = rank_profile(cp, {"Q"}, {0.5});
    const std::string csv = rank_profile_csv(p);
    CHECK(csv.rfind("layer,kind,threshold,k,dim\n", 0) == 0);
    CHECK(csv.find("0,Q,0.5,") != std::string::npos);
    CHECK(csv.back() == '\n');
    CHECK(csv.find('\r') == std::string::npos); // LF endings only
}
