#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "oracle.hpp"
#include "snrf/error.hpp"
#include "snrf/fixtures.hpp"
#include "snrf/merge.hpp"
#include "snrf/profiler.hpp"

using namespace snrf;

namespace {

const ModelConfig kCfg{2, 8, 16, 32};

struct Pair {
    WeightMap src, tgt;
};

Pair model_pair(std::uint64_t seed) {
    WeightMap tgt = random_model(kCfg, seed);
    return {perturbed_model(tgt, 0.3, seed + 100), tgt};
}

NeuronSet some_shared(std::uint64_t seed) {
    GroupCounts budget;
    for (std::uint32_t l = 0; l < 2; ++l)
        for (NeuronKind k : kAllNeuronKinds) budget[{l, k}] = (l + static_cast<std::size_t>(k)) % 3 + 1;
    return random_neuron_set(budget, kCfg, seed);
}

MergeConfig snrf_cfg(NeuronSet shared, std::size_t rank, double beta) {
    MergeConfig c;
    c.method = MergeMethod::snrf;
    c.shared = std::move(shared);
    c.rank = rank;
    c.beta = beta;
    return c;
}

// True when entry (i, j) of `name` sits in a row/column SNRF may write.
bool addressed(const NeuronSet& shared, const std::string& name, std::size_t i, std::size_t j) {
    for (std::uint32_t l = 0; l < kCfg.n_layers; ++l)
        for (NeuronKind k : kAllNeuronKinds)
            for (const auto& [tname, axis] : tensors_for_group(l, k)) {
                if (tname != name) continue;
                const auto idx = shared.indices(l, k);
                const std::size_t key = axis == Axis::rows ? i : j;
                if (std::find(idx.begin(), idx.end(), key) != idx.end()) return true;
            }
    return false;
}

bool bit_equal(float a, float b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(SnrfMerge, BetaZeroIsBitIdenticalToTarget) {
    const auto p = model_pair(1);
    EXPECT_EQ(encode_checkpoint(snrf_merge(p.src, p.tgt, snrf_cfg(some_shared(1), 2, 0.0))), encode_checkpoint(p.tgt));
}

TEST(SnrfMerge, EmptySharedSetIsBitIdenticalToTarget) {
    const auto p = model_pair(2);
    EXPECT_EQ(encode_checkpoint(snrf_merge(p.src, p.tgt, snrf_cfg({}, 3, 0.7))), encode_checkpoint(p.tgt));
}

TEST(SnrfMerge, FullSharedFullRankBetaOneRecoversSource) {
    const auto p = model_pair(3);
    const WeightMap m = snrf_merge(p.src, p.tgt, snrf_cfg(NeuronSet::all(kCfg), 8, 1.0));
    for (const auto& [name, s] : p.src.tensors()) {
        if (name == kEmbedName || name == kUnembedName) {
            EXPECT_EQ(m.at(name), p.tgt.at(name));
            continue;
        }
        const double err = oracle::diff_sq(oracle::grid(m.at(name)), oracle::grid(s));
        EXPECT_LE(std::sqrt(err), 1e-5 * std::sqrt(oracle::frobenius_sq(oracle::grid(s)))) << name;
    }
}

TEST(SnrfMerge, NonSharedEntriesAreNeverTouched) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto p = model_pair(seed);
        const NeuronSet shared = some_shared(seed);
        for (SvdOrder order : {SvdOrder::full_then_mask, SvdOrder::mask_then_svd}) {
            MergeConfig c = snrf_cfg(shared, 2, 0.6);
            c.svd_order = order;
            const WeightMap m = snrf_merge(p.src, p.tgt, c);
            std::size_t changed = 0;
            for (const auto& [name, t] : p.tgt.tensors()) {
                const Matrix& w = m.at(name);
                for (std::size_t i = 0; i < t.rows(); ++i)
                    for (std::size_t j = 0; j < t.cols(); ++j) {
                        if (!addressed(shared, name, i, j)) {
                            EXPECT_TRUE(bit_equal(w(i, j), t(i, j))) << name << " " << i << "," << j;
                        } else {
                            changed += !bit_equal(w(i, j), t(i, j));
                        }
                    }
            }
            EXPECT_GT(changed, 0u);
        }
    }
}

TEST(SnrfMerge, UpdateEqualsMaskedTruncationOracle) {
    const auto p = model_pair(4);
    const NeuronSet shared = some_shared(4);
    const WeightMap m = snrf_merge(p.src, p.tgt, snrf_cfg(shared, 3, 0.5));
    const std::string name = attn_v_name(1);
    const MatrixD d = subtract(p.src.at(name), p.tgt.at(name));
    const MatrixD r3 = truncate_rank(svd(d), 3);
    const auto idx = shared.indices(1, NeuronKind::attn_v);
    for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j : idx) {
            const double want = p.tgt.at(name)(i, j) + 0.5 * r3(i, j);
            EXPECT_NEAR(m.at(name)(i, j), want, 1e-6);
        }
}

TEST(SnrfMerge, MaskThenSvdHasRankAtMostR) {
    const auto p = model_pair(5);
    MergeConfig c = snrf_cfg(NeuronSet::all(kCfg).minus(NeuronSet({{0, NeuronKind::fwd_up, 0}})), 2, 1.0);
    c.svd_order = SvdOrder::mask_then_svd;
    const WeightMap m = snrf_merge(p.src, p.tgt, c);
    const std::string name = mlp_up_name(0);
    // The stored update carries float rounding, so compare against its scale.
    const auto sv = svd(subtract(m.at(name), p.tgt.at(name))).singular_values;
    EXPECT_LE(sv[2], 1e-5 * sv[0]);
}

TEST(SnrfMerge, ValidatesParameters) {
    const auto p = model_pair(6);
    EXPECT_THROW(snrf_merge(p.src, p.tgt, snrf_cfg({}, 0, 0.5)), ParameterError);
    EXPECT_THROW(snrf_merge(p.src, p.tgt, snrf_cfg({}, 9, 0.5)), ParameterError);
    EXPECT_THROW(snrf_merge(p.src, p.tgt, snrf_cfg({}, 2, 1.5)), ParameterError);
    EXPECT_THROW(snrf_merge(p.src, p.tgt, snrf_cfg({}, 2, -0.1)), ParameterError);
    MergeConfig over = snrf_cfg(some_shared(0), 2, 1.5);
    over.allow_beta_override = true;
    EXPECT_NO_THROW(snrf_merge(p.src, p.tgt, over));
    EXPECT_THROW(snrf_merge(p.src, p.tgt, snrf_cfg(NeuronSet({{5, NeuronKind::attn_q, 0}}), 2, 0.5)), ParameterError);
    EXPECT_THROW(snrf_merge(random_model({2, 8, 12, 32}, 0), p.tgt, snrf_cfg({}, 2, 0.5)), CorrespondenceError);
    EXPECT_THROW(parse_merge_method("ties"), ParameterError);
    EXPECT_THROW(parse_svd_order("later"), ParameterError);
}

TEST(SnrfMerge, IsDeterministic) {
    const auto p = model_pair(7);
    const auto c = snrf_cfg(some_shared(7), 2, 0.4);
    EXPECT_EQ(encode_checkpoint(snrf_merge(p.src, p.tgt, c)), encode_checkpoint(snrf_merge(p.src, p.tgt, c)));
}

TEST(LinearMerge, MatchesEntrywiseOracle) {
    const auto p = model_pair(8);
    const WeightMap m = linear_merge(p.src, p.tgt, 0.25);
    for (const auto& [name, t] : p.tgt.tensors()) {
        const Matrix& s = p.src.at(name);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double want = t.data()[i] + 0.25 * (double(s.data()[i]) - double(t.data()[i]));
            EXPECT_NEAR(m.at(name).data()[i], want, 1e-6);
        }
    }
    EXPECT_EQ(linear_merge(p.src, p.tgt, 0.0), p.tgt);
    EXPECT_EQ(linear_merge(p.src, p.tgt, 1.0), p.src);
}

TEST(Dare, ZeroDropEqualsLinear) {
    const auto p = model_pair(9);
    EXPECT_EQ(dare_merge(p.src, p.tgt, 0.5, 0.0, 3), linear_merge(p.src, p.tgt, 0.5));
}

TEST(Dare, DropAndRescaleIsUnbiased) {
    MatrixD d(40, 50);
    Rng init(1);
    for (double& v : d.data()) v = init.normal();
    const double p = 0.7;
    MatrixD mean(40, 50);
    const int trials = 400;
    std::size_t zeros = 0;
    Rng rng(2);
    for (int t = 0; t < trials; ++t) {
        const MatrixD s = drop_and_rescale(d, p, rng);
        for (std::size_t i = 0; i < s.size(); ++i) {
            mean.data()[i] += s.data()[i] / trials;
            zeros += s.data()[i] == 0.0;
        }
    }
    EXPECT_NEAR(static_cast<double>(zeros) / (trials * d.size()), p, 0.005);
    double err = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) err += std::abs(mean.data()[i] - d.data()[i]);
    // Per-entry sd of the mean is |d| * sqrt(p / (1 - p) / trials) ~ 0.076 |d|.
    EXPECT_LT(err / d.size(), 0.1);
    EXPECT_THROW(drop_and_rescale(d, 1.0, rng), ParameterError);
}

TEST(Dare, SeededAndDispatchedByMerge) {
    const auto p = model_pair(10);
    MergeConfig c;
    c.method = MergeMethod::dare;
    c.beta = 0.5;
    c.dare_drop_prob = 0.3;
    c.seed = 11;
    EXPECT_EQ(merge(p.src, p.tgt, c), merge(p.src, p.tgt, c));
    EXPECT_EQ(merge(p.src, p.tgt, c), dare_merge(p.src, p.tgt, 0.5, 0.3, 11));
    c.seed = 12;
    EXPECT_NE(merge(p.src, p.tgt, c), dare_merge(p.src, p.tgt, 0.5, 0.3, 11));
}
