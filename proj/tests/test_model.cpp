#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "oracle.hpp"
#include "snrf/error.hpp"
#include "snrf/fixtures.hpp"
#include "snrf/model.hpp"
#include "snrf/rng.hpp"

using namespace snrf;

namespace {

std::vector<TokenId> random_tokens(std::size_t n, std::size_t vocab, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TokenId> t(n);
    for (auto& x : t) x = static_cast<TokenId>(rng.below(vocab));
    return t;
}

double max_abs_diff(const MatrixD& a, const oracle::Grid& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) d = std::max(d, std::abs(a(i, j) - b[i][j]));
    return d;
}

double max_abs_diff(const MatrixD& a, const MatrixD& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
    return d;
}

}  // namespace

TEST(Forward, MatchesHandComputedLogits) {
    const WeightMap w = load_checkpoint(std::string(SNRF_FIXTURE_DIR) + "/tiny_1layer.snrf");
    std::ifstream in(std::string(SNRF_FIXTURE_DIR) + "/tiny_1layer_logits.txt");
    std::string line;
    std::getline(in, line);
    std::istringstream ts(line);
    std::vector<TokenId> tokens;
    for (TokenId t; ts >> t;) tokens.push_back(t);
    const auto out = forward(w, tokens);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        std::getline(in, line);
        std::istringstream ls(line);
        for (std::size_t v = 0; v < 3; ++v) {
            double want = 0.0;
            ls >> want;
            EXPECT_NEAR(out.logits(i, v), want, 1e-12) << i << "," << v;
        }
    }
}

TEST(Forward, MatchesNaiveOracleOnRandomModels) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const WeightMap w = random_model({2, 8, 16, 32}, seed);
        const auto tokens = random_tokens(9, 32, seed + 50);
        const auto out = forward(w, tokens);
        const auto ref = oracle::naive_forward(w, tokens);
        EXPECT_LT(max_abs_diff(out.hidden, ref.hidden), 1e-10);
        EXPECT_LT(max_abs_diff(out.logits, ref.logits), 1e-10);
    }
}

TEST(Forward, IsCausal) {
    const WeightMap w = random_model({2, 8, 16, 32}, 4);
    const auto tokens = random_tokens(10, 32, 1);
    const auto full = forward(w, tokens);
    const auto prefix = forward(w, std::span(tokens).first(6));
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(full.hidden(i, j), prefix.hidden(i, j), 1e-12);
}

TEST(Forward, CausalSoftmaxRowsSumToOneAndMaskFuture) {
    MatrixD s(4, 4);
    Rng rng(3);
    for (double& v : s.data()) v = 50.0 * rng.normal();
    const MatrixD a = causal_softmax(s);
    for (std::size_t i = 0; i < 4; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            if (j > i) { EXPECT_EQ(a(i, j), 0.0); }
            total += a(i, j);
        }
        EXPECT_NEAR(total, 1.0, 1e-14);
    }
}

TEST(Forward, RejectsBadTokens) {
    const WeightMap w = random_model({1, 4, 4, 8}, 0);
    const std::vector<TokenId> bad = {1, 8};
    EXPECT_THROW(forward(w, bad), ParameterError);
    EXPECT_THROW(forward(w, std::vector<TokenId>{}), ParameterError);
}

TEST(Intervention, LambdaOneIsBitIdentical) {
    const WeightMap w = random_model({2, 8, 16, 32}, 1);
    const auto tokens = random_tokens(7, 32, 2);
    const auto base = forward(w, tokens);
    for (NeuronKind kind : kAllNeuronKinds) {
        const Intervention iv = Intervention::amplify({1, kind, 3}, 1.0);
        const auto out = forward(w, tokens, std::span(&iv, 1));
        EXPECT_EQ(out.hidden, base.hidden);
        EXPECT_EQ(out.logits, base.logits);
    }
}

TEST(Intervention, AmplifyScalesTheActivationColumn) {
    const WeightMap w = random_model({1, 4, 6, 8}, 2);
    const auto tokens = random_tokens(5, 8, 3);
    const auto base = forward(w, tokens);
    const Intervention iv = Intervention::amplify({0, NeuronKind::fwd_up, 2}, 3.0);
    const auto out = forward(w, tokens, std::span(&iv, 1));
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_DOUBLE_EQ(out.layers[0].h_act(i, 2), 3.0 * base.layers[0].h_act(i, 2));
        EXPECT_EQ(out.layers[0].h_act(i, 1), base.layers[0].h_act(i, 1));
    }
}

TEST(Intervention, ValidationRejectsBadParameters) {
    const ModelConfig cfg{1, 4, 6, 8};
    EXPECT_THROW(Intervention::amplify({0, NeuronKind::attn_q, 0}, 0.0).validate(cfg), ParameterError);
    EXPECT_THROW(Intervention::amplify({0, NeuronKind::attn_q, 0}, -1.0).validate(cfg), ParameterError);
    EXPECT_THROW(Intervention::deactivate(NeuronId{1, NeuronKind::attn_q, 0}).validate(cfg), ParameterError);
    EXPECT_THROW(Intervention::deactivate(NeuronId{0, NeuronKind::fwd_up, 6}).validate(cfg), ParameterError);
}

TEST(Intervention, DeactivationEqualsWeightAblationForEveryNeuron) {
    const WeightMap w = random_model({2, 4, 6, 16}, 7);
    const auto tokens = random_tokens(6, 16, 8);
    for (const NeuronId& id : NeuronSet::all(w.config())) {
        const Intervention iv = Intervention::deactivate(id);
        const auto act = forward(w, tokens, std::span(&iv, 1));
        const auto abl = forward(ablate_weights(w, NeuronSet({id})), tokens);
        EXPECT_LT(max_abs_diff(act.hidden, abl.hidden), 1e-12) << id;
    }
}

TEST(Intervention, DeactivateMatchesLayerOracle) {
    const WeightMap w = random_model({1, 4, 6, 16}, 9);
    const auto tokens = random_tokens(5, 16, 1);
    const auto base = forward(w, tokens);
    const oracle::Grid x = oracle::grid(base.layers[0].x_in);
    const Intervention iv = Intervention::deactivate(NeuronId{0, NeuronKind::attn_k, 2});
    const auto out = forward(w, tokens, std::span(&iv, 1));
    EXPECT_LT(max_abs_diff(out.layers[0].y_attn, oracle::attention_block(w, 0, x, 'k', 2)), 1e-12);
}

TEST(GreedyDecode, MatchesStepwiseOracle) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const WeightMap w = random_model({2, 8, 16, 32}, seed);
        const std::vector<TokenId> prompt = {kInstToken, 5, 9, 11, kSepToken};
        EXPECT_EQ(greedy_decode(w, prompt, 12), oracle::naive_decode(w, prompt, 12));
    }
}

TEST(GreedyDecode, StopsAfterEos) {
    auto tensors = random_model({1, 4, 4, 8}, 0).tensors();
    Matrix& un = tensors.at(std::string(kUnembedName));
    for (std::size_t i = 0; i < un.rows(); ++i)
        for (std::size_t j = 0; j < un.cols(); ++j) un(i, j) = 0.0f;
    const WeightMap w({1, 4, 4, 8}, tensors);
    // All logits tie at zero: lowest id (EOS) wins and ends generation.
    const std::vector<TokenId> prompt = {1, 3};
    EXPECT_EQ(greedy_decode(w, prompt, 10), (std::vector<TokenId>{1, 3, kEosToken}));
    EXPECT_EQ(greedy_decode(w, prompt, 0), prompt);
}

TEST(AblateWeights, ZeroesOnlyTheNeuronsParameters) {
    const WeightMap w = random_model({1, 4, 6, 8}, 5);
    const WeightMap a = ablate_weights(w, NeuronSet({{0, NeuronKind::fwd_up, 1}, {0, NeuronKind::attn_v, 3}}));
    for (const auto& [name, m] : w.tensors()) {
        const Matrix& b = a.at(name);
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) {
                const bool hit = ((name == mlp_up_name(0) || name == mlp_gate_name(0)) && j == 1) ||
                                 (name == attn_v_name(0) && j == 3);
                EXPECT_EQ(b(i, j), hit ? 0.0f : m(i, j)) << name;
            }
    }
}
