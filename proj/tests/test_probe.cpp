#include <gtest/gtest.h>

#include "oracle.hpp"
#include "snrf/error.hpp"
#include "snrf/fixtures.hpp"
#include "snrf/probe.hpp"

using namespace snrf;

TEST(ProbePrompts, CutAfterFirstSep) {
    ProbeCorpus c;
    c.contexts = {{1, 5, 2, 7, 2, 8}, {1, 6, 6}, {2, 9}};
    const auto p = probe_prompts(c);
    EXPECT_EQ(p[0], (std::vector<TokenId>{1, 5, 2}));
    EXPECT_EQ(p[1], (std::vector<TokenId>{1, 6, 6}));
    EXPECT_EQ(p[2], (std::vector<TokenId>{2}));
}

TEST(Amplify, LambdaOneReproducesPlainDecode) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const WeightMap w = random_model({2, 8, 16, 32}, seed);
        const auto prompts = probe_prompts(random_corpus(32, 5, 4, 4, seed));
        const auto gens = amplified_generate(w, prompts, {1, NeuronKind::fwd_up, 0}, 1.0, 10);
        for (std::size_t i = 0; i < prompts.size(); ++i) {
            auto full = oracle::naive_decode(w, prompts[i], 10);
            EXPECT_EQ(gens[i], std::vector<TokenId>(full.begin() + static_cast<long>(prompts[i].size()), full.end()));
        }
    }
}

TEST(Amplify, LargeLambdaChangesSomething) {
    const WeightMap w = random_model({2, 8, 16, 32}, 0);
    const auto prompts = probe_prompts(random_corpus(32, 10, 4, 4, 0));
    const auto base = amplified_generate(w, prompts, {1, NeuronKind::fwd_up, 0}, 1.0, 8);
    bool changed = false;
    for (std::uint32_t k = 0; k < 16 && !changed; ++k) {
        changed = amplified_generate(w, prompts, {1, NeuronKind::fwd_up, k}, 50.0, 8) != base;
    }
    EXPECT_TRUE(changed);
}

TEST(Amplify, RejectsBadLambdaAndNeuron) {
    const WeightMap w = random_model({1, 4, 4, 8}, 0);
    const std::vector<std::vector<TokenId>> prompts = {{1, 2}};
    EXPECT_THROW(amplified_generate(w, prompts, {0, NeuronKind::attn_q, 0}, 0.0, 4), ParameterError);
    EXPECT_THROW(amplified_generate(w, prompts, {0, NeuronKind::attn_q, 9}, 2.0, 4), ParameterError);
}

TEST(Frequency, MatchesFlatScanAndConservesTotals) {
    const std::vector<std::vector<TokenId>> gens = {{4, 4, 5, 0}, {7, 4}, {}};
    const std::vector<std::vector<TokenId>> base = {{5, 5, 9}, {4}};
    const FrequencyReport r = token_frequency(gens, base, {{4, "four"}});
    const auto want = oracle::count_tokens(gens);
    const auto want_base = oracle::count_tokens(base);
    std::size_t total = 0, total_base = 0;
    for (const auto& row : r.rows) {
        EXPECT_EQ(row.count, want.contains(row.token) ? want.at(row.token) : 0u);
        EXPECT_EQ(row.baseline, want_base.contains(row.token) ? want_base.at(row.token) : 0u);
        EXPECT_EQ(row.delta, static_cast<long long>(row.count) - static_cast<long long>(row.baseline));
        total += row.count;
        total_base += row.baseline;
    }
    EXPECT_EQ(total, 6u);
    EXPECT_EQ(r.total_count(), 6u);
    EXPECT_EQ(total_base, 4u);
    ASSERT_EQ(r.rows.size(), 5u);
    EXPECT_EQ(r.rows[0].token, 4u);
    EXPECT_EQ(r.rows[0].display, "four");
    // Ties on count resolve by token id.
    EXPECT_EQ(r.rows[1].token, 0u);
    EXPECT_EQ(r.rows[2].token, 5u);
}

TEST(Frequency, CsvRoundTripAndTop) {
    const FrequencyReport r = token_frequency({{3, 3, 8}}, {{8}}, {{3, "a,\"b\""}});
    EXPECT_EQ(parse_frequency_rows(format_frequency_report(r)), r.rows);
    const auto top = parse_frequency_rows(format_frequency_report(r, 1));
    ASSERT_EQ(top.size(), 1u);
    EXPECT_EQ(top[0].token, 3u);
    EXPECT_THROW(parse_frequency_rows("nope\n"), FormatError);
}
