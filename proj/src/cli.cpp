#include "snrf/cli.hpp"

#include <unistd.h>

#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "snrf/checkpoint.hpp"
#include "snrf/error.hpp"
#include "snrf/fixtures.hpp"
#include "snrf/linalg.hpp"
#include "snrf/merge.hpp"
#include "snrf/model.hpp"
#include "snrf/probe.hpp"
#include "snrf/profiler.hpp"
#include "snrf/theory.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;

namespace snrf {

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw NumericalError("sha256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file_bytes(path)); }

void RunManifest::add_input(const std::string& role, const fs::path& path) {
    inputs[role] = {path.string(), sha256_file(path)};
}

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["subcommand"] = subcommand;
    j["tool_version"] = kToolVersion;
    j["parameters"] = parameters;
    j["inputs"] = nlohmann::json::object();
    for (const auto& [role, entry] : inputs) j["inputs"][role] = {{"path", entry.first}, {"sha256", entry.second}};
    j["seeds"] = seeds;
    return j.dump(2) + "\n";
}

namespace {

fs::path staging_name(const fs::path& destination) {
    fs::path parent = destination.parent_path();
    if (parent.empty()) parent = ".";
    return parent / ("." + destination.filename().string() + ".tmp-" + std::to_string(::getpid()));
}

}  // namespace

StagedDir::StagedDir(fs::path destination) : destination_(std::move(destination)) {
    if (destination_.filename().empty()) destination_ = destination_.parent_path();
    staging_ = staging_name(destination_);
    std::error_code ec;
    fs::remove_all(staging_, ec);
    if (!fs::create_directories(staging_, ec) || ec) {
        throw FormatError(FormatErrc::io, "cannot create staging directory " + staging_.string());
    }
}

StagedDir::~StagedDir() {
    if (!committed_) {
        std::error_code ec;
        fs::remove_all(staging_, ec);
    }
}

void StagedDir::commit() {
    std::error_code ec;
    if (fs::exists(destination_)) fs::remove_all(destination_, ec);
    fs::rename(staging_, destination_, ec);
    if (ec) throw FormatError(FormatErrc::io, "cannot move output into " + destination_.string() + ": " + ec.message());
    committed_ = true;
}

StagedFiles::~StagedFiles() {
    if (!committed_) {
        for (const auto& [staging, _] : files_) {
            std::error_code ec;
            fs::remove(staging, ec);
        }
    }
}

fs::path StagedFiles::stage(const fs::path& destination) {
    files_.emplace_back(staging_name(destination), destination);
    return files_.back().first;
}

void StagedFiles::commit() {
    for (const auto& [staging, destination] : files_) {
        std::error_code ec;
        fs::rename(staging, destination, ec);
        if (ec) throw FormatError(FormatErrc::io, "cannot move output into " + destination.string() + ": " + ec.message());
    }
    committed_ = true;
}

namespace {

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    for (auto part : detail::split(text, ',')) {
        double v = 0.0;
        if (!detail::parse_number(part, v)) throw ParameterError("not a number in list: '" + std::string(part) + "'");
        out.push_back(v);
    }
    return out;
}

std::pair<std::size_t, std::size_t> parse_dims(const std::string& text) {
    const auto parts = detail::split(text, 'x');
    std::size_t r = 0, c = 0;
    if (parts.size() != 2 || !detail::parse_number(parts[0], r) || !detail::parse_number(parts[1], c)) {
        throw ParameterError("dims must be RxC, got '" + text + "'");
    }
    return {r, c};
}

std::string context_file_name(std::size_t c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "context_%04zu.csv", c);
    return buf;
}

void warn_unequal_lengths(const ProbeCorpus& corpus) {
    for (const auto& ctx : corpus.contexts) {
        if (ctx.size() != corpus.contexts.front().size()) {
            std::cerr << "snrf: warning: contexts have unequal lengths; impacts are not length-normalized\n";
            return;
        }
    }
}

// ---- subcommand bodies ----------------------------------------------------

struct ProfileArgs {
    std::string model, corpus, mode = "layer-local", select = "top:0.005", out;
};

void cmd_profile(const ProfileArgs& a) {
    const auto mode = parse_impact_mode(a.mode);
    const auto selector = Selector::parse(a.select);
    const WeightMap weights = load_checkpoint(a.model);
    const ProbeCorpus corpus = load_corpus(a.corpus, weights.config().vocab);
    warn_unequal_lengths(corpus);

    std::vector<ImpactReport> reports;
    for (std::size_t c = 0; c < corpus.contexts.size(); ++c) {
        reports.push_back(profile_context(weights, c, corpus.contexts[c], mode));
    }
    const NeuronSet ctx = context_neurons(reports, selector);

    RunManifest m;
    m.subcommand = "profile";
    m.parameters = {{"mode", std::string(to_string(mode))}, {"select", selector.to_string()}};
    m.add_input("model", a.model);
    m.add_input("corpus", a.corpus);

    StagedDir out(a.out);
    fs::create_directories(out.path() / "impacts");
    for (const auto& r : reports) write_file_text(out.path() / "impacts" / context_file_name(r.context_id), format_impact_report(r));
    save_neuron_set(ctx, out.path() / "context_neurons.tsv");
    write_file_text(out.path() / "histogram.csv", histogram_csv(layer_module_histogram(ctx), weights.config()));
    write_file_text(out.path() / "manifest.json", m.to_json());
    out.commit();
    std::cout << "context neurons: " << ctx.size() << " of " << NeuronSet::all(weights.config()).size() << "\n";
}

struct SharedArgs {
    std::string set_a, set_b, out;
};

void cmd_shared(const SharedArgs& a) {
    const NeuronSet sa = load_neuron_set(a.set_a);
    const NeuronSet sb = load_neuron_set(a.set_b);
    const NeuronSet shared = shared_neurons(sa, sb);
    const OverlapStats stats = overlap_stats(sa, sb);

    RunManifest m;
    m.subcommand = "shared";
    m.add_input("set_a", a.set_a);
    m.add_input("set_b", a.set_b);

    StagedDir out(a.out);
    save_neuron_set(shared, out.path() / "shared.tsv");
    write_file_text(out.path() / "overlap.json", overlap_stats_json(stats));
    write_file_text(out.path() / "histogram.csv", histogram_csv(layer_module_histogram(shared)));
    write_file_text(out.path() / "manifest.json", m.to_json());
    out.commit();
    std::cout << "shared " << stats.shared << " of union " << stats.union_size << " ("
              << detail::format_double(stats.shared_pct) << "%)\n";
}

struct AblateArgs {
    std::string model, corpus, set, budget_from, out;
    std::size_t draws = 20;
    std::uint64_t seed = 0;
};

double output_delta(const WeightMap& weights, const ForwardResult& intact, std::span<const TokenId> ctx,
                    const NeuronSet& set) {
    const Intervention iv = Intervention::deactivate(set);
    const auto ablated = forward(weights, ctx, std::span(&iv, 1));
    return std::sqrt(frobenius_norm_squared(subtract(intact.hidden, ablated.hidden)));
}

void cmd_ablate_eval(const AblateArgs& a) {
    if (a.set.empty() && a.budget_from.empty()) throw ParameterError("ablate-eval needs --set and/or --random-budget-from");
    if (a.draws == 0 && a.set.empty()) throw ParameterError("--draws must be >= 1");
    const WeightMap weights = load_checkpoint(a.model);
    const ProbeCorpus corpus = load_corpus(a.corpus, weights.config().vocab);

    RunManifest m;
    m.subcommand = "ablate-eval";
    m.add_input("model", a.model);
    m.add_input("corpus", a.corpus);

    std::optional<NeuronSet> deact;
    if (!a.set.empty()) {
        deact = load_neuron_set(a.set);
        deact->validate(weights.config());
        m.add_input("set", a.set);
    }
    const NeuronSet budget_source = a.budget_from.empty() ? *deact : load_neuron_set(a.budget_from);
    if (!a.budget_from.empty()) m.add_input("random_budget_from", a.budget_from);
    const GroupCounts budget = layer_module_histogram(budget_source);

    std::vector<NeuronSet> random_sets;
    for (std::size_t d = 0; d < a.draws; ++d) {
        const std::uint64_t seed = a.seed + d;
        random_sets.push_back(random_neuron_set(budget, weights.config(), seed));
        m.seeds.push_back(seed);
    }
    m.parameters = {{"draws", a.draws}, {"seed", a.seed}};

    std::string summary = "context_id,deact_delta,random_mean,random_min,random_max\n";
    std::string draws_csv = "context_id,draw,delta\n";
    for (std::size_t c = 0; c < corpus.contexts.size(); ++c) {
        const auto& ctx = corpus.contexts[c];
        const auto intact = forward(weights, ctx);
        std::vector<double> deltas(random_sets.size());
        for (std::size_t d = 0; d < random_sets.size(); ++d) deltas[d] = output_delta(weights, intact, ctx, random_sets[d]);
        for (std::size_t d = 0; d < deltas.size(); ++d) {
            draws_csv += std::to_string(c) + "," + std::to_string(d) + "," + detail::format_double(deltas[d]) + "\n";
        }
        summary += std::to_string(c) + ",";
        summary += deact ? detail::format_double(output_delta(weights, intact, ctx, *deact)) : "";
        if (deltas.empty()) {
            summary += ",,,\n";
        } else {
            const double mean = std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(deltas.size());
            summary += "," + detail::format_double(mean) + "," +
                       detail::format_double(*std::min_element(deltas.begin(), deltas.end())) + "," +
                       detail::format_double(*std::max_element(deltas.begin(), deltas.end())) + "\n";
        }
    }

    StagedDir out(a.out);
    write_file_text(out.path() / "deltas.csv", summary);
    write_file_text(out.path() / "random_draws.csv", draws_csv);
    write_file_text(out.path() / "manifest.json", m.to_json());
    out.commit();
}

struct AmplifyArgs {
    std::string model, corpus, neuron, vocab, out;
    double lambda = 1.0;
    std::size_t max_new = 16;
    std::size_t top = 0;
};

void cmd_amplify(const AmplifyArgs& a) {
    const NeuronId neuron = NeuronId::parse(a.neuron);
    if (!(a.lambda > 0.0)) throw ParameterError("--lambda must be > 0");
    const WeightMap weights = load_checkpoint(a.model);
    neuron.validate(weights.config());
    const ProbeCorpus corpus = load_corpus(a.corpus, weights.config().vocab);
    std::map<TokenId, std::string> names;
    if (!a.vocab.empty()) names = load_vocab_names(a.vocab);

    const auto prompts = probe_prompts(corpus);
    const auto amplified = amplified_generate(weights, prompts, neuron, a.lambda, a.max_new);
    const auto baseline = amplified_generate(weights, prompts, neuron, 1.0, a.max_new);
    FrequencyReport report = token_frequency(amplified, baseline, names);
    report.neuron = neuron;
    report.lambda = a.lambda;

    RunManifest m;
    m.subcommand = "amplify";
    m.parameters = {{"neuron", neuron.to_string()}, {"lambda", a.lambda}, {"max_new", a.max_new}, {"top", a.top}};
    m.add_input("model", a.model);
    m.add_input("corpus", a.corpus);
    if (!a.vocab.empty()) m.add_input("vocab", a.vocab);

    std::string gens;
    for (const auto& g : amplified) {
        for (std::size_t i = 0; i < g.size(); ++i) gens += (i ? " " : "") + std::to_string(g[i]);
        gens += "\n";
    }

    StagedDir out(a.out);
    export_report(report, out.path() / "frequency.csv",
                  a.top > 0 ? std::optional<std::size_t>(a.top) : std::nullopt);
    write_file_text(out.path() / "generations.txt", gens);
    write_file_text(out.path() / "manifest.json", m.to_json());
    out.commit();
}

struct MergeArgs {
    std::string src, tgt, shared, method = "snrf", svd_order = "full-then-mask", out;
    std::size_t rank = 0;
    double beta = 0.0;
    double drop_prob = 0.0;
    std::uint64_t seed = 0;
    bool allow_beta_override = false;
};

void cmd_merge(const MergeArgs& a) {
    MergeConfig cfg;
    cfg.method = parse_merge_method(a.method);
    cfg.svd_order = parse_svd_order(a.svd_order);
    cfg.beta = a.beta;
    cfg.allow_beta_override = a.allow_beta_override;
    cfg.dare_drop_prob = a.drop_prob;
    cfg.seed = a.seed;
    if (cfg.method == MergeMethod::snrf) {
        if (a.shared.empty()) throw ParameterError("--shared is required for --method snrf");
        if (a.rank == 0) throw ParameterError("--rank is required for --method snrf");
    }
    cfg.rank = a.rank == 0 ? 8 : a.rank;

    const WeightMap src = load_checkpoint(a.src);
    const WeightMap tgt = load_checkpoint(a.tgt);
    require_same_config(src, tgt);

    RunManifest m;
    m.subcommand = "merge";
    m.add_input("src", a.src);
    m.add_input("tgt", a.tgt);
    m.parameters = {{"method", std::string(to_string(cfg.method))},
                    {"beta", cfg.beta},
                    {"allow_beta_override", cfg.allow_beta_override}};
    if (cfg.method == MergeMethod::snrf) {
        cfg.shared = load_neuron_set(a.shared);
        m.add_input("shared", a.shared);
        m.parameters["rank"] = cfg.rank;
        m.parameters["svd_order"] = std::string(to_string(cfg.svd_order));
    }
    if (cfg.method == MergeMethod::dare) {
        m.parameters["drop_prob"] = cfg.dare_drop_prob;
        m.seeds.push_back(cfg.seed);
    }

    const WeightMap merged = merge(src, tgt, cfg);

    StagedFiles files;
    save_checkpoint(merged, files.stage(a.out));
    write_file_text(files.stage(a.out + ".manifest.json"), m.to_json());
    files.commit();
}

struct TheoryArgs {
    std::size_t scenarios = 500;
    std::string dims = "8x6", betas = "0.01,0.05,0.1", out;
    std::size_t s_size = 4, rank = 2;
    double epsilon = 0.1, eta = 0.5, mu_s = 1.0, mu_perp = 10.0;
    std::uint64_t seed = 0;
};

void cmd_validate_theory(const TheoryArgs& a) {
    SweepConfig cfg;
    cfg.scenarios = a.scenarios;
    std::tie(cfg.rows, cfg.cols) = parse_dims(a.dims);
    cfg.s_size = a.s_size;
    cfg.epsilon = a.epsilon;
    cfg.eta = a.eta;
    cfg.mu_s = a.mu_s;
    cfg.mu_perp = a.mu_perp;
    cfg.rank = a.rank;
    cfg.betas = parse_double_list(a.betas);
    cfg.seed = a.seed;
    cfg.validate();

    const auto rows = run_sweep(cfg);
    const auto summary = summarize(rows);

    RunManifest m;
    m.subcommand = "validate-theory";
    m.parameters = {{"scenarios", cfg.scenarios}, {"dims", a.dims},      {"s_size", cfg.s_size},
                    {"epsilon", cfg.epsilon},     {"eta", cfg.eta},      {"mu_s", cfg.mu_s},
                    {"mu_perp", cfg.mu_perp},     {"rank", cfg.rank},    {"betas", cfg.betas}};
    for (std::size_t i = 0; i < cfg.scenarios; ++i) m.seeds.push_back(cfg.seed + i);

    StagedFiles files;
    write_file_text(files.stage(a.out), format_sweep_csv(cfg, rows));
    write_file_text(files.stage(a.out + ".manifest.json"), m.to_json());
    files.commit();

    std::cout << "rows " << summary.rows << " gap_holds " << summary.gap_holds << " ("
              << detail::format_double(100.0 * summary.gap_pass_rate()) << "%) condition_holds "
              << summary.condition_holds << " improvement_holds " << summary.improvement_holds
              << " implication_violations " << summary.implication_violations << "\n";
}

struct InitModelArgs {
    std::size_t n_layers = 2, d_model = 8, d_inter = 16, vocab = 32;
    std::uint64_t seed = 0;
    std::string perturb_from, out;
    double noise = 0.1;
};

void cmd_init_model(const InitModelArgs& a) {
    WeightMap w = [&] {
        if (!a.perturb_from.empty()) return perturbed_model(load_checkpoint(a.perturb_from), a.noise, a.seed);
        return random_model({a.n_layers, a.d_model, a.d_inter, a.vocab}, a.seed);
    }();
    StagedFiles files;
    save_checkpoint(w, files.stage(a.out));
    files.commit();
}

struct InitCorpusArgs {
    std::size_t vocab = 32, contexts = 10, problem_len = 5, rationale_len = 6;
    std::uint64_t seed = 0;
    std::string out;
};

void cmd_init_corpus(const InitCorpusArgs& a) {
    const auto corpus = random_corpus(a.vocab, a.contexts, a.problem_len, a.rationale_len, a.seed);
    StagedFiles files;
    write_file_text(files.stage(a.out), format_corpus(corpus));
    files.commit();
}

void report_error(const std::string& category, const std::string& message) {
    std::string line = message;
    for (char& c : line) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    std::cerr << "snrf: error: " << category << ": " << line << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Shared-neuron profiling and low-rank fusion toolkit", "snrf"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    ProfileArgs profile;
    auto* sp = app.add_subcommand("profile", "Score neurons per context and select the context-neuron set");
    sp->add_option("--model", profile.model, "checkpoint path")->required();
    sp->add_option("--corpus", profile.corpus, "probe corpus path")->required();
    sp->add_option("--mode", profile.mode, "layer-local | full")->capture_default_str();
    sp->add_option("--select", profile.select, "top:P | abs:SIGMA")->capture_default_str();
    sp->add_option("--out", profile.out, "output directory")->required();

    SharedArgs shared;
    auto* ss = app.add_subcommand("shared", "Intersect two neuron sets and report overlap");
    ss->add_option("--set-a", shared.set_a)->required();
    ss->add_option("--set-b", shared.set_b)->required();
    ss->add_option("--out", shared.out)->required();

    AblateArgs ablate;
    auto* sa = app.add_subcommand("ablate-eval", "Output deltas of Deact vs equal-budget Random Deact");
    sa->add_option("--model", ablate.model)->required();
    sa->add_option("--corpus", ablate.corpus)->required();
    sa->add_option("--set", ablate.set, "neuron set to deactivate");
    sa->add_option("--random-budget-from", ablate.budget_from, "neuron set whose layer-module budget random sets copy");
    sa->add_option("--draws", ablate.draws, "number of random sets")->capture_default_str();
    sa->add_option("--seed", ablate.seed)->capture_default_str();
    sa->add_option("--out", ablate.out)->required();

    AmplifyArgs amplify;
    auto* sm = app.add_subcommand("amplify", "Token frequencies of greedy generations under neuron amplification");
    sm->add_option("--model", amplify.model)->required();
    sm->add_option("--corpus", amplify.corpus)->required();
    sm->add_option("--neuron", amplify.neuron, "L:KIND:IDX")->required();
    sm->add_option("--lambda", amplify.lambda)->required();
    sm->add_option("--max-new", amplify.max_new)->capture_default_str();
    sm->add_option("--vocab", amplify.vocab, "id<TAB>string sidecar");
    sm->add_option("--top", amplify.top, "keep only the first K rows (0 = all)")->capture_default_str();
    sm->add_option("--out", amplify.out)->required();

    MergeArgs merge_args;
    auto* sg = app.add_subcommand("merge", "Merge a source checkpoint into a target");
    sg->add_option("--src", merge_args.src)->required();
    sg->add_option("--tgt", merge_args.tgt)->required();
    sg->add_option("--shared", merge_args.shared, "shared neuron set (snrf)");
    sg->add_option("--method", merge_args.method, "snrf | linear | dare")->capture_default_str();
    sg->add_option("--rank", merge_args.rank, "truncation rank (snrf)");
    sg->add_option("--beta", merge_args.beta)->required();
    sg->add_option("--drop-prob", merge_args.drop_prob)->capture_default_str();
    sg->add_option("--seed", merge_args.seed)->capture_default_str();
    sg->add_option("--svd-order", merge_args.svd_order, "full-then-mask | mask-then-svd")->capture_default_str();
    sg->add_flag("--allow-beta-override", merge_args.allow_beta_override, "accept beta outside [0, 1]");
    sg->add_option("--out", merge_args.out)->required();

    TheoryArgs theory;
    auto* st = app.add_subcommand("validate-theory", "Sweep quadratic scenarios and check the loss-gap bound");
    st->add_option("--scenarios", theory.scenarios)->capture_default_str();
    st->add_option("--dims", theory.dims, "RxC")->capture_default_str();
    st->add_option("--s-size", theory.s_size)->capture_default_str();
    st->add_option("--epsilon", theory.epsilon)->capture_default_str();
    st->add_option("--eta", theory.eta)->capture_default_str();
    st->add_option("--mu-s", theory.mu_s)->capture_default_str();
    st->add_option("--mu-perp", theory.mu_perp)->capture_default_str();
    st->add_option("--rank", theory.rank)->capture_default_str();
    st->add_option("--betas", theory.betas, "comma-separated")->capture_default_str();
    st->add_option("--seed", theory.seed)->capture_default_str();
    st->add_option("--out", theory.out)->required();

    InitModelArgs init_model;
    auto* si = app.add_subcommand("init-model", "Write a seeded random (or perturbed) toy checkpoint");
    si->add_option("--n-layers", init_model.n_layers)->capture_default_str();
    si->add_option("--d-model", init_model.d_model)->capture_default_str();
    si->add_option("--d-inter", init_model.d_inter)->capture_default_str();
    si->add_option("--vocab", init_model.vocab)->capture_default_str();
    si->add_option("--seed", init_model.seed)->capture_default_str();
    si->add_option("--perturb-from", init_model.perturb_from, "add seeded noise to this checkpoint instead");
    si->add_option("--noise", init_model.noise)->capture_default_str();
    si->add_option("--out", init_model.out)->required();

    InitCorpusArgs init_corpus;
    auto* sc = app.add_subcommand("init-corpus", "Write a seeded random probe corpus");
    sc->add_option("--vocab", init_corpus.vocab)->capture_default_str();
    sc->add_option("--contexts", init_corpus.contexts)->capture_default_str();
    sc->add_option("--problem-len", init_corpus.problem_len)->capture_default_str();
    sc->add_option("--rationale-len", init_corpus.rationale_len)->capture_default_str();
    sc->add_option("--seed", init_corpus.seed)->capture_default_str();
    sc->add_option("--out", init_corpus.out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("parameter", e.what());
        return static_cast<int>(ErrorCategory::parameter);
    }

    try {
        if (*sp) cmd_profile(profile);
        else if (*ss) cmd_shared(shared);
        else if (*sa) cmd_ablate_eval(ablate);
        else if (*sm) cmd_amplify(amplify);
        else if (*sg) cmd_merge(merge_args);
        else if (*st) cmd_validate_theory(theory);
        else if (*si) cmd_init_model(init_model);
        else if (*sc) cmd_init_corpus(init_corpus);
    } catch (const Error& e) {
        report_error(e.category_name(), e.what());
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        report_error("input-format", e.what());
        return static_cast<int>(ErrorCategory::input_format);
    }
    return 0;
}

}  // namespace snrf
