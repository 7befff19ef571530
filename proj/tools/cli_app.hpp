#pragma once

// The cfdx command line, as a function so tests can drive it in-process.
//
// Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.
// Every random choice derives from --seed:
//   stream 0  synthetic model      stream 1  vignettes / random evidence
//   stream 2+ Monte Carlo runs in crosscheck (one per case and disease)

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cfdx/cfdx.hpp"

namespace cfdx::cli {

struct ModelSource {
    std::string path;
    std::size_t risks = 10, diseases = 30, symptoms = 50;

    void add_options(CLI::App* app) {
        app->add_option("--model", path, "model JSON (omit to use a synthetic model)")->check(CLI::ExistingFile);
        app->add_option("--risks", risks, "synthetic model: risk factors")->capture_default_str();
        app->add_option("--diseases", diseases, "synthetic model: diseases")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--symptoms", symptoms, "synthetic model: symptoms")->capture_default_str()->check(CLI::PositiveNumber);
    }

    SyntheticConfig config() const {
        SyntheticConfig c;
        c.risks = risks;
        c.diseases = diseases;
        c.symptoms = symptoms;
        return c;
    }

    NoisyOrNetwork load(std::uint64_t seed) const {
        if (!path.empty()) return load_network(path);
        return synthetic_network(config(), derive_seed(seed, 0));
    }

    nlohmann::json describe(std::uint64_t seed) const {
        if (!path.empty()) return {{"path", path}};
        return {{"synthetic", to_json(config())}, {"seed", derive_seed(seed, 0)}};
    }
};

inline void emit(std::ostream& out, const nlohmann::json& j) { out << j.dump(2) << '\n'; }

inline nlohmann::json violations_json(const ValidationReport& rep) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& v : rep.violations) arr.push_back({{"kind", to_string(v.kind)}, {"node", v.node}, {"detail", v.detail}});
    return arr;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"noisy-OR counterfactual diagnosis"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    unsigned threads = 0;
    std::string format = "json";
    app.add_option("--seed", seed, "master seed")->capture_default_str();
    app.add_option("--threads", threads, "worker threads (0: $CFDX_THREADS or all cores)")->capture_default_str();
    app.add_option("--format", format, "output format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();

    // validate
    auto* validate = app.add_subcommand("validate", "check a model (and optionally evidence)");
    std::string v_model, v_evidence;
    validate->add_option("--model", v_model, "model JSON")->required()->check(CLI::ExistingFile);
    validate->add_option("--evidence", v_evidence, "evidence JSON")->check(CLI::ExistingFile);

    // diagnose
    auto* diagnose = app.add_subcommand("diagnose", "rank diseases for one evidence file");
    std::string d_model, d_evidence, d_measure = "sufficiency";
    std::size_t d_top = 0, max_positive = 25, max_risks = 20;
    diagnose->add_option("--model", d_model, "model JSON")->required()->check(CLI::ExistingFile);
    diagnose->add_option("--evidence", d_evidence, "evidence JSON")->required()->check(CLI::ExistingFile);
    diagnose->add_option("--measure", d_measure, "ranking measure")
        ->check(CLI::IsMember({"posterior", "sufficiency", "disablement"}))
        ->capture_default_str();
    diagnose->add_option("--top-k", d_top, "keep only the first k entries (0: all)")->capture_default_str();
    diagnose->add_option("--max-positive", max_positive, "cap on positive findings")->capture_default_str()->check(CLI::PositiveNumber);
    diagnose->add_option("--max-risks", max_risks, "cap on unobserved risk factors")->capture_default_str()->check(CLI::PositiveNumber);
    double max_error = InferenceOptions{}.max_rounding_error;
    diagnose->add_option("--max-error", max_error, "largest certified relative rounding error accepted")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    // generate
    auto* generate = app.add_subcommand("generate", "sample vignettes as JSON lines");
    ModelSource g_source;
    g_source.add_options(generate);
    std::size_t g_n = 100;
    bool g_reveal = false, g_prior = false;
    generate->add_option("-n,--count", g_n, "number of vignettes")->capture_default_str()->check(CLI::PositiveNumber);
    generate->add_flag("--reveal-all", g_reveal, "report every risk and symptom");
    generate->add_flag("--prior-weighted", g_prior, "draw true diseases by prior instead of uniformly");

    // benchmark
    auto* benchmark = app.add_subcommand("benchmark", "generate vignettes and score every measure");
    ModelSource b_source;
    b_source.add_options(benchmark);
    std::size_t b_n = 2000, b_k = 20;
    std::string b_vignettes, b_accuracy_csv;
    bool b_prior = false;
    benchmark->add_option("-n,--count", b_n, "number of vignettes")->capture_default_str()->check(CLI::PositiveNumber);
    benchmark->add_option("-k,--top-k", b_k, "largest k of the accuracy curve")->capture_default_str()->check(CLI::PositiveNumber);
    benchmark->add_option("--vignettes", b_vignettes, "read vignettes from JSON lines instead of sampling")
        ->check(CLI::ExistingFile);
    benchmark->add_option("--accuracy-csv", b_accuracy_csv, "also write the top-k table to this file");
    benchmark->add_flag("--prior-weighted", b_prior, "draw true diseases by prior instead of uniformly");

    // crosscheck
    auto* crosscheck = app.add_subcommand("crosscheck", "closed forms vs enumeration oracle vs Monte Carlo");
    std::string c_model, c_evidence;
    std::size_t c_cases = 5, c_samples = 100000;
    crosscheck->add_option("--model", c_model, "model JSON")->required()->check(CLI::ExistingFile);
    crosscheck->add_option("--evidence", c_evidence, "evidence JSON (omit for random evidence)")->check(CLI::ExistingFile);
    crosscheck->add_option("--cases", c_cases, "random evidence sets")->capture_default_str()->check(CLI::PositiveNumber);
    crosscheck->add_option("--samples", c_samples, "Monte Carlo samples per disease (0: skip)")->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic model");
    ModelSource s_source;
    s_source.add_options(synth);

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*validate) {
            const auto net = network_from_json(read_json_file(v_model));
            const auto rep = validate_network(net);
            nlohmann::json j = {{"valid", rep.ok()}, {"violations", violations_json(rep)}};
            bool ok = rep.ok();
            if (ok && !v_evidence.empty()) {
                const Model model(net);
                const auto problems = validate_evidence(model, load_evidence(v_evidence));
                j["evidence_problems"] = problems;
                ok = problems.empty();
                j["valid"] = ok;
            }
            if (format == "csv") {
                out << "kind,node,detail\n";
                for (const auto& v : rep.violations) out << to_string(v.kind) << ',' << v.node << ",\"" << v.detail << "\"\n";
            } else {
                emit(out, j);
            }
            if (!ok) err << rep.summary();
            return ok ? 0 : 1;
        }

        if (*diagnose) {
            const Model model(load_network(d_model));
            const Evidence ev = load_evidence(d_evidence);
            InferenceOptions opts;
            opts.threads = threads;
            opts.max_positive = max_positive;
            opts.max_unobserved_risks = max_risks;
            opts.max_rounding_error = max_error;
            auto ranking = rank_diseases(model, ev, measure_from_string(d_measure), opts);
            if (d_top > 0 && ranking.entries.size() > d_top) ranking.entries.resize(d_top);
            if (format == "csv") {
                out << std::setprecision(17) << "rank,disease,value,posterior\n";
                for (std::size_t i = 0; i < ranking.entries.size(); ++i)
                    out << i + 1 << ',' << ranking.entries[i].disease << ',' << ranking.entries[i].value << ','
                        << ranking.entries[i].posterior << '\n';
            } else {
                emit(out, to_json(ranking));
            }
            return 0;
        }

        if (*generate) {
            const Model model(g_source.load(seed));
            MaskingPolicy policy;
            policy.reveal_all = g_reveal;
            if (g_prior) policy.choice = DiseaseChoice::prior_weighted;
            const auto vignettes = generate_vignettes(model, g_n, derive_seed(seed, 1), policy);
            if (format == "csv") {
                out << "true_disease,rarity,positive,negative\n";
                for (const auto& v : vignettes) {
                    out << v.true_disease << ",\"" << v.rarity << "\",\"";
                    for (const auto& s : v.evidence.positive) out << s << ' ';
                    out << "\",\"";
                    for (const auto& s : v.evidence.negative) out << s << ' ';
                    out << "\"\n";
                }
            } else {
                write_jsonl(out, vignettes);
            }
            return 0;
        }

        if (*benchmark) {
            const Model model(b_source.load(seed));
            MaskingPolicy policy;
            if (b_prior) policy.choice = DiseaseChoice::prior_weighted;
            std::vector<Vignette> vignettes;
            if (!b_vignettes.empty()) {
                std::ifstream in(b_vignettes);
                vignettes = read_jsonl(in);
            } else {
                vignettes = generate_vignettes(model, b_n, derive_seed(seed, 1), policy);
            }
            EvaluationOptions eopts;
            eopts.threads = threads;
            auto report = evaluate_topk(model, vignettes,
                                        {MeasureKind::posterior, MeasureKind::sufficiency, MeasureKind::disablement}, b_k,
                                        eopts);
            report.run_info = {{"model", b_source.describe(seed)},
                               {"seed", seed},
                               {"policy", to_json(policy)},
                               {"vignette_source", b_vignettes.empty() ? "sampled" : b_vignettes}};
            if (!b_accuracy_csv.empty()) {
                std::ofstream f(b_accuracy_csv);
                if (!f) throw InvalidArgument("cannot write '" + b_accuracy_csv + "'");
                f << accuracy_csv(report);
            }
            if (format == "csv") {
                out << report_csv(report);
            } else {
                emit(out, to_json(report));
            }
            return 0;
        }

        if (*crosscheck) {
            const Model model(load_network(c_model));
            std::vector<Evidence> cases;
            if (!c_evidence.empty()) {
                cases.push_back(load_evidence(c_evidence));
            } else {
                Rng rng(derive_seed(seed, 1));
                for (std::size_t i = 0; i < c_cases; ++i) cases.push_back(random_evidence(model, rng));
            }
            const double tolerance = 1e-9, twin_tolerance = 1e-12;
            double max_rel = 0.0, max_twin = 0.0, max_z = 0.0;
            std::size_t low_ess = 0, mc_runs = 0;
            nlohmann::json rows = nlohmann::json::array();
            McOptions mopts;
            mopts.threads = threads;
            for (std::size_t c = 0; c < cases.size(); ++c) {
                const auto& ev = cases[c];
                const auto scores = score_evidence(model, ev);
                require_positive_likelihood(scores);
                for (std::size_t k = 0; k < model.num_diseases(); ++k) {
                    const auto& id = model.disease_id(k);
                    nlohmann::json row = {{"case", c}, {"disease", id}};
                    for (auto kind : all_measures) {
                        const double closed = pick(scores, k, kind);
                        const double oracle = measure_oracle(model, ev, id, kind);
                        const double dev = relative_deviation(closed, oracle);
                        max_rel = std::max(max_rel, dev);
                        row[to_string(kind)] = {{"closed_form", closed}, {"oracle", oracle}, {"relative_deviation", dev}};
                    }
                    const auto iv = disablement_intervention(model, k);
                    const auto a = counterfactual_query(model, ev, iv);
                    const auto t = counterfactual_query_twin(model, build_twin_network(model, iv, &ev), ev);
                    for (std::size_t i = 0; i < a.probability.size(); ++i)
                        max_twin = std::max(max_twin, std::fabs(a.probability[i] - t.probability[i]));
                    if (c_samples > 0) {
                        const auto mc = mc_estimate_measures(model, ev, id, c_samples,
                                                             derive_seed(seed, 2 + c * model.num_diseases() + k), mopts);
                        for (const auto& e : mc) {
                            const double closed = pick(scores, k, e.kind);
                            const double z = e.standard_error > 0.0 ? std::fabs(e.estimate - closed) / e.standard_error
                                                                    : (std::fabs(e.estimate - closed) > 1e-12 ? INFINITY : 0.0);
                            max_z = std::max(max_z, z);
                            if (e.low_ess_warning) ++low_ess;
                            ++mc_runs;
                            row[to_string(e.kind)]["monte_carlo"] = {{"estimate", e.estimate},
                                                                     {"standard_error", e.standard_error},
                                                                     {"effective_samples", e.effective_samples}};
                        }
                    }
                    rows.push_back(row);
                }
            }
            const bool ok = max_rel < tolerance && max_twin <= twin_tolerance;
            nlohmann::json j = {{"cases", cases.size()},
                                {"diseases", model.num_diseases()},
                                {"max_relative_deviation", max_rel},
                                {"relative_tolerance", tolerance},
                                {"twin_max_abs_deviation", max_twin},
                                {"ok", ok}};
            if (c_samples > 0)
                j["monte_carlo"] = {{"samples", c_samples}, {"runs", mc_runs}, {"max_z", max_z}, {"low_ess_runs", low_ess}};
            j["details"] = rows;
            if (format == "csv") {
                out << std::setprecision(17) << "max_relative_deviation,twin_max_abs_deviation,ok\n"
                    << max_rel << ',' << max_twin << ',' << (ok ? "true" : "false") << '\n';
            } else {
                emit(out, j);
            }
            return ok ? 0 : 1;
        }

        if (*synth) {
            emit(out, to_json(s_source.load(seed)));
            return 0;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

inline int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace cfdx::cli
