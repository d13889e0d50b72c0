// mdmvar: corpus generation, sampler fitting, training, variance
// decomposition, sampler benchmarking, SyRM checks and reporting.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mdmvar/bench.hpp"
#include "mdmvar/corpus.hpp"
#include "mdmvar/denoiser.hpp"
#include "mdmvar/error.hpp"
#include "mdmvar/ppots.hpp"
#include "mdmvar/report.hpp"
#include "mdmvar/syrm.hpp"
#include "mdmvar/trainer.hpp"
#include "mdmvar/variance.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace mdmvar;

namespace {

struct Common {
    std::uint64_t seed = 42;
    std::string out;
    int threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--seed", c.seed, "root seed")->capture_default_str();
    cmd->add_option("--out", c.out, "output directory")->required();
    cmd->add_option("--threads", c.threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

struct CorpusOpts {
    std::string path;
    int n = 256;
    int seq_len = 32;
    std::uint64_t data_seed = 1234;
};

void add_corpus(CLI::App* cmd, CorpusOpts& c) {
    cmd->add_option("--corpus", c.path, "corpus TSV (generated when omitted)");
    cmd->add_option("--n", c.n, "generated corpus size")->capture_default_str();
    cmd->add_option("--seq-len", c.seq_len, "generated sequence length")->capture_default_str();
    cmd->add_option("--data-seed", c.data_seed, "generated corpus seed")->capture_default_str();
}

CorpusSpec corpus_spec(const CorpusOpts& c) { return {c.n, c.seq_len, c.data_seed, c.path}; }

ordered_json corpus_json(const CorpusOpts& c) {
    return {{"path", c.path}, {"n", c.n}, {"seq_len", c.seq_len}, {"data_seed", c.data_seed}};
}

struct ModelOpts {
    std::string checkpoint;
    std::string init = "random";
    double init_scale = 0.05;
};

void add_model(CLI::App* cmd, ModelOpts& m) {
    cmd->add_option("--checkpoint", m.checkpoint, "denoiser checkpoint");
    cmd->add_option("--init", m.init, "zero|random when no checkpoint is given")
        ->capture_default_str()
        ->check(CLI::IsMember({"zero", "random"}));
    cmd->add_option("--init-scale", m.init_scale, "random init scale")->capture_default_str();
}

DenoiserParams model_for(const ModelOpts& m, const Corpus& corpus, std::uint64_t seed) {
    if (!m.checkpoint.empty()) return load_checkpoint(m.checkpoint);
    TrainConfig c;
    c.seed = seed;
    c.init_scale = m.init == "zero" ? 0.0 : m.init_scale;
    int max_len = 0;
    for (const auto& s : corpus) max_len = std::max(max_len, s.size());
    c.corpus.seq_len = max_len;
    return initial_params(c);
}

ordered_json model_json(const ModelOpts& m) {
    return {{"checkpoint", m.checkpoint}, {"init", m.init}, {"init_scale", m.init_scale}};
}

template <typename Fn>
std::string to_string_with(Fn&& fn) {
    std::ostringstream os;
    fn(os);
    return os.str();
}

ordered_json common_json(const Common& c) { return {{"seed", c.seed}, {"out", c.out}, {"threads", c.threads}}; }

// ---- gen-corpus ----

struct GenCorpusOpts {
    Common common;
    CorpusOpts corpus;
};

void run_gen_corpus(const GenCorpusOpts& o) {
    fs::create_directories(o.common.out);
    require(o.corpus.path.empty(), "gen-corpus: --corpus is an input flag; use --n/--seq-len");
    const Corpus corpus = generate_corpus(Vocab{}, o.corpus.n, o.corpus.seq_len, RngStream(o.common.seed));
    save_corpus(fs::path(o.common.out) / "corpus.tsv", corpus);
    ordered_json cfg = common_json(o.common);
    cfg["n"] = o.corpus.n;
    cfg["seq_len"] = o.corpus.seq_len;
    write_manifest(o.common.out, "gen-corpus", o.common.seed, cfg.dump());
}

// ---- fit-ppots ----

struct FitOpts {
    Common common;
    CorpusOpts corpus;
    ModelOpts model;
    int a = 15, b = 70, c = 15;
    int restarts = 20;
    std::string eligibility = "sft";
};

std::string scatter_svg(const Scatter& scatter, const EPRParams& params, const std::string& title) {
    PlotSeries pts{"empirical p (x b)", {}, {}, true, "#1f77b4"};
    const double b = static_cast<double>(scatter.size());
    for (const auto& p : scatter) {
        pts.x.push_back(p.t);
        pts.y.push_back(p.p_hat * b);
    }
    PlotSeries curve{"fitted EPR density", {}, {}, false, "#ff7f0e"};
    if (params.valid()) {
        const DensitySampler ds = DensitySampler::from_epr(params);
        for (int k = 0; k <= 200; ++k) {
            const double t = k / 200.0;
            curve.x.push_back(t);
            curve.y.push_back(ds.density().pdf(t));
        }
    }
    return svg_plot(title, "masking rate t", "density", {pts, curve});
}

void run_fit(const FitOpts& o) {
    fs::create_directories(o.common.out);
    const Corpus corpus = build_corpus(corpus_spec(o.corpus));
    const DenoiserParams params = model_for(o.model, corpus, o.common.seed);
    const RngStream root(o.common.seed);
    const Scatter scatter = estimate_scatter(params, corpus, {o.a, o.b, o.c}, root.derive("ppots", 0),
                                             parse_eligibility(o.eligibility), o.common.threads);
    EprFitOptions fo;
    fo.restarts = o.restarts;
    const EprFit fit = fit_epr(scatter, root.derive("ppots", 1), fo);
    const fs::path out(o.common.out);
    save_fit(out / "fit.json", fit, scatter);
    const std::vector<double> q = epr_grid_probs(fit.params, scatter);
    write_text(out / "scatter.csv", to_string_with([&](std::ostream& os) {
                   os << "t,g_hat,v_hat,p_hat,p_fit\n";
                   for (std::size_t j = 0; j < scatter.size(); ++j) {
                       const auto& p = scatter[j];
                       os << fmt17(p.t) << ',' << fmt17(p.g_hat) << ',' << fmt17(p.v_hat) << ',' << fmt17(p.p_hat)
                          << ',' << fmt17(q[j]) << '\n';
                   }
               }));
    write_text(out / "scatter_fit.svg", scatter_svg(scatter, fit.params, "Empirical p(t) and fitted EPR"));
    ordered_json cfg = common_json(o.common);
    cfg["corpus"] = corpus_json(o.corpus);
    cfg["model"] = model_json(o.model);
    cfg["a"] = o.a;
    cfg["b"] = o.b;
    cfg["c"] = o.c;
    cfg["restarts"] = o.restarts;
    cfg["eligibility"] = o.eligibility;
    write_manifest(out, "fit-ppots", o.common.seed, cfg.dump());
    std::cout << "kl " << fmt17(fit.kl) << (fit.degenerate ? " (flat scatter)" : "") << '\n';
}

// ---- train ----

struct TrainOpts {
    Common common;
    std::string config;
    std::string method;
    bool seed_given = false;
};

std::string loss_svg(const std::vector<std::pair<std::string, LossCurve>>& curves) {
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    std::vector<PlotSeries> series;
    std::vector<PlotNote> notes;
    for (std::size_t k = 0; k < curves.size(); ++k) {
        const auto& [label, c] = curves[k];
        PlotSeries s{label, {}, c.loss, false, colors[k % 10]};
        for (int st : c.step) s.x.push_back(st);
        series.push_back(std::move(s));
        const std::size_t n = c.loss.size();
        if (n == 0) continue;
        const std::size_t w = std::min<std::size_t>(5, n);
        double head = 0, tail = 0;
        for (std::size_t i = 0; i < w; ++i) {
            head += c.loss[i];
            tail += c.loss[n - w + i];
        }
        notes.push_back({double(c.step.front()), double(c.step[w - 1]), head / w, "first5 " + fmt17(head / w).substr(0, 6)});
        notes.push_back({double(c.step[n - w]), double(c.step.back()), tail / w, "last5 " + fmt17(tail / w).substr(0, 6)});
    }
    return svg_plot("Training loss", "step", "mean weighted loss", series, notes);
}

void run_train(const TrainOpts& o) {
    fs::create_directories(o.common.out);
    TrainConfig cfg = o.config.empty() ? TrainConfig{} : TrainConfig::load(o.config);
    if (!o.method.empty()) cfg = method_config(o.method, cfg);
    if (o.seed_given) cfg.seed = o.common.seed;
    cfg.threads = o.common.threads;
    cfg.validate();
    const fs::path out(o.common.out);
    const std::string method = o.method.empty() ? "custom" : o.method;
    {
        ordered_json m = ordered_json::parse(cfg.to_json());
        m["method"] = method;
        write_manifest(out, "train", cfg.seed, m.dump());
    }
    const auto start = std::chrono::steady_clock::now();
    TrainResult r;
    try {
        r = train(cfg);
    } catch (const NumericalError& e) {
        ordered_json diag{{"error", e.what()}, {"seed", cfg.seed}};
        write_text(out / "abort.json", diag.dump(2) + "\n");
        throw;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_text(out / "loss.csv", to_string_with([&](std::ostream& os) { r.log.write_csv(os); }));
    ordered_json summary = ordered_json::parse(r.log.summary_json());
    summary["method"] = method;
    summary["seed"] = cfg.seed;
    write_text(out / "summary.json", summary.dump(2) + "\n");
    write_text(out / "timing.json", ordered_json{{"wall_seconds", secs}}.dump(2) + "\n");
    save_checkpoint(out / "checkpoint.bin", r.params);
    LossCurve c;
    for (const auto& s : r.log.steps) {
        c.step.push_back(s.step);
        c.loss.push_back(s.loss);
        c.weight_mean.push_back(s.weight_mean);
    }
    write_text(out / "loss.svg", loss_svg({{method, c}}));
    std::cout << "first5 " << fmt17(r.log.summary.first5_mean) << " last5 " << fmt17(r.log.summary.last5_mean)
              << '\n';
}

// ---- run-matrix ----

struct MatrixOpts {
    Common common;
    std::string config;
    std::vector<std::string> methods{"standard", "ppots", "mirror", "ppots+mirror"};
    std::vector<std::uint64_t> seeds{42, 731, 20231};
    std::string budget = "both";
};

void run_run_matrix(const MatrixOpts& o) {
    fs::create_directories(o.common.out);
    TrainConfig base = o.config.empty() ? TrainConfig{} : TrainConfig::load(o.config);
    base.threads = o.common.threads;
    MatrixOptions mo;
    mo.raw = o.budget != "normalized";
    mo.normalized = o.budget != "raw";
    const fs::path out(o.common.out);
    ordered_json cfg = common_json(o.common);
    cfg["base"] = ordered_json::parse(base.to_json());
    cfg["methods"] = o.methods;
    cfg["seeds"] = o.seeds;
    cfg["budget"] = o.budget;
    write_manifest(out, "run-matrix", o.common.seed, cfg.dump());
    const auto rows = run_matrix(o.methods, o.seeds, base, mo);
    write_text(out / "matrix.csv", to_string_with([&](std::ostream& os) { write_matrix_csv(os, rows); }));
    write_text(out / "synergy.json", synergy_json(rows) + "\n");
    write_text(out / "timing.json", timing_json(rows) + "\n");
}

// ---- decompose ----

struct DecomposeOpts {
    Common common;
    CorpusOpts corpus;
    ModelOpts model;
    int a = 32, b = 32, c = 32;
    std::string design = "stratified";
    std::string eligibility = "sft";
};

void run_decompose(const DecomposeOpts& o) {
    fs::create_directories(o.common.out);
    const Corpus corpus = build_corpus(corpus_spec(o.corpus));
    const DenoiserParams params = model_for(o.model, corpus, o.common.seed);
    const VarianceReport rep =
        decompose(params, corpus, o.a, o.b, o.c, RngStream(o.common.seed).derive("decompose", 0),
                  parse_eligibility(o.eligibility), o.design == "iid" ? RateDesign::iid : RateDesign::stratified,
                  o.common.threads);
    const fs::path out(o.common.out);
    write_text(out / "decompose.json", rep.to_json() + "\n");
    write_text(out / "decompose.csv", to_string_with([&](std::ostream& os) {
                   os << "component,value,stderr\n";
                   os << "A," << fmt17(rep.comp_A) << ',' << fmt17(rep.stderr_A) << '\n';
                   os << "B," << fmt17(rep.comp_B) << ',' << fmt17(rep.stderr_B) << '\n';
                   os << "C," << fmt17(rep.comp_C) << ',' << fmt17(rep.stderr_C) << '\n';
                   os << "total," << fmt17(rep.total) << ',' << fmt17(rep.stderr_total) << '\n';
               }));
    ordered_json cfg = common_json(o.common);
    cfg["corpus"] = corpus_json(o.corpus);
    cfg["model"] = model_json(o.model);
    cfg["a"] = o.a;
    cfg["b"] = o.b;
    cfg["c"] = o.c;
    cfg["design"] = o.design;
    cfg["eligibility"] = o.eligibility;
    write_manifest(out, "decompose", o.common.seed, cfg.dump());
}

// ---- bench-samplers ----

struct BenchOpts {
    Common common;
    std::string gv;
    std::string fit;
    int draws = 100000;
    int bins = 10;
};

void run_bench(const BenchOpts& o) {
    fs::create_directories(o.common.out);
    require(!o.gv.empty() || !o.fit.empty(), "bench-samplers: supply --gv <preset> or --fit <fit.json>");
    std::optional<LoadedFit> loaded;
    if (!o.fit.empty()) loaded = load_fit(o.fit);
    const GVPair gv = !o.gv.empty() ? analytic_gv(o.gv) : scatter_gv(loaded->scatter);
    std::optional<EPRParams> epr;
    if (loaded) epr = loaded->fit.params;
    mdmvar::BenchOptions bo;
    bo.draws = o.draws;
    bo.pstar_bins = o.bins;
    bo.analytic = !o.gv.empty();
    const auto rows = bench_samplers(gv, epr, RngStream(o.common.seed).derive("bench", 0), bo);
    const fs::path out(o.common.out);
    write_text(out / "bench.csv", to_string_with([&](std::ostream& os) { write_bench_csv(os, rows); }));
    if (loaded) {
        write_text(out / "scatter_fit.svg", scatter_svg(loaded->scatter, loaded->fit.params, "Empirical p(t) and fitted EPR"));
    } else {
        // analytic pair: optimal density next to its 10-bin average
        const auto pstar = DensitySampler::from_function(
            [&](double t) { return std::sqrt(gv.g(t) * gv.g(t) + std::max(0.0, gv.v(t))); });
        const PiecewiseDensity binned = bin_averaged_optimal(gv.g, gv.v, o.bins);
        PlotSeries a{"p*", {}, {}, false, "#ff7f0e"}, b{"bin-averaged p*", {}, {}, false, "#1f77b4"};
        for (int k = 0; k <= 400; ++k) {
            const double t = std::min(k / 400.0, 1.0 - 1e-12);
            a.x.push_back(t);
            a.y.push_back(pstar.density().pdf(t));
            b.x.push_back(t);
            b.y.push_back(binned.pdf(t));
        }
        write_text(out / "samplers.svg", svg_plot("Optimal sampler for " + gv.name, "masking rate t", "density", {a, b}));
    }
    ordered_json cfg = common_json(o.common);
    cfg["gv"] = o.gv;
    cfg["fit"] = o.fit;
    cfg["draws"] = o.draws;
    cfg["bins"] = o.bins;
    write_manifest(out, "bench-samplers", o.common.seed, cfg.dump());
}

// ---- syrm-check ----

struct SyrmOpts {
    Common common;
    std::string config;
};

void run_syrm(const SyrmOpts& o) {
    fs::create_directories(o.common.out);
    GroupModel gm;
    DominanceOptions t3;
    int draws = 100000;
    double t_fixed = 0.5;
    double alpha_toy = 0.5;
    if (!o.config.empty()) {
        ordered_json j;
        try {
            j = ordered_json::parse(read_text(o.config));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("syrm-check: invalid JSON: ") + e.what());
        }
        require(j.is_object(), "syrm-check: config must be a JSON object");
        try {
            for (const auto& [k, v] : j.items()) {
                if (k == "model") gm = GroupModel::from_json(v.dump());
                else if (k == "threshold") t3.threshold = v.get<double>();
                else if (k == "t_lo") t3.dist.lo = v.get<double>();
                else if (k == "t_hi") t3.dist.hi = v.get<double>();
                else if (k == "mc_draws") draws = v.get<int>();
                else if (k == "t") t_fixed = v.get<double>();
                else if (k == "alpha") alpha_toy = v.get<double>();
                else throw ValidationError("syrm-check: unknown key '" + k + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("syrm-check: ") + e.what());
        }
    }
    gm.validate();
    const RngStream root(o.common.seed);
    const BatchLossSimulator sim(gm);
    ordered_json out;
    out["model"] = ordered_json::parse(gm.to_json());

    ordered_json th1;
    for (const auto strategy : {SyrmStrategy::resp, SyrmStrategy::syrm}) {
        const char* name = strategy == SyrmStrategy::resp ? "resp" : "syrm";
        const double closed = batch_loss_variance(gm, strategy, t_fixed);
        const RunningStats mc = sim.simulate(strategy, t_fixed, draws, root.derive("fixed_t_variance", int(strategy)));
        th1[name] = {{"t", t_fixed},
                     {"closed_form", closed},
                     {"mc", mc.variance()},
                     {"mc_stderr", mc.stderr_variance()},
                     {"within_3se", std::abs(mc.variance() - closed) <= 3 * mc.stderr_variance()}};
    }
    out["fixed_t_variance"] = th1;

    ordered_json th2;
    for (const auto strategy : {SyrmStrategy::resp, SyrmStrategy::syrm}) {
        const char* name = strategy == SyrmStrategy::resp ? "resp" : "syrm";
        const RunningStats mc = sim.simulate(strategy, t3.dist, draws, root.derive("rate_averaged_variance", int(strategy)));
        // E_t Var[L|t] is the within-t part; the MC variance also holds Var_t E[L|t],
        // which is zero here because E[L|t] does not depend on t.
        th2[name] = {{"quadrature", mask_noise_quadrature(gm, strategy, t3.dist)},
                     {"closed_form", mask_noise_closed_form(gm, strategy, t3.dist)},
                     {"mc", mc.variance()},
                     {"mc_stderr", mc.stderr_variance()}};
    }
    th2["B"] = t3.dist.mean_inv();
    out["rate_averaged_variance"] = th2;

    out["dominance"] = ordered_json::parse(check_syrm_dominance(gm, t3).to_json());

    double max_gap = 0.0;
    for (int k = 0; k < std::min(draws, 10000); ++k) {
        RngStream rng = root.derive("mixture_identity", k);
        const double t = t3.dist.draw(rng);
        const auto d = sim.draw(t, rng);
        max_gap = std::max(max_gap, std::abs(d.L_syrm - (d.alpha * d.L_resp + (1 - d.alpha) * d.L_coord)));
    }
    out["mixture_identity"] = {{"max_abs_gap", max_gap}, {"draws", std::min(draws, 10000)}};

    const ShiftCheck sc = quadratic_shift({{2, 0, 0, 2}, {0, 0}}, {{2, 0, 0, 2}, {1, 0}}, alpha_toy);
    out["optimum_shift"] = {{"alpha", alpha_toy},
                       {"exact_shift", sc.exact_shift},
                       {"bound", sc.bound},
                       {"lambda_min", sc.lambda_min},
                       {"grad_coord_norm", sc.grad_coord_norm}};

    const fs::path dir(o.common.out);
    write_text(dir / "verdict.json", out.dump(2) + "\n");
    ordered_json cfg = common_json(o.common);
    cfg["config"] = o.config;
    cfg["model"] = ordered_json::parse(gm.to_json());
    cfg["threshold"] = t3.threshold;
    cfg["t_lo"] = t3.dist.lo;
    cfg["t_hi"] = t3.dist.hi;
    cfg["mc_draws"] = draws;
    cfg["t"] = t_fixed;
    cfg["alpha"] = alpha_toy;
    write_manifest(dir, "syrm-check", o.common.seed, cfg.dump());
    std::cout << out["dominance"].dump() << '\n';
}

// ---- report ----

struct ReportOpts {
    Common common;
    std::vector<std::string> runs;
};

void run_report(const ReportOpts& o) {
    fs::create_directories(o.common.out);
    require(!o.runs.empty(), "report: no run directories given");
    struct Run {
        std::string method;
        std::uint64_t seed;
        double last5, variance;
        LossCurve curve;
    };
    std::vector<Run> runs;
    for (const auto& dir : o.runs) {
        try {
            const auto manifest = ordered_json::parse(read_text(fs::path(dir) / "manifest.json"));
            const auto summary = ordered_json::parse(read_text(fs::path(dir) / "summary.json"));
            Run r;
            r.method = summary.value("method", manifest["config"].value("method", std::string("custom")));
            r.seed = summary.at("seed").get<std::uint64_t>();
            r.curve = read_loss_csv(fs::path(dir) / "loss.csv");
            require(!r.curve.loss.empty(), "empty loss log");
            r.last5 = summary.at("last5_mean").get<double>();
            r.variance = summary.at("final_variance").get<double>();
            runs.push_back(std::move(r));
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << dir << ": " << e.what() << '\n';
        }
    }
    require(!runs.empty(), "report: no readable runs");
    std::vector<std::string> methods;
    std::vector<std::uint64_t> seeds;
    for (const auto& r : runs) {
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
        if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) seeds.push_back(r.seed);
    }
    const fs::path out(o.common.out);
    write_text(out / "table.csv", to_string_with([&](std::ostream& os) {
                   os << "method";
                   for (auto s : seeds) os << ",perf_" << s << ",var_" << s;
                   os << ",perf_mean,var_mean\n";
                   for (const auto& m : methods) {
                       os << m;
                       double perf = 0, var = 0;
                       int n = 0;
                       for (auto s : seeds) {
                           const auto it = std::find_if(runs.begin(), runs.end(),
                                                        [&](const Run& r) { return r.method == m && r.seed == s; });
                           if (it == runs.end()) {
                               os << ",,";
                               continue;
                           }
                           os << ',' << fmt17(it->last5) << ',' << fmt17(it->variance);
                           perf += it->last5;
                           var += it->variance;
                           ++n;
                       }
                       os << ',' << fmt17(perf / n) << ',' << fmt17(var / n) << '\n';
                   }
               }));
    std::vector<std::pair<std::string, LossCurve>> curves;
    for (const auto& r : runs) curves.push_back({r.method + " seed " + std::to_string(r.seed), r.curve});
    write_text(out / "losses.svg", loss_svg(curves));
    ordered_json cfg = common_json(o.common);
    cfg["runs"] = o.runs;
    write_manifest(out, "report", o.common.seed, cfg.dump());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variance-reduction laboratory for masked diffusion training"};
    app.require_subcommand(1);

    GenCorpusOpts gen;
    auto* gen_cmd = app.add_subcommand("gen-corpus", "generate a synthetic chain corpus");
    add_common(gen_cmd, gen.common);
    gen_cmd->add_option("--n", gen.corpus.n, "number of sequences")->capture_default_str();
    gen_cmd->add_option("--seq-len", gen.corpus.seq_len, "sequence length")->capture_default_str();

    FitOpts fit;
    auto* fit_cmd = app.add_subcommand("fit-ppots", "estimate the p(t) scatter and fit the EPR sampler");
    add_common(fit_cmd, fit.common);
    add_corpus(fit_cmd, fit.corpus);
    add_model(fit_cmd, fit.model);
    fit_cmd->add_option("--a", fit.a, "sequences")->capture_default_str();
    fit_cmd->add_option("--b", fit.b, "rate grid points")->capture_default_str();
    fit_cmd->add_option("--c", fit.c, "masks per cell")->capture_default_str();
    fit_cmd->add_option("--restarts", fit.restarts, "simplex restarts")->capture_default_str();
    fit_cmd->add_option("--eligibility", fit.eligibility, "pretrain|sft|syrm")->capture_default_str();

    TrainOpts tr;
    auto* train_cmd = app.add_subcommand("train", "train a denoiser");
    add_common(train_cmd, tr.common);
    train_cmd->add_option("--config", tr.config, "JSON training config");
    train_cmd->add_option("--method", tr.method, "method preset applied on top of the config")
        ->check(CLI::IsMember(known_methods()));

    MatrixOpts mx;
    auto* mx_cmd = app.add_subcommand("run-matrix", "train every (method, seed) pair");
    add_common(mx_cmd, mx.common);
    mx_cmd->add_option("--config", mx.config, "JSON base config");
    mx_cmd->add_option("--methods", mx.methods, "method presets")->delimiter(',')->capture_default_str();
    mx_cmd->add_option("--seeds", mx.seeds, "seeds")->delimiter(',')->capture_default_str();
    mx_cmd->add_option("--budget", mx.budget, "raw|normalized|both")
        ->capture_default_str()
        ->check(CLI::IsMember({"raw", "normalized", "both"}));

    DecomposeOpts dc;
    auto* dc_cmd = app.add_subcommand("decompose", "three-way loss variance decomposition on a frozen model");
    add_common(dc_cmd, dc.common);
    add_corpus(dc_cmd, dc.corpus);
    add_model(dc_cmd, dc.model);
    dc_cmd->add_option("--a", dc.a, "sequences")->capture_default_str();
    dc_cmd->add_option("--b", dc.b, "rates per sequence")->capture_default_str();
    dc_cmd->add_option("--c", dc.c, "masks per (sequence, rate)")->capture_default_str();
    dc_cmd->add_option("--design", dc.design, "stratified|iid rate draws")
        ->capture_default_str()
        ->check(CLI::IsMember({"stratified", "iid"}));
    dc_cmd->add_option("--eligibility", dc.eligibility, "pretrain|sft|syrm")->capture_default_str();

    BenchOpts bn;
    auto* bn_cmd = app.add_subcommand("bench-samplers", "compare t-samplers on a (g, v) pair");
    add_common(bn_cmd, bn.common);
    bn_cmd->add_option("--gv", bn.gv, "analytic preset")->check(CLI::IsMember(analytic_gv_names()));
    bn_cmd->add_option("--fit", bn.fit, "fit.json from fit-ppots");
    bn_cmd->add_option("--draws", bn.draws, "Monte Carlo draws per sampler")->capture_default_str();
    bn_cmd->add_option("--bins", bn.bins, "bins of the averaged optimum")->capture_default_str();

    SyrmOpts sy;
    auto* sy_cmd = app.add_subcommand("syrm-check", "check the SyRM variance results on a two-group model");
    add_common(sy_cmd, sy.common);
    sy_cmd->add_option("--config", sy.config, "JSON with model, threshold, t_lo, t_hi, mc_draws, t, alpha");

    ReportOpts rp;
    auto* rp_cmd = app.add_subcommand("report", "per-seed table and loss curves from train outputs");
    add_common(rp_cmd, rp.common);
    rp_cmd->add_option("--runs", rp.runs, "train output directories")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*gen_cmd) run_gen_corpus(gen);
        else if (*fit_cmd) run_fit(fit);
        else if (*train_cmd) {
            tr.seed_given = train_cmd->count("--seed") > 0;
            run_train(tr);
        } else if (*mx_cmd) run_run_matrix(mx);
        else if (*dc_cmd) run_decompose(dc);
        else if (*bn_cmd) run_bench(bn);
        else if (*sy_cmd) run_syrm(sy);
        else if (*rp_cmd) run_report(rp);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
