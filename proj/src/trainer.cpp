#include "mdmvar/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "mdmvar/error.hpp"
#include "mdmvar/parallel.hpp"
#include "mdmvar/report.hpp"

namespace mdmvar {

using nlohmann::ordered_json;

std::string ControlVariateSpec::str() const {
    if (!enabled) return "none";
    return "ema:" + std::to_string(bins) + ":" + fmt17(eta);
}

ControlVariateSpec parse_control_variate(std::string_view spec) {
    ControlVariateSpec cv;
    if (spec == "none") return cv;
    require(spec.substr(0, 3) == "ema", "control_variate: expected none|ema[:m[:eta]]");
    cv.enabled = true;
    std::string rest(spec.substr(3));
    if (rest.empty()) return cv;
    require(rest[0] == ':', "control_variate: expected none|ema[:m[:eta]]");
    rest = rest.substr(1);
    const auto colon = rest.find(':');
    try {
        std::size_t used = 0;
        const std::string m = rest.substr(0, colon);
        cv.bins = std::stoi(m, &used);
        require(used == m.size(), "control_variate: bad bin count");
        if (colon != std::string::npos) {
            const std::string e = rest.substr(colon + 1);
            cv.eta = std::stod(e, &used);
            require(used == e.size(), "control_variate: bad eta");
        }
    } catch (const std::logic_error& e) {
        if (dynamic_cast<const ValidationError*>(&e)) throw;
        throw ValidationError("control_variate: malformed '" + std::string(spec) + "'");
    }
    require(cv.bins >= 1 && cv.bins <= 4096, "control_variate: bins must lie in [1, 4096]");
    require(cv.eta > 0.0 && cv.eta < 1.0, "control_variate: eta must lie in (0, 1)");
    return cv;
}

int TrainConfig::resolved_steps() const {
    if (epochs > 0) return epochs * ((corpus.n + batch_size - 1) / batch_size);
    return steps;
}

void TrainConfig::validate() const {
    require(batch_size >= 1, "config: batch_size must be >= 1");
    require(std::isfinite(lr) && lr >= 0.0, "config: lr must be finite and >= 0");
    require(resolved_steps() >= 1, "config: need at least one step");
    require(epochs >= 0, "config: epochs must be >= 0");
    require(eval_every >= 0, "config: eval_every must be >= 0");
    require(corpus.path.empty() ? corpus.n >= 1 && corpus.seq_len >= 8 : true, "config: bad corpus size");
    require(init_scale >= 0.0 && std::isfinite(init_scale), "config: init_scale must be >= 0");
    require(d >= 1 && h >= 1, "config: d and h must be >= 1");
    require(threads >= 1, "config: threads must be >= 1");
    require(masking.kind != MaskingSpec::Kind::multisample || masking.k >= 1, "config: multisample k must be >= 1");
}

std::string TrainConfig::to_json() const {
    ordered_json j;
    j["seed"] = seed;
    j["steps"] = steps;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["lr"] = lr;
    j["tsampler"] = tsampler.str();
    j["masking"] = masking.str();
    j["eligibility"] = std::string(to_string(eligibility));
    j["control_variate"] = control_variate.str();
    j["eval_every"] = eval_every;
    j["corpus"] = {{"n", corpus.n}, {"seq_len", corpus.seq_len}, {"seed", corpus.seed}, {"path", corpus.path}};
    j["init_scale"] = init_scale;
    j["d"] = d;
    j["h"] = h;
    j["threads"] = threads;
    j["fit_sizes"] = {{"a", fit_sizes.a}, {"b", fit_sizes.b}, {"c", fit_sizes.c}};
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("config: invalid JSON: ") + e.what());
    }
    require(j.is_object(), "config: expected a JSON object");
    TrainConfig c;
    try {
        for (const auto& [key, val] : j.items()) {
            if (key == "seed") c.seed = val.get<std::uint64_t>();
            else if (key == "steps") c.steps = val.get<int>();
            else if (key == "epochs") c.epochs = val.get<int>();
            else if (key == "batch_size") c.batch_size = val.get<int>();
            else if (key == "lr") c.lr = val.get<double>();
            else if (key == "tsampler") c.tsampler = parse_tsampler(val.get<std::string>());
            else if (key == "masking") c.masking = parse_masking(val.get<std::string>());
            else if (key == "eligibility") c.eligibility = parse_eligibility(val.get<std::string>());
            else if (key == "control_variate") c.control_variate = parse_control_variate(val.get<std::string>());
            else if (key == "eval_every") c.eval_every = val.get<int>();
            else if (key == "init_scale") c.init_scale = val.get<double>();
            else if (key == "d") c.d = val.get<int>();
            else if (key == "h") c.h = val.get<int>();
            else if (key == "threads") c.threads = val.get<int>();
            else if (key == "corpus") {
                require(val.is_object(), "config: corpus must be an object");
                for (const auto& [ck, cval] : val.items()) {
                    if (ck == "n") c.corpus.n = cval.get<int>();
                    else if (ck == "seq_len") c.corpus.seq_len = cval.get<int>();
                    else if (ck == "seed") c.corpus.seed = cval.get<std::uint64_t>();
                    else if (ck == "path") c.corpus.path = cval.get<std::string>();
                    else throw ValidationError("config: unknown corpus key '" + ck + "'");
                }
            } else if (key == "fit_sizes") {
                require(val.is_object(), "config: fit_sizes must be an object");
                for (const auto& [fk, fval] : val.items()) {
                    if (fk == "a") c.fit_sizes.a = fval.get<int>();
                    else if (fk == "b") c.fit_sizes.b = fval.get<int>();
                    else if (fk == "c") c.fit_sizes.c = fval.get<int>();
                    else throw ValidationError("config: unknown fit_sizes key '" + fk + "'");
                }
            } else {
                throw ValidationError("config: unknown key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config: wrong value type: ") + e.what());
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) { return from_json(read_text(path)); }

void RunLog::write_csv(std::ostream& out) const {
    out << "step,loss,weight_mean\n";
    for (const auto& r : steps) out << r.step << ',' << fmt17(r.loss) << ',' << fmt17(r.weight_mean) << '\n';
}

std::string RunLog::summary_json() const {
    ordered_json j;
    j["steps"] = summary.steps;
    j["first5_mean"] = summary.first5_mean;
    j["last5_mean"] = summary.last5_mean;
    j["final_variance"] = summary.final_variance;
    j["estimator_variance"] = summary.estimator_variance;
    j["model_evaluations"] = summary.model_evaluations;
    if (!steps.empty()) {
        const auto& acc = steps.back().acc;
        j["accumulator"] = {{"S1", acc.s1}, {"S2", acc.s2}, {"S12", acc.s12}, {"n", acc.n}};
    }
    ordered_json ev = ordered_json::array();
    for (const auto& e : evals) ev.push_back({{"step", e.step}, {"loss", e.loss}});
    j["evals"] = ev;
    if (fitted_epr) {
        const auto a = fitted_epr->as_array();
        j["fitted_epr"] = std::vector<double>(a.begin(), a.end());
    }
    return j.dump(2);
}

RunSummary summarize(const std::vector<StepRecord>& steps) {
    RunSummary s;
    s.steps = static_cast<int>(steps.size());
    if (steps.empty()) return s;
    const std::size_t k = std::min<std::size_t>(5, steps.size());
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        head += steps[i].loss;
        tail += steps[steps.size() - k + i].loss;
    }
    s.first5_mean = head / static_cast<double>(k);
    s.last5_mean = tail / static_cast<double>(k);
    const auto& acc = steps.back().acc;
    s.final_variance = acc.n >= 2 ? acc.variance() : 0.0;
    return s;
}

Corpus build_corpus(const CorpusSpec& spec) {
    if (!spec.path.empty()) return load_corpus(spec.path);
    return generate_corpus(Vocab{}, spec.n, spec.seq_len, RngStream(spec.seed));
}

DenoiserParams initial_params(const TrainConfig& config, int max_len) {
    DenoiserShape shape;
    shape.max_len = max_len;
    shape.d = config.d;
    shape.h = config.h;
    return DenoiserParams::random(shape, RngStream(config.seed).derive("model", 0), config.init_scale);
}

DenoiserParams initial_params(const TrainConfig& config) { return initial_params(config, config.corpus.seq_len); }

EprFit fit_sampler(const DenoiserParams& params, const Corpus& corpus, const TrainConfig& config) {
    const RngStream root(config.seed);
    const Scatter scatter =
        estimate_scatter(params, corpus, config.fit_sizes, root.derive("ppots", 0), config.eligibility, config.threads);
    return fit_epr(scatter, root.derive("ppots", 1));
}

namespace {

// Average loss of one sample over its masking branches; adds scale * gradient.
double sample_loss(const DenoiserParams& params, const TokenSeq& seq, const std::vector<int>& eligible, double t,
                   const MaskingSpec& masking, const RngStream& mask_stream, double scale, Gradients& grad) {
    switch (masking.kind) {
        case MaskingSpec::Kind::standard:
            return accumulate_loss_grad(params, seq, mask_standard(eligible, t, mask_stream), scale, grad);
        case MaskingSpec::Kind::isad:
            return accumulate_loss_grad(params, seq, mask_isad(seq, eligible, t, masking.delta, mask_stream), scale,
                                        grad);
        case MaskingSpec::Kind::mirror: {
            const auto [a, b] = mask_mirror(eligible, t, mask_stream);
            const double la = accumulate_loss_grad(params, seq, a, 0.5 * scale, grad);
            const double lb = accumulate_loss_grad(params, seq, b, 0.5 * scale, grad);
            return 0.5 * (la + lb);
        }
        case MaskingSpec::Kind::multisample: {
            const auto patterns = mask_multisample(eligible, t, masking.k, mask_stream);
            double sum = 0.0;
            for (const auto& p : patterns) sum += accumulate_loss_grad(params, seq, p, scale / masking.k, grad);
            return sum / masking.k;
        }
    }
    return 0.0;
}

double eval_loss(const DenoiserParams& params, const Corpus& corpus, const std::vector<std::vector<int>>& eligible,
                 const RngStream& stream) {
    const int n = std::min<int>(64, static_cast<int>(corpus.size()));
    constexpr int kRates = 16;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < kRates; ++j) {
            const double t = (j + 0.5) / kRates;
            sum += loss_only(params, corpus[i], mask_standard(eligible[i], t, stream.derive("x0", i).derive("t", j)));
        }
    }
    return sum / (n * kRates);
}

}  // namespace

TrainResult train(const TrainConfig& config) {
    config.validate();
    const Corpus corpus = build_corpus(config.corpus);
    require(!corpus.empty(), "train: empty corpus");
    int max_len = 0;
    for (const auto& s : corpus) max_len = std::max(max_len, s.size());
    return train(config, corpus, initial_params(config, max_len));
}

TrainResult train(const TrainConfig& config, const Corpus& corpus, DenoiserParams params) {
    config.validate();
    require(!corpus.empty(), "train: empty corpus");
    const int n = static_cast<int>(corpus.size());
    const int B = config.batch_size;
    const int total_steps = config.resolved_steps();
    const RngStream root(config.seed);

    std::vector<std::vector<int>> eligible;
    eligible.reserve(corpus.size());
    for (const auto& s : corpus) {
        require(s.size() <= params.shape().max_len, "train: sequence longer than the model's max_len");
        eligible.push_back(eligibility(s, config.eligibility));
        require(!eligible.back().empty(), "train: sequence with an empty eligibility set");
    }

    RunLog log;
    std::shared_ptr<const DensitySampler> density;
    if (config.tsampler.kind == TSamplerSpec::Kind::epr) {
        EPRParams epr;
        if (config.tsampler.epr_path == "auto") {
            epr = fit_sampler(params, corpus, config).params;
        } else {
            epr = load_fit(config.tsampler.epr_path).fit.params;
        }
        log.fitted_epr = epr;
        density = std::make_shared<const DensitySampler>(DensitySampler::from_epr(epr));
    }
    const TSampler tsampler(config.tsampler, density);

    std::optional<EmaBinState> ema;
    if (config.control_variate.enabled) ema.emplace(config.control_variate.bins, config.control_variate.eta);

    const RngStream eval_stream = root.derive("eval", 0);
    const int evals_per_sample = config.masking.evaluations();

    std::vector<int> order;
    int epoch = -1;
    std::int64_t cursor = 0;  // position in the concatenation of epoch permutations
    OnlineVarAccumulator acc;
    RunningStats estimator;
    std::vector<Gradients> slot_grads(B, Gradients(params.shape()));
    std::vector<double> slot_loss(B);
    std::vector<int> slot_seq(B);
    std::vector<std::int64_t> slot_pos(B);
    std::vector<int> slot_epoch(B);

    for (int step = 0; step < total_steps; ++step) {
        for (int k = 0; k < B; ++k, ++cursor) {
            const int e = static_cast<int>(cursor / n);
            if (e != epoch) {
                epoch = e;
                order.resize(n);
                std::iota(order.begin(), order.end(), 0);
                RngStream perm = root.derive("epoch", e).derive("order", 0);
                shuffle(order, perm);
            }
            slot_epoch[k] = e;
            slot_pos[k] = cursor % n;
            slot_seq[k] = order[slot_pos[k]];
        }
        RngStream tstream = root.derive("step", step).derive("t", 0);
        const std::vector<WeightedT> ts = tsampler.sample_batch(B, tstream);

        parallel_for(B, config.threads, [&](int k) {
            slot_grads[k].set_zero();
            const RngStream mask_stream =
                root.derive("epoch", slot_epoch[k]).derive("sample", slot_pos[k]).derive("mask", 0);
            const int i = slot_seq[k];
            slot_loss[k] = sample_loss(params, corpus[i], eligible[i], ts[k].t, config.masking, mask_stream,
                                       ts[k].weight / B, slot_grads[k]);
        });

        Gradients grad(params.shape());
        double loss_sum = 0.0, weight_sum = 0.0;  // loss_sum: weighted, EMA-adjusted when enabled
        for (int k = 0; k < B; ++k) {
            if (!std::isfinite(slot_loss[k])) {
                std::ostringstream msg;
                msg << "train: non-finite loss at step " << step << ", sequence " << slot_seq[k] << ", t=" << fmt17(ts[k].t);
                throw NumericalError(msg.str());
            }
            grad.axpy(1.0, slot_grads[k]);
            weight_sum += ts[k].weight;
            acc.update(slot_loss[k], ts[k].weight);
        }
        // EMA: every adjustment in a batch sees the state at batch start; the
        // state is then advanced once per sample in batch order.
        for (int k = 0; k < B; ++k) {
            const double wl = ts[k].weight * slot_loss[k];
            const double value = ema ? ema->adjust(ts[k].t, wl) : wl;
            estimator.add(value);
            loss_sum += value;
        }
        if (ema) {
            for (int k = 0; k < B; ++k) ema->update(ts[k].t, ts[k].weight * slot_loss[k]);
        }

        if (!std::isfinite(loss_sum)) {
            throw NumericalError("train: non-finite batch loss at step " + std::to_string(step));
        }
        params = sgd_step(params, grad, config.lr);
        log.steps.push_back({step, loss_sum / B, weight_sum / B, acc});
        if (config.eval_every > 0 && ((step + 1) % config.eval_every == 0 || step + 1 == total_steps)) {
            log.evals.push_back({step, eval_loss(params, corpus, eligible, eval_stream)});
        }
    }

    log.summary = summarize(log.steps);
    log.summary.estimator_variance = estimator.variance();
    log.summary.model_evaluations = std::int64_t(total_steps) * B * evals_per_sample;
    return {std::move(params), std::move(log)};
}

const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> m{"standard", "clipped", "strats", "ema",          "isad",
                                            "syrm",     "ppots",   "mirror", "multisample2", "ppots+mirror"};
    return m;
}

TrainConfig method_config(const std::string& method, const TrainConfig& base) {
    TrainConfig c = base;
    c.tsampler = TSamplerSpec{};
    c.masking = MaskingSpec{};
    c.control_variate = ControlVariateSpec{};
    if (method == "standard") {
    } else if (method == "clipped") {
        c.tsampler = parse_tsampler("clipped:0.3:0.8");
    } else if (method == "strats") {
        c.tsampler = parse_tsampler("strata");
    } else if (method == "ema") {
        c.control_variate = parse_control_variate("ema:10:0.01");
    } else if (method == "isad") {
        c.masking = parse_masking("isad:0.2");
    } else if (method == "syrm") {
        c.eligibility = EligibilityMode::syrm;
    } else if (method == "ppots") {
        c.tsampler = parse_tsampler("epr:auto");
    } else if (method == "mirror") {
        c.masking = parse_masking("mirror");
    } else if (method == "multisample2") {
        c.masking = parse_masking("multisample:2");
    } else if (method == "ppots+mirror") {
        c.tsampler = parse_tsampler("epr:auto");
        c.masking = parse_masking("mirror");
    } else {
        throw ValidationError("unknown method '" + method + "'");
    }
    return c;
}

static std::string_view view_name(BudgetView v) { return v == BudgetView::raw ? "raw" : "normalized"; }

std::vector<MatrixRow> run_matrix(const std::vector<std::string>& methods, const std::vector<std::uint64_t>& seeds,
                                  const TrainConfig& base, const MatrixOptions& opts) {
    require(!methods.empty() && !seeds.empty(), "run_matrix: methods and seeds must be nonempty");
    require(opts.raw || opts.normalized, "run_matrix: select at least one budget view");
    const Corpus corpus = build_corpus(base.corpus);
    int max_len = 0;
    for (const auto& s : corpus) max_len = std::max(max_len, s.size());

    std::vector<MatrixRow> rows;
    for (const auto& method : methods) {
        const TrainConfig mc = method_config(method, base);
        const int evals = mc.masking.evaluations();
        std::vector<BudgetView> views;
        if (opts.raw) views.push_back(BudgetView::raw);
        // single-pass methods are identical under both views
        if (opts.normalized && (evals > 1 || !opts.raw)) views.push_back(BudgetView::normalized);
        for (const auto seed : seeds) {
            for (const auto view : views) {
                TrainConfig c = mc;
                c.seed = seed;
                const int steps = c.resolved_steps();
                c.epochs = 0;
                c.steps = view == BudgetView::normalized ? std::max(1, steps / evals) : steps;
                const auto start = std::chrono::steady_clock::now();
                TrainResult r = train(c, corpus, initial_params(c, max_len));
                const double secs =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                rows.push_back({method, seed, view, r.log.summary, secs});
            }
        }
    }
    return rows;
}

namespace {

struct TableKey {
    std::string method;
    BudgetView view;
    bool operator<(const TableKey& o) const {
        return std::tie(method, view) < std::tie(o.method, o.view);
    }
};

// Rows grouped by (method, view) in first-appearance order.
std::vector<std::pair<TableKey, std::vector<const MatrixRow*>>> group_rows(const std::vector<MatrixRow>& rows) {
    std::vector<std::pair<TableKey, std::vector<const MatrixRow*>>> out;
    for (const auto& r : rows) {
        const TableKey key{r.method, r.view};
        auto it = std::find_if(out.begin(), out.end(), [&](const auto& g) {
            return g.first.method == key.method && g.first.view == key.view;
        });
        if (it == out.end()) {
            out.push_back({key, {}});
            it = out.end() - 1;
        }
        it->second.push_back(&r);
    }
    return out;
}

}  // namespace

void write_matrix_csv(std::ostream& out, const std::vector<MatrixRow>& rows) {
    std::vector<std::uint64_t> seeds;
    for (const auto& r : rows) {
        if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) seeds.push_back(r.seed);
    }
    out << "method,budget,steps";
    for (const auto s : seeds) out << ",perf_" << s << ",evals_" << s << ",var_" << s;
    out << ",perf_mean,perf_spread,evals_mean,var_mean\n";
    for (const auto& [key, group] : group_rows(rows)) {
        out << key.method << ',' << view_name(key.view) << ',' << group.front()->summary.steps;
        double perf = 0.0, ev = 0.0, var = 0.0;
        double lo = INFINITY, hi = -INFINITY;
        int count = 0;
        for (const auto s : seeds) {
            const auto it = std::find_if(group.begin(), group.end(), [&](const MatrixRow* r) { return r->seed == s; });
            if (it == group.end()) {
                out << ",,,";
                continue;
            }
            const RunSummary& m = (*it)->summary;
            out << ',' << fmt17(m.last5_mean) << ',' << m.model_evaluations << ',' << fmt17(m.final_variance);
            perf += m.last5_mean;
            ev += static_cast<double>(m.model_evaluations);
            var += m.final_variance;
            lo = std::min(lo, m.last5_mean);
            hi = std::max(hi, m.last5_mean);
            ++count;
        }
        out << ',' << fmt17(perf / count) << ',' << fmt17(hi - lo) << ',' << fmt17(ev / count) << ','
            << fmt17(var / count) << '\n';
    }
}

std::string synergy_json(const std::vector<MatrixRow>& rows) {
    // mean last5 per (method, view); a single-pass method's raw row stands in
    // for its normalized row
    std::map<std::pair<std::string, BudgetView>, double> mean;
    for (const auto& [key, group] : group_rows(rows)) {
        double s = 0.0;
        for (const auto* r : group) s += r->summary.last5_mean;
        mean[{key.method, key.view}] = s / static_cast<double>(group.size());
    }
    auto lookup = [&](const std::string& m, BudgetView v) -> std::optional<double> {
        if (auto it = mean.find({m, v}); it != mean.end()) return it->second;
        if (v == BudgetView::normalized) {
            if (auto it = mean.find({m, BudgetView::raw}); it != mean.end()) {
                if (method_config(m, TrainConfig{}).masking.evaluations() == 1) return it->second;
            }
        }
        return std::nullopt;
    };
    ordered_json j = ordered_json::object();
    for (const auto view : {BudgetView::raw, BudgetView::normalized}) {
        const auto base = lookup("standard", view);
        if (!base) continue;
        ordered_json v;
        ordered_json gains = ordered_json::object();
        for (const auto& m : known_methods()) {
            if (auto x = lookup(m, view)) gains[m] = 1.0 - *x / *base;
        }
        v["gain"] = gains;
        const auto p = lookup("ppots", view), mi = lookup("mirror", view), pm = lookup("ppots+mirror", view);
        if (p && mi && pm) {
            const double gp = 1.0 - *p / *base, gm = 1.0 - *mi / *base, gpm = 1.0 - *pm / *base;
            v["combined_gain"] = gpm;
            v["sum_of_gains"] = gp + gm;
            v["synergy"] = gpm - (gp + gm);
        }
        j[std::string(view_name(view))] = v;
    }
    return j.dump(2);
}

std::string timing_json(const std::vector<MatrixRow>& rows) {
    ordered_json arr = ordered_json::array();
    for (const auto& r : rows) {
        arr.push_back({{"method", r.method},
                       {"seed", r.seed},
                       {"budget", std::string(view_name(r.view))},
                       {"wall_seconds", r.wall_seconds}});
    }
    return arr.dump(2);
}

}  // namespace mdmvar
