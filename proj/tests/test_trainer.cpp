#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mdmvar/error.hpp"
#include "mdmvar/trainer.hpp"

using namespace mdmvar;

namespace {

TrainConfig small_config() {
    TrainConfig c;
    c.steps = 12;
    c.batch_size = 8;
    c.corpus.n = 32;
    c.d = 8;
    c.h = 16;
    return c;
}

std::string csv_of(const RunLog& log) {
    std::ostringstream out;
    log.write_csv(out);
    return out.str();
}

StepRecord record(int step, double loss) {
    StepRecord r;
    r.step = step;
    r.loss = loss;
    r.weight_mean = 1.0;
    return r;
}

}  // namespace

TEST_CASE("control variate spec") {
    CHECK_FALSE(parse_control_variate("none").enabled);
    auto e = parse_control_variate("ema");
    CHECK(e.enabled);
    CHECK(e.bins == 10);
    CHECK(e.eta == doctest::Approx(0.01));
    auto e2 = parse_control_variate("ema:4:0.2");
    CHECK(e2.bins == 4);
    CHECK(e2.eta == doctest::Approx(0.2));
    CHECK(parse_control_variate(e2.str()).bins == 4);
    CHECK_THROWS_AS((void)parse_control_variate("ema:0"), ValidationError);
    CHECK_THROWS_AS((void)parse_control_variate("ema:10:1.5"), ValidationError);
    CHECK_THROWS_AS((void)parse_control_variate("spline"), ValidationError);
}

TEST_CASE("config json round trip and strict keys") {
    TrainConfig c = small_config();
    c.tsampler = parse_tsampler("strata:4");
    c.masking = parse_masking("mirror");
    c.control_variate = parse_control_variate("ema:5:0.05");
    c.eligibility = EligibilityMode::syrm;
    TrainConfig back = TrainConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK_THROWS_AS((void)TrainConfig::from_json(R"({"learning_rate": 1})"), ValidationError);
    CHECK_THROWS_AS((void)TrainConfig::from_json(R"({"corpus": {"size": 3}})"), ValidationError);
    CHECK_THROWS_AS((void)TrainConfig::from_json("{not json"), ValidationError);
    CHECK_THROWS_AS((void)TrainConfig::from_json(R"({"batch_size": 0})"), ValidationError);
    CHECK_THROWS_AS((void)TrainConfig::from_json(R"({"lr": -0.1})"), ValidationError);
    CHECK_THROWS_AS((void)TrainConfig::from_json(R"({"lr": "fast"})"), ValidationError);
}

TEST_CASE("epochs take precedence over steps") {
    TrainConfig c = small_config();
    c.epochs = 3;
    // ceil(32 / 8) = 4 steps per epoch
    CHECK(c.resolved_steps() == 12);
    c.batch_size = 5;
    CHECK(c.resolved_steps() == 3 * 7);
}

TEST_CASE("first5/last5 summaries") {
    std::vector<StepRecord> steps;
    for (int i = 0; i < 12; ++i) steps.push_back(record(i, double(i)));
    RunSummary s = summarize(steps);
    CHECK(s.first5_mean == doctest::Approx(2.0));
    CHECK(s.last5_mean == doctest::Approx(9.0));
    std::vector<StepRecord> few{record(0, 1.0), record(1, 3.0)};
    RunSummary f = summarize(few);
    CHECK(f.first5_mean == doctest::Approx(2.0));
    CHECK(f.last5_mean == doctest::Approx(2.0));
}

TEST_CASE("lr = 0 leaves parameters unchanged") {
    TrainConfig c = small_config();
    c.lr = 0.0;
    TrainResult r = train(c);
    CHECK(r.params == initial_params(c));
    CHECK(r.log.steps.size() == 12);
}

TEST_CASE("training is deterministic and thread-count independent") {
    TrainConfig c = small_config();
    c.masking = parse_masking("mirror");
    c.tsampler = parse_tsampler("strata");
    TrainResult a = train(c);
    TrainResult b = train(c);
    CHECK(csv_of(a.log) == csv_of(b.log));
    CHECK(a.params == b.params);
    c.threads = 3;
    TrainResult d = train(c);
    CHECK(csv_of(d.log) == csv_of(a.log));
    CHECK(d.params == a.params);
}

TEST_CASE("different seeds give different runs") {
    TrainConfig c = small_config();
    TrainResult a = train(c);
    c.seed = 731;
    TrainResult b = train(c);
    CHECK(csv_of(a.log) != csv_of(b.log));
}

TEST_CASE("loss csv layout") {
    TrainConfig c = small_config();
    c.steps = 3;
    std::string csv = csv_of(train(c).log);
    CHECK(csv.rfind("step,loss,weight_mean\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("every configured scheme trains") {
    for (const std::string& m : known_methods()) {
        if (m == "ppots" || m == "ppots+mirror") continue;  // fitted samplers are covered below
        TrainConfig c = method_config(m, small_config());
        c.steps = 4;
        TrainResult r = train(c);
        CHECK(r.log.steps.size() == 4);
        CHECK(r.params.all_finite());
    }
}

TEST_CASE("epr:auto fits a sampler before training") {
    TrainConfig c = method_config("ppots", small_config());
    c.steps = 3;
    c.fit_sizes = ScatterSizes{4, 10, 4};
    TrainResult r = train(c);
    REQUIRE(r.log.fitted_epr.has_value());
    CHECK(r.log.fitted_epr->valid());
    CHECK(r.log.summary_json().find("fitted_epr") != std::string::npos);
}

TEST_CASE("two-pass schemes count two evaluations per sample") {
    TrainConfig c = small_config();
    c.steps = 2;
    TrainResult s = train(c);
    c.masking = parse_masking("mirror");
    TrainResult m = train(c);
    CHECK(m.log.summary.model_evaluations == 2 * s.log.summary.model_evaluations);
    CHECK(s.log.summary.model_evaluations == 2 * 8);
}

TEST_CASE("non-finite loss aborts with a numerical error") {
    TrainConfig c = small_config();
    Corpus corpus = build_corpus(c.corpus);
    DenoiserParams init = initial_params(c);
    init.b2()[7] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS((void)train(c, corpus, init), NumericalError);
}

TEST_CASE("frozen model: mirror lowers the estimator variance") {
    TrainConfig c = small_config();
    c.lr = 0.0;
    c.steps = 200;
    TrainResult s = train(c);
    c.masking = parse_masking("mirror");
    TrainResult m = train(c);
    CHECK(m.log.summary.estimator_variance < s.log.summary.estimator_variance);
}

TEST_CASE("standard training lowers the loss for every seed") {
    TrainConfig c;
    for (std::uint64_t seed : {42ULL, 731ULL, 20231ULL}) {
        c.seed = seed;
        RunSummary s = train(c).log.summary;
        CHECK(s.last5_mean < s.first5_mean);
    }
}

TEST_CASE("run_matrix rows and determinism") {
    TrainConfig base = small_config();
    auto one = run_matrix({"standard"}, {42}, base);
    REQUIRE(one.size() == 1);
    CHECK(one[0].view == BudgetView::raw);

    auto again = run_matrix({"standard"}, {42}, base);
    CHECK(again[0].summary.last5_mean == one[0].summary.last5_mean);

    auto mirror = run_matrix({"mirror"}, {42}, base);
    REQUIRE(mirror.size() == 2);
    CHECK(mirror[1].view == BudgetView::normalized);
    CHECK(mirror[1].summary.steps == base.steps / 2);

    auto seeds = run_matrix({"standard"}, {42, 731, 20231}, base);
    double lo = 1e300, hi = -1e300;
    for (auto& r : seeds) {
        lo = std::min(lo, r.summary.last5_mean);
        hi = std::max(hi, r.summary.last5_mean);
    }
    CHECK(hi - lo > 0.0);

    std::ostringstream csv;
    write_matrix_csv(csv, seeds);
    CHECK(csv.str().rfind("method,budget,steps,perf_42,evals_42,var_42,", 0) == 0);
    CHECK(synergy_json(seeds).find("standard") != std::string::npos);
}

TEST_CASE("unknown method is rejected") {
    CHECK_THROWS_AS((void)method_config("adamw", TrainConfig{}), ValidationError);
}
