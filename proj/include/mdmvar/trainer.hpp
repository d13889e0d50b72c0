#pragma once

// SGD training of the denoiser with pluggable t-sampler, masking scheme,
// eligibility and control variate, plus the multi-method, multi-seed harness.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mdmvar/corpus.hpp"
#include "mdmvar/denoiser.hpp"
#include "mdmvar/masking.hpp"
#include "mdmvar/ppots.hpp"
#include "mdmvar/tsampler.hpp"
#include "mdmvar/variance.hpp"

namespace mdmvar {

struct ControlVariateSpec {
    bool enabled = false;
    int bins = 10;
    double eta = 0.01;

    [[nodiscard]] std::string str() const;
};

/// none | ema | ema:m | ema:m:eta
[[nodiscard]] ControlVariateSpec parse_control_variate(std::string_view spec);

struct CorpusSpec {
    int n = 256;
    int seq_len = 32;
    /// Data seed, kept apart from the training seed so every run sees the same corpus.
    std::uint64_t seed = 1234;
    /// When set, the corpus is loaded from this file instead of generated.
    std::string path;
};

struct TrainConfig {
    std::uint64_t seed = 42;
    /// Total SGD steps. When `epochs` > 0 it takes precedence:
    /// steps = epochs * ceil(n / batch_size).
    int steps = 200;
    int epochs = 0;
    int batch_size = 32;
    double lr = 1.0;
    TSamplerSpec tsampler;
    MaskingSpec masking;
    EligibilityMode eligibility = EligibilityMode::sft;
    ControlVariateSpec control_variate;
    /// Held-out-style evaluation of the standard objective every k steps (0 = off).
    int eval_every = 0;
    CorpusSpec corpus;
    double init_scale = 0.05;
    int d = 16;
    int h = 64;
    int threads = 1;
    /// Scatter sizes used when tsampler is `epr:auto`.
    ScatterSizes fit_sizes;

    [[nodiscard]] int resolved_steps() const;
    void validate() const;
    [[nodiscard]] std::string to_json() const;
    [[nodiscard]] static TrainConfig from_json(const std::string& text);
    [[nodiscard]] static TrainConfig load(const std::filesystem::path& path);
};

struct StepRecord {
    int step = 0;
    /// Mean importance-weighted loss over the batch, EMA-adjusted when enabled.
    double loss = 0.0;
    double weight_mean = 0.0;
    /// Cumulative accumulator of (per-sample loss, weight) pairs after this step.
    OnlineVarAccumulator acc;
};

struct EvalRecord {
    int step = 0;
    double loss = 0.0;
};

struct RunSummary {
    int steps = 0;
    double first5_mean = 0.0;
    double last5_mean = 0.0;
    /// Online accumulator over per-sample (loss, weight) pairs.
    double final_variance = 0.0;
    /// Sample variance of the per-sample quantity actually averaged into the
    /// batch loss (weighted, and EMA-adjusted when enabled).
    double estimator_variance = 0.0;
    std::int64_t model_evaluations = 0;
};

struct RunLog {
    std::vector<StepRecord> steps;
    std::vector<EvalRecord> evals;
    RunSummary summary;
    std::optional<EPRParams> fitted_epr;

    /// `step,loss,weight_mean` with 17 significant digits.
    void write_csv(std::ostream& out) const;
    [[nodiscard]] std::string summary_json() const;
};

/// first5/last5 means over exactly five steps when at least five exist.
[[nodiscard]] RunSummary summarize(const std::vector<StepRecord>& steps);

struct TrainResult {
    DenoiserParams params;
    RunLog log;
};

[[nodiscard]] Corpus build_corpus(const CorpusSpec& spec);
[[nodiscard]] DenoiserParams initial_params(const TrainConfig& config);

/// Fits the EPR sampler on `params` (used for `epr:auto`).
[[nodiscard]] EprFit fit_sampler(const DenoiserParams& params, const Corpus& corpus, const TrainConfig& config);

/// Throws NumericalError with the step, sequence and rate on a non-finite loss.
[[nodiscard]] TrainResult train(const TrainConfig& config);
[[nodiscard]] TrainResult train(const TrainConfig& config, const Corpus& corpus, DenoiserParams init);

/// Named method presets: standard, clipped, strats, ema, isad, syrm, ppots,
/// mirror, multisample2, ppots+mirror.
[[nodiscard]] const std::vector<std::string>& known_methods();
[[nodiscard]] TrainConfig method_config(const std::string& method, const TrainConfig& base);

enum class BudgetView { raw, normalized };

struct MatrixRow {
    std::string method;
    std::uint64_t seed = 0;
    BudgetView view = BudgetView::raw;
    RunSummary summary;
    double wall_seconds = 0.0;
};

struct MatrixOptions {
    bool raw = true;
    bool normalized = true;
};

/// One run per (method, seed, view). Under the normalized view, methods with
/// e model evaluations per sample run steps / e steps.
[[nodiscard]] std::vector<MatrixRow> run_matrix(const std::vector<std::string>& methods,
                                                const std::vector<std::uint64_t>& seeds, const TrainConfig& base,
                                                const MatrixOptions& opts = {});

/// Per-seed table: one row per (method, view); for each seed Perf (last5 mean),
/// Evals (model evaluations, the deterministic cost column) and Var, then the
/// means over seeds. Wall-clock times are kept out so the file is reproducible.
void write_matrix_csv(std::ostream& out, const std::vector<MatrixRow>& rows);

/// Relative gains over `standard` (1 - last5/last5_standard) and the additivity
/// comparison gain(ppots+mirror) vs gain(ppots) + gain(mirror), per view.
[[nodiscard]] std::string synergy_json(const std::vector<MatrixRow>& rows);

/// Wall-clock seconds per row.
[[nodiscard]] std::string timing_json(const std::vector<MatrixRow>& rows);

}  // namespace mdmvar
