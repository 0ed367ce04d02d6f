#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "minsnr/data_metrics.hpp"
#include "minsnr/denoiser.hpp"
#include "minsnr/pareto.hpp"
#include "minsnr/schedule.hpp"
#include "minsnr/weighting.hpp"

namespace minsnr {

struct TrainConfig {
    long iterations = 20000;
    int batch_size = 128;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    /// Decoupled (AdamW) decay; 0 gives plain Adam.
    double weight_decay = 0.0;
    long warmup_iters = 200;
    double ema_rate = 0.9999;
    std::uint64_t seed = 0;
    WeightStrategy strategy = WeightStrategy::constant();
    PredictionTarget target = PredictionTarget::X0;
    int bins = 10;
    long eval_every = 1000;

    std::vector<int> hidden = {128, 128, 128};
    int embed_dim = 16;

    /// Generated samples per evaluation; 0 skips the metric (reported as 0).
    Index eval_samples = 2048;
    int eval_steps = 100;
    int eval_bin_samples = 256;
    int n_projections = 128;
    bool eval_use_ema = true;
    /// Keep a copy of the parameters at every evaluation row.
    bool keep_snapshots = false;

    /// Re-solve UGD bin weights every this many iterations and train with them
    /// as external weights (0 keeps `strategy` fixed).
    long reweight_every = 0;
    int reweight_samples = 256;
    double reweight_lambda = 0.01;
};

/// Throws std::invalid_argument on an invalid configuration.
void check(const TrainConfig& config);

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EvalRow {
    long iteration = 0;
    double loss = 0.0;
    Vector bin_losses;
    double metric = 0.0;
    double seconds = 0.0;
};

struct Snapshot {
    long iteration = 0;
    DenoiserParams params;
    DenoiserParams ema;
};

struct RunRecord {
    std::vector<EvalRow> rows;
    DenoiserParams final_params;
    DenoiserParams ema_params;
    std::vector<Snapshot> snapshots;
    /// Simplex weights chosen at each re-weighting (iteration, weights).
    std::vector<std::pair<long, Vector>> reweights;
};

/// `iteration,loss,binloss_0..binloss_{B-1},metric,seconds`
void write_run_csv(const std::string& path, const RunRecord& record);

/// Learning rate at 0-based iteration i: linear warm-up, then constant.
double learning_rate_at(const TrainConfig& config, long i);

/// ema <- rate * ema + (1 - rate) * theta
Vector ema_update(const Vector& ema, const Vector& theta, double rate);

/// Adam moments with optional decoupled weight decay.
class AdamW {
public:
    AdamW(Index n, double beta1, double beta2, double eps, double weight_decay);
    void step(Vector& theta, const Vector& grad, double lr);

private:
    Vector m_, v_;
    double beta1_, beta2_, eps_, weight_decay_;
    long t_ = 0;
};

/// Uniformly sampled training batch.
struct Batch {
    Matrix x0;
    std::vector<Step> t;
    Matrix noise;
};
Batch draw_batch(const Matrix& data, Index n, Step t_low, Step t_high, std::mt19937_64& rng);

struct StepRange {
    Step low = 1;
    Step high = 0;  // 0 means T
};

/// Trains from `init` (or a fresh seeded network) with steps drawn from `range`.
/// Evaluation rows compare generated samples against `reference` (training data if empty).
RunRecord train_from(const DenoiserParams& init, const TrainConfig& config, const ToyDataset& dataset,
                     const Schedule& schedule, StepRange range = {}, const Matrix& reference = {});

RunRecord train(const TrainConfig& config, const ToyDataset& dataset, const Schedule& schedule,
                const Matrix& reference = {});

/// Fresh network for a configuration.
DenoiserParams init_for(const TrainConfig& config, int data_dim);

struct BinnedLoss {
    Vector mean;
    Vector std_error;
};

/// Monte-Carlo mean of ||x0 - x0_hat||^2 per timestep bin (predictions converted to x0).
BinnedLoss binned_unweighted_loss_stats(const DenoiserParams& params, const Matrix& data,
                                        const Schedule& schedule, int bins,
                                        PredictionTarget target, int samples_per_bin,
                                        std::uint64_t seed);

Vector binned_unweighted_loss(const DenoiserParams& params, const Matrix& data,
                              const Schedule& schedule, int bins, PredictionTarget target,
                              int samples_per_bin, std::uint64_t seed);

/// Fine-tunes a copy on one bin, returns per-bin loss change (after - before).
/// Uses config.learning_rate without warm-up and fresh optimizer moments.
Vector conflict_probe(const DenoiserParams& params, const ToyDataset& dataset,
                      const Schedule& schedule, int focus_bin, long finetune_iters,
                      const TrainConfig& config, int samples_per_bin = 2048);

/// Per-bin mean gradients of the unweighted per-target loss.
GradientBundle collect_bin_gradients(const DenoiserParams& params, const Matrix& data,
                                     const Schedule& schedule, int bins, int samples_per_bin,
                                     PredictionTarget target, std::uint64_t seed);

struct InstabilityRow {
    int sample_size = 0;
    double weight_stddev = 0.0;
    bool operator==(const InstabilityRow&) const = default;
};

/// For each sample size: re-draws `repeats` bundles, solves each with UGD on the
/// normalized bundle (lambda is relative), reports the mean over bins of the
/// per-bin weight standard deviation.
std::vector<InstabilityRow> instability_experiment(const DenoiserParams& params, const Matrix& data,
                                                   const Schedule& schedule,
                                                   const std::vector<int>& sample_sizes,
                                                   int repeats, double lambda, std::uint64_t seed,
                                                   int bins = 10,
                                                   PredictionTarget target = PredictionTarget::X0);

/// Bin-averaged loss weights of a strategy (not normalized).
Vector bin_average_weights(const WeightStrategy& strategy, PredictionTarget target,
                           const Schedule& schedule, const std::vector<int>& edges);

struct ObjectiveRow {
    std::string name;
    SimplexWeights weights;
    double objective = 0.0;
};

/// Scores each strategy's simplex-normalized bin weights on a freshly collected,
/// normalized gradient bundle (lambda is relative). Appends "ugd" and
/// "frank-wolfe" rows holding the optimized weights.
std::vector<ObjectiveRow> objective_comparison(const DenoiserParams& params, const Matrix& data,
                                               const Schedule& schedule,
                                               const std::vector<WeightStrategy>& strategies,
                                               double lambda, int bins, std::uint64_t seed,
                                               PredictionTarget target = PredictionTarget::X0,
                                               int samples_per_bin = 2048);

}  // namespace minsnr
