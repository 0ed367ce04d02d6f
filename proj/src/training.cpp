#include "minsnr/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "minsnr/sampling.hpp"

namespace minsnr {

void check(const TrainConfig& c) {
    if (c.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (c.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(c.learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0))
        throw std::invalid_argument("Adam betas must lie in [0, 1)");
    if (c.warmup_iters < 0) throw std::invalid_argument("warm-up must be >= 0");
    if (!(c.ema_rate >= 0.0 && c.ema_rate < 1.0)) throw std::invalid_argument("EMA rate must lie in [0, 1)");
    if (c.bins < 1) throw std::invalid_argument("bins must be >= 1");
    if (c.eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
    if (c.hidden.empty()) throw std::invalid_argument("need at least one hidden layer");
    if (c.reweight_every < 0 || c.reweight_samples < 1 || !(c.reweight_lambda >= 0.0))
        throw std::invalid_argument("invalid re-weighting settings");
    if (c.reweight_every > 0 && c.strategy.kind == WeightKind::External)
        throw std::invalid_argument("re-weighting replaces the strategy; do not combine it with external weights");
    if (c.eval_steps < 1 || c.eval_bin_samples < 1 || c.n_projections < 1)
        throw std::invalid_argument("evaluation settings must be positive");
    minsnr::check(c.strategy);
}

namespace {

std::string strategy_text(const WeightStrategy& s) {
    switch (s.kind) {
        case WeightKind::MaxSnrGamma:
        case WeightKind::MinSnrGamma: {
            std::ostringstream out;
            out << to_string(s.kind) << ':' << std::setprecision(17) << s.gamma;
            return out.str();
        }
        default: return to_string(s.kind);
    }
}

WeightStrategy strategy_from_text(const std::string& text, const WeightStrategy& current) {
    if (text == "const") return WeightStrategy::constant();
    if (text == "snr") return WeightStrategy::snr();
    if (text.rfind("max-snr", 0) == 0 || text.rfind("min-snr", 0) == 0) {
        const bool is_min = text[1] == 'i';
        const auto colon = text.find(':');
        const double gamma = colon == std::string::npos ? (is_min ? kDefaultGamma : 1.0)
                                                        : std::stod(text.substr(colon + 1));
        return is_min ? WeightStrategy::min_snr(gamma) : WeightStrategy::max_snr(gamma);
    }
    if (text == "external" && current.kind == WeightKind::External) return current;
    throw std::invalid_argument("cannot restore strategy '" + text + "' from JSON");
}

}  // namespace

nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json j = {{"iterations", c.iterations},
                        {"batch_size", c.batch_size},
                        {"learning_rate", c.learning_rate},
                        {"adam_betas", {c.beta1, c.beta2}},
                        {"adam_eps", c.adam_eps},
                        {"weight_decay", c.weight_decay},
                        {"warmup_iters", c.warmup_iters},
                        {"ema_rate", c.ema_rate},
                        {"seed", c.seed},
                        {"strategy", strategy_text(c.strategy)},
                        {"target", to_string(c.target)},
                        {"bins", c.bins},
                        {"eval_every", c.eval_every},
                        {"hidden", c.hidden},
                        {"embed_dim", c.embed_dim},
                        {"eval_samples", c.eval_samples},
                        {"eval_steps", c.eval_steps},
                        {"eval_bin_samples", c.eval_bin_samples},
                        {"n_projections", c.n_projections},
                        {"eval_use_ema", c.eval_use_ema},
                        {"reweight_every", c.reweight_every},
                        {"reweight_samples", c.reweight_samples},
                        {"reweight_lambda", c.reweight_lambda}};
    if (c.strategy.kind == WeightKind::External) {
        j["external_weights"] = c.strategy.external_weights;
        j["external_edges"] = c.strategy.external_edges;
    }
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    if (j.contains("adam_betas")) {
        c.beta1 = j.at("adam_betas").at(0).get<double>();
        c.beta2 = j.at("adam_betas").at(1).get<double>();
    }
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.warmup_iters = j.value("warmup_iters", c.warmup_iters);
    c.ema_rate = j.value("ema_rate", c.ema_rate);
    c.seed = j.value("seed", c.seed);
    if (j.contains("external_weights")) {
        c.strategy = WeightStrategy::external(j.at("external_weights").get<std::vector<double>>(),
                                              j.value("external_edges", std::vector<int>{}));
    }
    if (j.contains("strategy")) c.strategy = strategy_from_text(j.at("strategy").get<std::string>(), c.strategy);
    if (j.contains("target")) c.target = parse_target(j.at("target").get<std::string>());
    c.bins = j.value("bins", c.bins);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.hidden = j.value("hidden", c.hidden);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.eval_samples = j.value("eval_samples", c.eval_samples);
    c.eval_steps = j.value("eval_steps", c.eval_steps);
    c.eval_bin_samples = j.value("eval_bin_samples", c.eval_bin_samples);
    c.n_projections = j.value("n_projections", c.n_projections);
    c.eval_use_ema = j.value("eval_use_ema", c.eval_use_ema);
    c.reweight_every = j.value("reweight_every", c.reweight_every);
    c.reweight_samples = j.value("reweight_samples", c.reweight_samples);
    c.reweight_lambda = j.value("reweight_lambda", c.reweight_lambda);
    return c;
}

void write_run_csv(const std::string& path, const RunRecord& record) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    const Index B = record.rows.empty() ? 0 : record.rows.front().bin_losses.size();
    out << "iteration,loss";
    for (Index b = 0; b < B; ++b) out << ",binloss_" << b;
    out << ",metric,seconds\n" << std::setprecision(17);
    for (const auto& row : record.rows) {
        out << row.iteration << ',' << row.loss;
        for (Index b = 0; b < B; ++b) out << ',' << row.bin_losses[b];
        out << ',' << row.metric << ',' << std::setprecision(6) << row.seconds << std::setprecision(17)
            << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

double learning_rate_at(const TrainConfig& c, long i) {
    if (i < c.warmup_iters) return c.learning_rate * static_cast<double>(i + 1) / c.warmup_iters;
    return c.learning_rate;
}

Vector ema_update(const Vector& ema, const Vector& theta, double rate) {
    if (ema.size() != theta.size()) throw std::invalid_argument("EMA length mismatch");
    return rate * ema + (1.0 - rate) * theta;
}

AdamW::AdamW(Index n, double beta1, double beta2, double eps, double weight_decay)
    : m_(Vector::Zero(n)), v_(Vector::Zero(n)), beta1_(beta1), beta2_(beta2), eps_(eps),
      weight_decay_(weight_decay) {}

void AdamW::step(Vector& theta, const Vector& grad, double lr) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    if (weight_decay_ > 0.0) theta *= 1.0 - lr * weight_decay_;
    theta.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

Batch draw_batch(const Matrix& data, Index n, Step t_low, Step t_high, std::mt19937_64& rng) {
    std::uniform_int_distribution<Index> pick(0, data.rows() - 1);
    std::uniform_int_distribution<Step> step(t_low, t_high);
    std::normal_distribution<double> normal(0.0, 1.0);
    Batch b{Matrix(n, data.cols()), std::vector<Step>(static_cast<std::size_t>(n)),
            Matrix(n, data.cols())};
    for (Index i = 0; i < n; ++i) {
        b.x0.row(i) = data.row(pick(rng));
        b.t[static_cast<std::size_t>(i)] = step(rng);
        for (Index j = 0; j < data.cols(); ++j) b.noise(i, j) = normal(rng);
    }
    return b;
}

DenoiserParams init_for(const TrainConfig& config, int data_dim) {
    std::vector<int> dims{data_dim};
    dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
    dims.push_back(data_dim);
    return init_params(dims, config.embed_dim, data_dim, derive_seed(config.seed, "params"));
}

RunRecord train_from(const DenoiserParams& init, const TrainConfig& config, const ToyDataset& dataset,
                     const Schedule& schedule, StepRange range, const Matrix& reference) {
    check(config);
    minsnr::check(init);
    if (dataset.points.rows() < 1) throw std::invalid_argument("empty dataset");
    const Step t_high = range.high == 0 ? schedule.T : range.high;
    if (range.low < 1 || t_high > schedule.T || range.low > t_high)
        throw std::invalid_argument("invalid timestep range");
    const Matrix& ref = reference.size() == 0 ? dataset.points : reference;

    RunRecord record;
    record.final_params = init;
    record.ema_params = init;
    Vector& theta = record.final_params.theta;
    Vector& ema = record.ema_params.theta;
    AdamW opt(theta.size(), config.beta1, config.beta2, config.adam_eps, config.weight_decay);
    std::mt19937_64 rng(derive_seed(config.seed, "batches"));

    const auto start = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    long loss_count = 0;
    WeightStrategy strategy = config.strategy;
    for (long i = 0; i < config.iterations; ++i) {
        if (config.reweight_every > 0 && i % config.reweight_every == 0) {
            const auto bundle = collect_bin_gradients(record.final_params, dataset.points, schedule, config.bins,
                                                      config.reweight_samples, config.target,
                                                      derive_seed(derive_seed(config.seed, "reweight"),
                                                                  static_cast<std::uint64_t>(i)));
            UgdState ugd;
            ugd.lambda = config.reweight_lambda;
            const Vector w = ugd_solve(normalized(bundle), ugd).values();
            // Mean loss factor 1 keeps the effective learning rate comparable to constant weighting.
            const Vector scaled = w * static_cast<double>(config.bins);
            strategy = WeightStrategy::external({scaled.data(), scaled.data() + scaled.size()}, bundle.bin_edges);
            record.reweights.emplace_back(i, w);
        }
        const Batch batch = draw_batch(dataset.points, config.batch_size, range.low, t_high, rng);
        const auto lg = loss_and_grad(record.final_params, batch.x0, batch.t, batch.noise, schedule,
                                      strategy, config.target);
        opt.step(theta, lg.grad, learning_rate_at(config, i));
        ema = ema_update(ema, theta, config.ema_rate);
        if (!theta.allFinite()) throw std::runtime_error("parameters diverged at iteration " + std::to_string(i + 1));
        loss_sum += lg.loss;
        ++loss_count;

        const long done = i + 1;
        if (done % config.eval_every != 0 && done != config.iterations) continue;
        const DenoiserParams& eval = config.eval_use_ema ? record.ema_params : record.final_params;
        EvalRow row;
        row.iteration = done;
        row.loss = loss_sum / static_cast<double>(loss_count);
        row.bin_losses = binned_unweighted_loss(eval, dataset.points, schedule, config.bins,
                                                config.target, config.eval_bin_samples,
                                                derive_seed(config.seed, "binloss"));
        if (config.eval_samples > 0) {
            const SamplerConfig sampler{SamplerKind::Deterministic, config.eval_steps,
                                        derive_seed(config.seed, "eval-sampler")};
            const Matrix samples = generate(eval, schedule, sampler, config.eval_samples, config.target);
            row.metric = sliced_wasserstein(samples, ref, config.n_projections,
                                            derive_seed(config.seed, "eval-projections"));
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        record.rows.push_back(std::move(row));
        if (config.keep_snapshots) record.snapshots.push_back({done, record.final_params, record.ema_params});
        loss_sum = 0.0;
        loss_count = 0;
    }
    return record;
}

RunRecord train(const TrainConfig& config, const ToyDataset& dataset, const Schedule& schedule,
                const Matrix& reference) {
    return train_from(init_for(config, static_cast<int>(dataset.points.cols())), config, dataset,
                      schedule, {}, reference);
}

namespace {

/// Draws `n` samples with steps inside one bin from a per-bin stream.
Batch bin_batch(const Matrix& data, const std::vector<int>& edges, int bin, Index n,
                std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(bin)));
    return draw_batch(data, n, edges[bin], edges[bin + 1] - 1, rng);
}

}  // namespace

BinnedLoss binned_unweighted_loss_stats(const DenoiserParams& params, const Matrix& data,
                                        const Schedule& schedule, int bins,
                                        PredictionTarget target, int samples_per_bin,
                                        std::uint64_t seed) {
    if (samples_per_bin < 1) throw std::invalid_argument("samples_per_bin must be >= 1");
    const auto edges = uniform_bin_edges(schedule.T, bins);
    BinnedLoss out{Vector(bins), Vector(bins)};
    for (int b = 0; b < bins; ++b) {
        const Batch batch = bin_batch(data, edges, b, samples_per_bin, seed);
        const Matrix x_t = sample_forward(batch.x0, batch.t, batch.noise, schedule);
        const auto pred = forward(params, x_t, batch.t, schedule.T, target);
        const auto x0_hat = convert_prediction(pred, PredictionTarget::X0, x_t, batch.t, schedule);
        const Vector err = (batch.x0 - x0_hat.values).rowwise().squaredNorm();
        const double mean = err.mean();
        out.mean[b] = mean;
        const double var = samples_per_bin > 1
                               ? (err.array() - mean).square().sum() / (samples_per_bin - 1)
                               : 0.0;
        out.std_error[b] = std::sqrt(var / samples_per_bin);
    }
    return out;
}

Vector binned_unweighted_loss(const DenoiserParams& params, const Matrix& data,
                              const Schedule& schedule, int bins, PredictionTarget target,
                              int samples_per_bin, std::uint64_t seed) {
    return binned_unweighted_loss_stats(params, data, schedule, bins, target, samples_per_bin, seed).mean;
}

Vector conflict_probe(const DenoiserParams& params, const ToyDataset& dataset,
                      const Schedule& schedule, int focus_bin, long finetune_iters,
                      const TrainConfig& config, int samples_per_bin) {
    const auto edges = uniform_bin_edges(schedule.T, config.bins);
    if (focus_bin < 0 || focus_bin >= config.bins) throw std::invalid_argument("focus bin out of range");
    const std::uint64_t probe_seed = derive_seed(config.seed, "probe-loss");
    const Vector before = binned_unweighted_loss(params, dataset.points, schedule, config.bins,
                                                 config.target, samples_per_bin, probe_seed);
    if (finetune_iters == 0) return Vector::Zero(config.bins);

    TrainConfig ft = config;
    ft.iterations = finetune_iters;
    ft.warmup_iters = 0;
    ft.eval_every = finetune_iters;
    ft.eval_samples = 0;
    ft.eval_use_ema = false;
    ft.reweight_every = 0;
    ft.seed = derive_seed(config.seed, "finetune");
    const auto record = train_from(params, ft, dataset, schedule,
                                   {edges[focus_bin], edges[focus_bin + 1] - 1});
    const Vector after = binned_unweighted_loss(record.final_params, dataset.points, schedule,
                                                config.bins, config.target, samples_per_bin, probe_seed);
    return after - before;
}

GradientBundle collect_bin_gradients(const DenoiserParams& params, const Matrix& data,
                                     const Schedule& schedule, int bins, int samples_per_bin,
                                     PredictionTarget target, std::uint64_t seed) {
    if (samples_per_bin < 1) throw std::invalid_argument("samples_per_bin must be >= 1");
    GradientBundle bundle;
    bundle.bin_edges = uniform_bin_edges(schedule.T, bins);
    bundle.grads.resize(params.theta.size(), bins);
    bundle.counts.assign(bins, samples_per_bin);
    const Vector ones = Vector::Ones(samples_per_bin);
    for (int b = 0; b < bins; ++b) {
        const Batch batch = bin_batch(data, bundle.bin_edges, b, samples_per_bin, seed);
        const Matrix x_t = sample_forward(batch.x0, batch.t, batch.noise, schedule);
        const Matrix y = regression_target(batch.x0, batch.noise, batch.t, schedule, target);
        bundle.grads.col(b) = regression_loss_and_grad(params, x_t, batch.t, schedule.T, y, ones).grad;
    }
    return bundle;
}

std::vector<InstabilityRow> instability_experiment(const DenoiserParams& params, const Matrix& data,
                                                   const Schedule& schedule,
                                                   const std::vector<int>& sample_sizes,
                                                   int repeats, double lambda, std::uint64_t seed,
                                                   int bins, PredictionTarget target) {
    if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
    std::vector<InstabilityRow> rows;
    for (std::size_t k = 0; k < sample_sizes.size(); ++k) {
        const int n = sample_sizes[k];
        if (n < 1) throw std::invalid_argument("sample sizes must be >= 1");
        Matrix weights(bins, repeats);
        for (int r = 0; r < repeats; ++r) {
            const auto draw_seed = derive_seed(derive_seed(seed, static_cast<std::uint64_t>(n)),
                                               static_cast<std::uint64_t>(r));
            const auto bundle = normalized(
                collect_bin_gradients(params, data, schedule, bins, n, target, draw_seed));
            UgdState state;
            state.lambda = lambda;
            weights.col(r) = ugd_solve(bundle, state).values();
        }
        double spread = 0.0;
        if (repeats > 1) {
            const Vector mean = weights.rowwise().mean();
            const Vector var = (weights.colwise() - mean).rowwise().squaredNorm() / (repeats - 1);
            spread = var.cwiseSqrt().mean();
        }
        rows.push_back({n, spread});
    }
    return rows;
}

Vector bin_average_weights(const WeightStrategy& strategy, PredictionTarget target,
                           const Schedule& schedule, const std::vector<int>& edges) {
    const auto B = static_cast<Index>(edges.size()) - 1;
    Vector out(B);
    for (Index b = 0; b < B; ++b) {
        double sum = 0.0;
        for (Step t = edges[b]; t < edges[b + 1]; ++t) sum += loss_weight(strategy, target, schedule, t);
        out[b] = sum / (edges[b + 1] - edges[b]);
    }
    return out;
}

std::vector<ObjectiveRow> objective_comparison(const DenoiserParams& params, const Matrix& data,
                                               const Schedule& schedule,
                                               const std::vector<WeightStrategy>& strategies,
                                               double lambda, int bins, std::uint64_t seed,
                                               PredictionTarget target, int samples_per_bin) {
    if (strategies.empty()) throw std::invalid_argument("no strategies to compare");
    const auto bundle = normalized(
        collect_bin_gradients(params, data, schedule, bins, samples_per_bin, target, seed));
    std::vector<ObjectiveRow> rows;
    for (const auto& s : strategies) {
        const auto w = SimplexWeights::project(bin_average_weights(s, target, schedule, bundle.bin_edges));
        rows.push_back({describe(s), w, regularized_objective(bundle, w, lambda)});
    }
    UgdState state;
    state.lambda = lambda;
    const auto ugd = ugd_solve(bundle, state);
    rows.push_back({"ugd", ugd, regularized_objective(bundle, ugd, lambda)});
    const auto fw = min_norm_frank_wolfe(bundle, lambda);
    rows.push_back({"frank-wolfe", fw.weights, regularized_objective(bundle, fw.weights, lambda)});
    return rows;
}

}  // namespace minsnr
