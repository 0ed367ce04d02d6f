#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "minsnr/data_metrics.hpp"
#include "minsnr/sampling.hpp"
#include "minsnr/schedule.hpp"
#include "minsnr/training.hpp"
#include "minsnr/weighting.hpp"

namespace minsnr {

/// Strict strategy grammar: const | snr | max-snr:G | min-snr:G | external:PATH.
/// A bare "min-snr" or "max-snr" takes the default gamma.
WeightStrategy parse_strategy(const std::string& text);

/// Fully resolved experiment settings. Flat JSON; CLI flags override file keys.
struct ExperimentConfig {
    TrainConfig train;
    ScheduleKind schedule = ScheduleKind::Cosine;
    int T = 1000;
    DatasetKind dataset = DatasetKind::GaussianMixture8;
    Index n_data = 20000;
    Index n_reference = 4096;

    /// Diagnostics start from this checkpoint; empty means train a constant-weight
    /// model for checkpoint_iters with the same settings.
    std::string checkpoint;
    long checkpoint_iters = 10000;
    /// Diagnostics read EMA parameters instead of raw ones.
    bool diagnostics_use_ema = false;

    int focus_bin = 2;
    long finetune_iters = 2000;
    int probe_samples = 2048;

    std::vector<int> sample_sizes = {64, 256, 1024, 4096};
    int repeats = 5;
    double lambda = 0.01;

    std::vector<std::string> compare = {"const", "snr", "max-snr:1", "min-snr:5"};
    int compare_samples = 2048;

    SamplerKind sampler = SamplerKind::Deterministic;
    Index n_samples = 4096;
    int sample_steps = 100;

    std::vector<double> gamma_values = {1, 5, 10, 20};
    std::vector<std::uint64_t> sweep_seeds;  // empty means {train.seed}

    /// Source texts of any strategies loaded from files, for the manifest.
    std::vector<std::string> input_files;
};

/// Defaults are the experiment defaults above, not the bare TrainConfig ones.
ExperimentConfig default_experiment();

/// Applies a flat JSON object on top of `base`. Unknown keys are rejected.
ExperimentConfig apply_json(ExperimentConfig base, const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);

struct ExperimentData {
    Schedule schedule;
    ToyDataset dataset;
    Matrix reference;
};

/// Training set from derive_seed(seed, "data"); held-out reference from derive_seed(seed, "reference").
ExperimentData make_experiment_data(const ExperimentConfig& config);

/// Loads config.checkpoint, or trains the constant-weight checkpoint.
DenoiserParams diagnostic_checkpoint(const ExperimentConfig& config, const ExperimentData& data);

struct SweepRow {
    double gamma = 0.0;
    std::uint64_t seed = 0;
    double final_metric = 0.0;
    double final_loss = 0.0;
    RunRecord record;
};

/// Paired Min-SNR runs: every gamma shares each seed's data, init and batches.
/// Runs fan out over at most `threads` workers; results do not depend on it.
std::vector<SweepRow> sweep_gamma(const ExperimentConfig& config, unsigned threads);

/// Worker cap from MINSNR_THREADS (default: hardware concurrency).
unsigned thread_budget();

/// Git blob id: SHA-1 of "blob <size>\0" followed by the bytes.
std::string git_blob_sha1(const std::string& bytes);

struct ExperimentSpec {
    std::string command;
    std::string config_path;
    std::string out_dir;
    nlohmann::json overrides = nlohmann::json::object();
};

const std::vector<std::string>& command_names();

/// Runs one command, writing artifacts and manifest.json under out_dir. Throws on failure.
void run(const ExperimentSpec& spec, std::ostream& log);

}  // namespace minsnr
