#include "minsnr/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <openssl/evp.h>

#include "minsnr/pareto.hpp"
#include "minsnr/sampling.hpp"

namespace minsnr {

namespace fs = std::filesystem;

namespace {

const std::string kSeedRule =
    "child = splitmix64(splitmix64(root) ^ splitmix64(fnv1a64(label) + 0x632be59bd9b4e019)); "
    "splitmix64 is the standard finalizer with increment 0x9e3779b97f4a7c15";

double parse_gamma(const std::string& text, const std::string& whole) {
    std::size_t used = 0;
    double g = 0.0;
    try {
        g = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size())
        throw std::invalid_argument("malformed gamma in strategy '" + whole + "'");
    if (!(g > 0.0) || !std::isfinite(g))
        throw std::invalid_argument("gamma must be positive and finite in strategy '" + whole + "'");
    return g;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string gamma_label(double g) {
    std::ostringstream out;
    out << g;
    return out.str();
}

const std::set<std::string>& train_keys() {
    static const std::set<std::string> keys = {
        "iterations",   "batch_size",   "learning_rate",    "adam_betas", "adam_eps",
        "weight_decay", "warmup_iters", "ema_rate",         "seed",       "target",
        "bins",         "eval_every",   "hidden",           "embed_dim",  "eval_samples",
        "eval_steps",   "eval_bin_samples", "n_projections", "eval_use_ema",
        "external_weights", "external_edges", "reweight_every", "reweight_samples", "reweight_lambda"};
    return keys;
}

const std::set<std::string>& experiment_keys() {
    static const std::set<std::string> keys = {
        "strategy",      "gamma",          "schedule",        "T",
        "dataset",       "n_data",         "n_reference",     "checkpoint",
        "checkpoint_iters", "diagnostics_use_ema", "focus_bin", "finetune_iters",
        "probe_samples", "sample_sizes",   "repeats",         "lambda",
        "compare",       "compare_samples", "sampler",        "n_samples",
        "sample_steps",  "gamma_values",   "sweep_seeds",
        // short twins of command-line flags
        "iters", "lr", "batch", "values"};
    return keys;
}

}  // namespace

WeightStrategy parse_strategy(const std::string& text) {
    const std::string grammar = " (expected const|snr|max-snr:G|min-snr:G|external:PATH)";
    if (text == "const") return WeightStrategy::constant();
    if (text == "snr") return WeightStrategy::snr();
    if (text == "min-snr") return WeightStrategy::min_snr(kDefaultGamma);
    if (text == "max-snr") return WeightStrategy::max_snr(1.0);
    if (text.rfind("min-snr:", 0) == 0) return WeightStrategy::min_snr(parse_gamma(text.substr(8), text));
    if (text.rfind("max-snr:", 0) == 0) return WeightStrategy::max_snr(parse_gamma(text.substr(8), text));
    if (text.rfind("external:", 0) == 0) {
        const std::string path = text.substr(9);
        if (path.empty()) throw std::invalid_argument("external strategy needs a CSV path" + grammar);
        const auto bw = read_weights_csv(path);
        auto s = WeightStrategy::external(bw.weights, bw.edges);
        check(s);
        return s;
    }
    throw std::invalid_argument("unknown strategy '" + text + "'" + grammar);
}

ExperimentConfig default_experiment() {
    ExperimentConfig c;
    c.train.ema_rate = 0.999;
    c.train.eval_samples = 4096;
    return c;
}

ExperimentConfig apply_json(ExperimentConfig c, const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("experiment config must be a flat JSON object");
    nlohmann::json train_part = nlohmann::json::object();
    for (const auto& [key, value] : j.items()) {
        if (train_keys().count(key)) {
            train_part[key] = value;
        } else if (!experiment_keys().count(key)) {
            throw std::invalid_argument("unknown config key '" + key + "'");
        }
    }
    try {
        if (j.contains("iters")) train_part["iterations"] = j.at("iters");
        if (j.contains("lr")) train_part["learning_rate"] = j.at("lr");
        if (j.contains("batch")) train_part["batch_size"] = j.at("batch");
        c.train = train_config_from_json(train_part, c.train);

        if (j.contains("strategy")) {
            const auto text = j.at("strategy").get<std::string>();
            if (text == "external") {
                if (!j.contains("external_weights"))
                    throw std::invalid_argument("strategy 'external' needs external_weights");
            } else {
                c.train.strategy = parse_strategy(text);
                if (text.rfind("external:", 0) == 0) c.input_files.push_back(text.substr(9));
            }
        }
        if (j.contains("gamma")) {
            const double g = j.at("gamma").get<double>();
            auto& s = c.train.strategy;
            if (s.kind != WeightKind::MinSnrGamma && s.kind != WeightKind::MaxSnrGamma)
                throw std::invalid_argument("gamma only applies to min-snr and max-snr strategies");
            if (!(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("gamma must be positive");
            s.gamma = g;
        }
        if (j.contains("schedule")) c.schedule = parse_schedule_kind(j.at("schedule").get<std::string>());
        c.T = j.value("T", c.T);
        if (j.contains("dataset")) c.dataset = parse_dataset_kind(j.at("dataset").get<std::string>());
        c.n_data = j.value("n_data", c.n_data);
        c.n_reference = j.value("n_reference", c.n_reference);
        c.checkpoint = j.value("checkpoint", c.checkpoint);
        c.checkpoint_iters = j.value("checkpoint_iters", c.checkpoint_iters);
        c.diagnostics_use_ema = j.value("diagnostics_use_ema", c.diagnostics_use_ema);
        c.focus_bin = j.value("focus_bin", c.focus_bin);
        c.finetune_iters = j.value("finetune_iters", c.finetune_iters);
        c.probe_samples = j.value("probe_samples", c.probe_samples);
        c.sample_sizes = j.value("sample_sizes", c.sample_sizes);
        c.repeats = j.value("repeats", c.repeats);
        c.lambda = j.value("lambda", c.lambda);
        c.compare = j.value("compare", c.compare);
        c.compare_samples = j.value("compare_samples", c.compare_samples);
        if (j.contains("sampler")) c.sampler = parse_sampler_kind(j.at("sampler").get<std::string>());
        c.n_samples = j.value("n_samples", c.n_samples);
        c.sample_steps = j.value("sample_steps", c.sample_steps);
        c.gamma_values = j.value("gamma_values", c.gamma_values);
        if (j.contains("values")) c.gamma_values = j.at("values").get<std::vector<double>>();
        c.sweep_seeds = j.value("sweep_seeds", c.sweep_seeds);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad config value: ") + e.what());
    }

    check(c.train);
    if (c.T < 2) throw std::invalid_argument("T must be at least 2");
    if (c.train.bins > c.T) throw std::invalid_argument("more bins than timesteps");
    if (c.n_data < 2 || c.n_reference < 2) throw std::invalid_argument("datasets need at least 2 points");
    if (c.checkpoint_iters < 1 || c.finetune_iters < 0) throw std::invalid_argument("bad iteration counts");
    if (c.focus_bin < 0 || c.focus_bin >= c.train.bins) throw std::invalid_argument("focus_bin outside [0, bins)");
    if (c.probe_samples < 1 || c.compare_samples < 1 || c.repeats < 1)
        throw std::invalid_argument("sample counts must be positive");
    if (c.sample_sizes.empty() || *std::min_element(c.sample_sizes.begin(), c.sample_sizes.end()) < 1)
        throw std::invalid_argument("sample_sizes must be positive");
    if (!(c.lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
    if (c.n_samples < 1 || c.sample_steps < 1 || c.sample_steps > c.T)
        throw std::invalid_argument("bad sampling settings");
    for (double g : c.gamma_values)
        if (!(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("sweep gammas must be positive");
    for (const auto& s : c.compare) {
        if (s.rfind("external:", 0) == 0) throw std::invalid_argument("compare accepts built-in strategies only");
        parse_strategy(s);
    }
    return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j = to_json(c.train);
    j["schedule"] = to_string(c.schedule);
    j["T"] = c.T;
    j["dataset"] = to_string(c.dataset);
    j["n_data"] = c.n_data;
    j["n_reference"] = c.n_reference;
    j["checkpoint"] = c.checkpoint;
    j["checkpoint_iters"] = c.checkpoint_iters;
    j["diagnostics_use_ema"] = c.diagnostics_use_ema;
    j["focus_bin"] = c.focus_bin;
    j["finetune_iters"] = c.finetune_iters;
    j["probe_samples"] = c.probe_samples;
    j["sample_sizes"] = c.sample_sizes;
    j["repeats"] = c.repeats;
    j["lambda"] = c.lambda;
    j["compare"] = c.compare;
    j["compare_samples"] = c.compare_samples;
    j["sampler"] = c.sampler == SamplerKind::Ancestral ? "ancestral" : "deterministic";
    j["n_samples"] = c.n_samples;
    j["sample_steps"] = c.sample_steps;
    j["gamma_values"] = c.gamma_values;
    j["sweep_seeds"] = c.sweep_seeds;
    return j;
}

ExperimentData make_experiment_data(const ExperimentConfig& c) {
    ExperimentData d;
    d.schedule = c.schedule == ScheduleKind::Cosine ? build_cosine_schedule(c.T) : build_linear_schedule(c.T);
    d.dataset = make_dataset(c.dataset, c.n_data, derive_seed(c.train.seed, "data"));
    d.reference = make_dataset(c.dataset, c.n_reference, derive_seed(c.train.seed, "reference")).points;
    return d;
}

DenoiserParams diagnostic_checkpoint(const ExperimentConfig& c, const ExperimentData& d) {
    if (!c.checkpoint.empty()) {
        auto ck = read_checkpoint(c.checkpoint);
        if (ck.params.data_dim != d.dataset.points.cols())
            throw std::invalid_argument("checkpoint data dimension does not match the dataset");
        return ck.params;
    }
    TrainConfig tc = c.train;
    tc.strategy = WeightStrategy::constant();
    tc.iterations = c.checkpoint_iters;
    tc.eval_every = c.checkpoint_iters;
    tc.eval_samples = 0;
    tc.reweight_every = 0;
    const auto record = train(tc, d.dataset, d.schedule, d.reference);
    return c.diagnostics_use_ema ? record.ema_params : record.final_params;
}

unsigned thread_budget() {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const char* env = std::getenv("MINSNR_THREADS");
    if (env == nullptr || *env == '\0') return hw;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw std::invalid_argument("MINSNR_THREADS must be a positive integer");
    return static_cast<unsigned>(v);
}

std::vector<SweepRow> sweep_gamma(const ExperimentConfig& c, unsigned threads) {
    const std::vector<std::uint64_t> seeds = c.sweep_seeds.empty() ? std::vector<std::uint64_t>{c.train.seed}
                                                                     : c.sweep_seeds;
    std::vector<SweepRow> rows;
    for (auto seed : seeds)
        for (double g : c.gamma_values) rows.push_back({g, seed, 0.0, 0.0, {}});

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto worker = [&] {
        for (std::size_t i = next++; i < rows.size(); i = next++) {
            try {
                ExperimentConfig rc = c;
                rc.train.seed = rows[i].seed;
                rc.train.strategy = WeightStrategy::min_snr(rows[i].gamma);
                const auto data = make_experiment_data(rc);
                rows[i].record = train(rc.train, data.dataset, data.schedule, data.reference);
                rows[i].final_metric = rows[i].record.rows.back().metric;
                rows[i].final_loss = rows[i].record.rows.back().loss;
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(rows.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < n; ++k) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return rows;
}

std::string git_blob_sha1(const std::string& bytes) {
    const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr) throw std::runtime_error("cannot allocate digest context");
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, md, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw std::runtime_error("SHA-1 digest failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return out.str();
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"train",     "conflict-probe", "instability",
                                                   "objective-compare", "sample", "sweep-gamma"};
    return names;
}

void run(const ExperimentSpec& spec, std::ostream& log) {
    const auto& names = command_names();
    if (std::find(names.begin(), names.end(), spec.command) == names.end())
        throw std::invalid_argument("unknown command '" + spec.command + "'");
    if (spec.out_dir.empty()) throw std::invalid_argument("an output directory is required");

    nlohmann::json inputs = nlohmann::json::array();
    ExperimentConfig cfg = default_experiment();
    if (!spec.config_path.empty()) {
        const std::string text = read_file(spec.config_path);
        inputs.push_back({{"path", spec.config_path}, {"git_blob_sha1", git_blob_sha1(text)}});
        nlohmann::json file;
        try {
            file = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument("cannot parse " + spec.config_path + ": " + e.what());
        }
        cfg = apply_json(cfg, file);
    }
    cfg = apply_json(cfg, spec.overrides);
    for (const auto& path : cfg.input_files)
        inputs.push_back({{"path", path}, {"git_blob_sha1", git_blob_sha1(read_file(path))}});
    if (!cfg.checkpoint.empty())
        inputs.push_back({{"path", cfg.checkpoint}, {"git_blob_sha1", git_blob_sha1(read_file(cfg.checkpoint))}});

    const fs::path out(spec.out_dir);
    fs::create_directories(out);
    const nlohmann::json resolved = to_json(cfg);
    const std::uint64_t seed = cfg.train.seed;
    nlohmann::json manifest = {
        {"command", spec.command},
        {"config", resolved},
        {"config_git_blob_sha1", git_blob_sha1(resolved.dump())},
        {"inputs", inputs},
        {"seed_rule", kSeedRule},
        {"seeds",
         {{"root", seed},
          {"data", derive_seed(seed, "data")},
          {"reference", derive_seed(seed, "reference")},
          {"params", derive_seed(seed, "params")},
          {"batches", derive_seed(seed, "batches")}}},
    };
    std::vector<std::string> outputs;
    const auto csv_precision = [](std::ostream& o) -> std::ostream& { return o << std::setprecision(17); };

    log << spec.command << ": seed " << seed << ", strategy " << describe(cfg.train.strategy) << ", target "
        << to_string(cfg.train.target) << "\n";

    if (spec.command == "train") {
        const auto data = make_experiment_data(cfg);
        const auto record = train(cfg.train, data.dataset, data.schedule, data.reference);
        write_run_csv((out / "run.csv").string(), record);
        write_checkpoint((out / "checkpoint.bin").string(), record.final_params, cfg.train.iterations);
        write_checkpoint((out / "ema.bin").string(), record.ema_params, cfg.train.iterations);
        outputs = {"run.csv", "checkpoint.bin", "ema.bin"};
        if (!record.reweights.empty()) {
            std::ostringstream csv;
            csv_precision(csv) << "iteration";
            for (int b = 0; b < cfg.train.bins; ++b) csv << ",w_" << b;
            csv << '\n';
            for (const auto& [it, w] : record.reweights) {
                csv << it;
                for (Index b = 0; b < w.size(); ++b) csv << ',' << w[b];
                csv << '\n';
            }
            write_file(out / "reweights.csv", csv.str());
            outputs.push_back("reweights.csv");
        }
        log << "final loss " << record.rows.back().loss << ", sliced W1 " << record.rows.back().metric << "\n";
    } else if (spec.command == "conflict-probe") {
        const auto data = make_experiment_data(cfg);
        const auto params = diagnostic_checkpoint(cfg, data);
        const auto delta = conflict_probe(params, data.dataset, data.schedule, cfg.focus_bin, cfg.finetune_iters,
                                          cfg.train, cfg.probe_samples);
        const auto edges = uniform_bin_edges(cfg.T, cfg.train.bins);
        std::ostringstream csv;
        csv_precision(csv) << "bin_index,low_t,high_t,distance,loss_change\n";
        for (int b = 0; b < cfg.train.bins; ++b)
            csv << b << ',' << edges[b] << ',' << edges[b + 1] - 1 << ',' << std::abs(b - cfg.focus_bin) << ','
                << delta[b] << '\n';
        write_file(out / "probe.csv", csv.str());
        outputs = {"probe.csv"};
        if (cfg.checkpoint.empty()) {
            write_checkpoint((out / "checkpoint.bin").string(), params, cfg.checkpoint_iters);
            outputs.push_back("checkpoint.bin");
        }
        manifest["probe"] = {{"finetune_lr", cfg.train.learning_rate}, {"warmup", false}, {"optimizer_state", "fresh"}};
    } else if (spec.command == "instability") {
        const auto data = make_experiment_data(cfg);
        const auto params = diagnostic_checkpoint(cfg, data);
        const auto rows = instability_experiment(params, data.dataset.points, data.schedule, cfg.sample_sizes,
                                                 cfg.repeats, cfg.lambda, derive_seed(seed, "instability"),
                                                 cfg.train.bins, cfg.train.target);
        std::ostringstream csv;
        csv_precision(csv) << "sample_size,weight_stddev\n";
        for (const auto& r : rows) csv << r.sample_size << ',' << r.weight_stddev << '\n';
        write_file(out / "instability.csv", csv.str());
        outputs = {"instability.csv"};
        manifest["normalization"] = "gradient bundle scaled to unit mean squared column norm; lambda is relative";
    } else if (spec.command == "objective-compare") {
        const auto data = make_experiment_data(cfg);
        const auto params = diagnostic_checkpoint(cfg, data);
        std::vector<WeightStrategy> strategies;
        for (const auto& s : cfg.compare) strategies.push_back(parse_strategy(s));
        const auto rows = objective_comparison(params, data.dataset.points, data.schedule, strategies, cfg.lambda,
                                               cfg.train.bins, derive_seed(seed, "objective"), cfg.train.target,
                                               cfg.compare_samples);
        std::ostringstream csv;
        csv_precision(csv) << "name,objective";
        for (int b = 0; b < cfg.train.bins; ++b) csv << ",w_" << b;
        csv << '\n';
        for (const auto& r : rows) {
            csv << r.name << ',' << r.objective;
            for (Index b = 0; b < r.weights.values().size(); ++b) csv << ',' << r.weights.values()[b];
            csv << '\n';
        }
        write_file(out / "objective.csv", csv.str());
        write_weights_csv((out / "optimized_weights.csv").string(), rows.back().weights,
                          uniform_bin_edges(cfg.T, cfg.train.bins));
        outputs = {"objective.csv", "optimized_weights.csv"};
        manifest["normalization"] =
            "each strategy's bin-averaged weights are normalized to the simplex before scoring; the gradient "
            "bundle is scaled to unit mean squared column norm; lambda is relative";
    } else if (spec.command == "sample") {
        const auto data = make_experiment_data(cfg);
        DenoiserParams params;
        if (!cfg.checkpoint.empty()) {
            params = read_checkpoint(cfg.checkpoint).params;
        } else {
            const auto record = train(cfg.train, data.dataset, data.schedule, data.reference);
            params = cfg.train.eval_use_ema ? record.ema_params : record.final_params;
        }
        const SamplerConfig sampler{cfg.sampler, cfg.sample_steps, derive_seed(seed, "samples")};
        const Matrix samples = generate(params, data.schedule, sampler, cfg.n_samples, cfg.train.target);
        write_points_csv((out / "samples.csv").string(), samples);
        const double sw = sliced_wasserstein(samples, data.reference, cfg.train.n_projections,
                                             derive_seed(seed, "sample-metric"));
        std::ostringstream metrics;
        csv_precision(metrics) << "metric,value\nsliced_wasserstein," << sw << '\n';
        write_file(out / "metrics.csv", metrics.str());
        outputs = {"samples.csv", "metrics.csv"};
        log << "sliced W1 to held-out data " << sw << "\n";
    } else {
        const auto rows = sweep_gamma(cfg, thread_budget());
        std::ostringstream csv;
        csv_precision(csv) << "gamma,seed,final_loss,final_metric\n";
        for (const auto& r : rows) {
            const std::string name = "run_gamma" + gamma_label(r.gamma) + "_seed" + std::to_string(r.seed) + ".csv";
            write_run_csv((out / name).string(), r.record);
            outputs.push_back(name);
            csv << r.gamma << ',' << r.seed << ',' << r.final_loss << ',' << r.final_metric << '\n';
            log << "gamma " << r.gamma << " seed " << r.seed << ": sliced W1 " << r.final_metric << "\n";
        }
        write_file(out / "summary.csv", csv.str());
        outputs.push_back("summary.csv");
        manifest["pairing"] = "all gamma values share each seed's data, initialization, batches and noise";
    }

    manifest["outputs"] = outputs;
    write_file(out / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace minsnr
