#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "minsnr/cli.hpp"
#include "minsnr/pareto.hpp"

using namespace minsnr;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Drops the trailing seconds column of a run CSV.
std::string without_seconds(const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + '\n';
    return out;
}

nlohmann::json tiny_overrides() {
    return {{"iters", 40},        {"batch", 16},        {"hidden", {8, 8}},      {"embed_dim", 4},
            {"eval_every", 20},   {"eval_samples", 64}, {"eval_steps", 5},       {"eval_bin_samples", 16},
            {"n_projections", 8}, {"n_data", 500},      {"n_reference", 200},    {"T", 100},
            {"bins", 4},          {"checkpoint_iters", 30}, {"finetune_iters", 10}, {"probe_samples", 32},
            {"sample_sizes", {8, 32}}, {"repeats", 2},  {"compare_samples", 32}, {"n_samples", 50},
            {"sample_steps", 5},  {"values", {1, 5}},   {"focus_bin", 1}};
}

}  // namespace

TEST_CASE("strategy grammar") {
    const auto m = parse_strategy("min-snr:5");
    CHECK(m.kind == WeightKind::MinSnrGamma);
    CHECK(m.gamma == 5.0);
    CHECK(parse_strategy("snr").kind == WeightKind::Snr);
    CHECK(parse_strategy("const").kind == WeightKind::Constant);
    CHECK(parse_strategy("max-snr:1").kind == WeightKind::MaxSnrGamma);
    CHECK(parse_strategy("min-snr").gamma == 5.0);
    CHECK(parse_strategy("min-snr:2.5").gamma == 2.5);
    CHECK_THROWS_AS(parse_strategy("min-snr:0"), std::invalid_argument);
    CHECK_THROWS_AS(parse_strategy("min-snr:-1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_strategy("min-snr:5x"), std::invalid_argument);
    CHECK_THROWS_AS(parse_strategy("min-snr:"), std::invalid_argument);
    CHECK_THROWS_AS(parse_strategy("minsnr"), std::invalid_argument);
    CHECK_THROWS_AS(parse_strategy("external:"), std::invalid_argument);
    CHECK_THROWS(parse_strategy("external:/nonexistent/weights.csv"));

    const auto path = fs::temp_directory_path() / "minsnr_strategy_weights.csv";
    Vector w(2);
    w << 0.25, 0.75;
    write_weights_csv(path.string(), SimplexWeights(w), {1, 51, 101});
    const auto e = parse_strategy("external:" + path.string());
    CHECK(e.kind == WeightKind::External);
    CHECK(e.external_weights == std::vector<double>{0.25, 0.75});
    CHECK(e.external_edges == std::vector<int>{1, 51, 101});
    fs::remove(path);
}

TEST_CASE("git blob hashes") {
    CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("config resolution") {
    auto c = apply_json(default_experiment(), {{"strategy", "max-snr"}, {"gamma", 2.0}, {"iters", 7}, {"lr", 0.5}});
    CHECK(c.train.strategy.kind == WeightKind::MaxSnrGamma);
    CHECK(c.train.strategy.gamma == 2.0);
    CHECK(c.train.iterations == 7);
    CHECK(c.train.learning_rate == 0.5);
    const auto again = apply_json(default_experiment(), to_json(c));
    CHECK(to_json(again) == to_json(c));

    CHECK_THROWS_AS(apply_json(default_experiment(), {{"colour", 1}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_json(default_experiment(), {{"strategy", "const"}, {"gamma", 3.0}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_json(default_experiment(), {{"iters", "many"}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_json(default_experiment(), {{"bins", 20}, {"focus_bin", 25}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_json(default_experiment(), nlohmann::json::array()), std::invalid_argument);
}

TEST_CASE("commands write reproducible artifacts") {
    const fs::path root = fs::temp_directory_path() / "minsnr_cli_test";
    fs::remove_all(root);
    std::ostringstream log;
    for (const auto& command : command_names()) {
        CAPTURE(command);
        std::vector<std::string> files;
        for (const char* run_name : {"a", "b"}) {
            ExperimentSpec spec{command, "", (root / command / run_name).string(), tiny_overrides()};
            spec.overrides["strategy"] = "min-snr:5";
            REQUIRE_NOTHROW(run(spec, log));
        }
        for (const auto& entry : fs::directory_iterator(root / command / "a")) {
            const auto name = entry.path().filename();
            std::string a = slurp(entry.path()), b = slurp(root / command / "b" / name);
            if (name.string().rfind("run", 0) == 0) {
                a = without_seconds(a);
                b = without_seconds(b);
            }
            CHECK_MESSAGE(a == b, name.string());
            files.push_back(name.string());
        }
        CHECK(std::find(files.begin(), files.end(), "manifest.json") != files.end());
        const auto manifest = nlohmann::json::parse(slurp(root / command / "a" / "manifest.json"));
        CHECK(manifest.at("command") == command);
        CHECK(manifest.at("config").at("T") == 100);
        CHECK(manifest.at("config_git_blob_sha1").get<std::string>().size() == 40);
    }

    const auto run_csv = slurp(root / "train" / "a" / "run.csv");
    CHECK(run_csv.rfind("iteration,loss,binloss_0,binloss_1,binloss_2,binloss_3,metric,seconds\n", 0) == 0);
    const auto summary = slurp(root / "sweep-gamma" / "a" / "summary.csv");
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);

    // A manifest's resolved config re-runs to the same outputs.
    const auto manifest = nlohmann::json::parse(slurp(root / "train" / "a" / "manifest.json"));
    const fs::path cfg = root / "resolved.json";
    std::ofstream(cfg) << manifest.at("config").dump();
    REQUIRE_NOTHROW(run({"train", cfg.string(), (root / "rerun").string(), nlohmann::json::object()}, log));
    CHECK(slurp(root / "rerun" / "checkpoint.bin") == slurp(root / "train" / "a" / "checkpoint.bin"));
    CHECK(without_seconds(slurp(root / "rerun" / "run.csv")) == without_seconds(run_csv));

    // Diagnostics can start from a saved checkpoint, which becomes a hashed input.
    auto from_ckpt = tiny_overrides();
    from_ckpt["checkpoint"] = (root / "train" / "a" / "checkpoint.bin").string();
    REQUIRE_NOTHROW(run({"objective-compare", "", (root / "obj").string(), from_ckpt}, log));
    const auto obj_manifest = nlohmann::json::parse(slurp(root / "obj" / "manifest.json"));
    CHECK(obj_manifest.at("inputs").size() == 1);
    // The optimized weights feed back in as an external strategy.
    CHECK_NOTHROW(parse_strategy("external:" + (root / "obj" / "optimized_weights.csv").string()));

    CHECK_THROWS_AS(run({"fly", "", (root / "x").string(), {}}, log), std::invalid_argument);
    CHECK_THROWS_AS(run({"train", "", "", {}}, log), std::invalid_argument);
    fs::remove_all(root);
}

TEST_CASE("sweep results do not depend on the worker count") {
    auto c = apply_json(default_experiment(), tiny_overrides());
    c.sweep_seeds = {3, 4};
    const auto one = sweep_gamma(c, 1);
    const auto many = sweep_gamma(c, 3);
    REQUIRE(one.size() == 4);
    for (std::size_t i = 0; i < one.size(); ++i) {
        CHECK(one[i].gamma == many[i].gamma);
        CHECK(one[i].seed == many[i].seed);
        CHECK(one[i].final_metric == many[i].final_metric);
        CHECK(one[i].record.final_params.theta == many[i].record.final_params.theta);
    }
}
