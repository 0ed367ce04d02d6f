#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "minsnr/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Min-SNR diffusion training lab"};
    app.require_subcommand(1, 1);

    minsnr::ExperimentSpec spec;
    std::string strategy, target, schedule, values, checkpoint;
    double gamma = 0.0, lr = 0.0;
    long iters = 0, batch = 0, T = 0;
    int bins = 0;
    unsigned long long seed = 0;

    for (const auto& name : minsnr::command_names()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", spec.config_path, "Flat JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--out", spec.out_dir, "Output directory")->required();
        sub->add_option("--seed", seed, "Root seed");
        sub->add_option("--strategy", strategy, "const | snr | max-snr:G | min-snr:G | external:PATH");
        sub->add_option("--target", target, "Prediction target")->check(CLI::IsMember({"x0", "eps", "v"}));
        sub->add_option("--gamma", gamma, "Gamma for min-snr / max-snr");
        sub->add_option("--bins", bins, "Timestep bins");
        sub->add_option("--iters", iters, "Training iterations");
        sub->add_option("--lr", lr, "Learning rate");
        sub->add_option("--batch", batch, "Batch size");
        sub->add_option("--schedule", schedule, "Noise schedule")->check(CLI::IsMember({"cosine", "linear"}));
        sub->add_option("--T", T, "Number of diffusion steps");
        sub->add_option("--checkpoint", checkpoint, "Start diagnostics or sampling from this checkpoint");
        if (name == "sweep-gamma") sub->add_option("--values", values, "Comma-separated gamma values");
    }
    CLI11_PARSE(app, argc, argv);

    auto* sub = app.get_subcommands().front();
    spec.command = sub->get_name();
    auto& o = spec.overrides;
    if (sub->count("--seed")) o["seed"] = seed;
    if (sub->count("--strategy")) o["strategy"] = strategy;
    if (sub->count("--target")) o["target"] = target;
    if (sub->count("--gamma")) o["gamma"] = gamma;
    if (sub->count("--bins")) o["bins"] = bins;
    if (sub->count("--iters")) o["iters"] = iters;
    if (sub->count("--lr")) o["lr"] = lr;
    if (sub->count("--batch")) o["batch"] = batch;
    if (sub->count("--schedule")) o["schedule"] = schedule;
    if (sub->count("--T")) o["T"] = T;
    if (sub->count("--checkpoint")) o["checkpoint"] = checkpoint;
    if (spec.command == "sweep-gamma" && sub->count("--values")) {
        std::vector<double> parsed;
        std::stringstream ss(values);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                std::size_t used = 0;
                parsed.push_back(std::stod(item, &used));
                if (used != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                std::cerr << "error: malformed --values entry '" << item << "'\n";
                return 2;
            }
        }
        o["values"] = parsed;
    }

    try {
        minsnr::run(spec, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
