#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gsmforge/commands.hpp"
#include "gsmforge/config.hpp"
#include "gsmforge/plot.hpp"

using namespace gsmforge;

int main(int argc, char** argv) {
    CLI::App app{"gsmforge: toy learned-image-compression codec and targeted "
                 "reconstruction-manipulation attacks against it"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    std::string config_path, weights_path, grid_arg;
    std::string plot_kind, plot_in, plot_out;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config file")->required();
    };
    auto add_weights = [&](CLI::App* sub) {
        sub->add_option("--weights", weights_path, "trained codec weights (.gsmf)")->required();
    };

    CLI::App* train = app.add_subcommand("train", "train the toy codec");
    add_config(train);

    CLI::App* attack = app.add_subcommand("attack", "run the configured attack per pair");
    add_config(attack);
    add_weights(attack);

    CLI::App* sweep = app.add_subcommand("sweep", "grid over (epsilon, steps) with seed averaging");
    add_config(sweep);
    add_weights(sweep);

    CLI::App* ablate = app.add_subcommand("ablate-k", "decay-factor ablation grid");
    add_config(ablate);
    add_weights(ablate);
    ablate->add_option("--grid", grid_arg, "comma-separated decay factors (default from config)");

    CLI::App* defense = app.add_subcommand("defense", "JPEG-defense three-condition protocol");
    add_config(defense);
    add_weights(defense);

    CLI::App* plot = app.add_subcommand("plot", "render a CSV as an SVG");
    plot->add_option("--kind", plot_kind, "lcs_trajectory | sweep_heatmap | ablation_curve")
        ->required();
    plot->add_option("--in", plot_in, "input CSV")->required();
    plot->add_option("--out", plot_out, "output SVG")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (plot->parsed()) {
            emit_plot(plot_in, plot_kind, plot_out);
            return 0;
        }
        Config cfg = Config::parse_file(config_path);
        if (train->parsed()) return cmd_train(cfg);
        if (attack->parsed()) return cmd_attack(cfg, weights_path);
        if (sweep->parsed()) return cmd_sweep(cfg, weights_path);
        if (defense->parsed()) return cmd_defense(cfg, weights_path);
        if (ablate->parsed()) {
            std::vector<double> grid;
            if (!grid_arg.empty()) {
                Config tmp;
                tmp.set("cli.grid", grid_arg);
                grid = tmp.get_double_list("cli.grid");
            }
            return cmd_ablate_k(cfg, weights_path, grid);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
