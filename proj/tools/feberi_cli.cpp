#include <cstdio>
#include <string>

#include "CLI11.hpp"

#include "feberi/cli/runs.hpp"

using namespace feberi;
using namespace feberi::cli;

int main(int argc, char** argv) {
    CLI::App app{"Free-electron / two-level-system interaction: spectra, scans, bunching, evolution and Wigner maps"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tool_version);

    std::string config_path;
    RunOptions opt;
    std::string out = "out";
    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config_path, "Scenario JSON (or a run manifest)");
        if (needs_config) c->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "Output directory")->capture_default_str();
        sub->add_option("--threads", opt.threads, "Worker threads for scans")->check(CLI::PositiveNumber);
        sub->add_flag("--no-gate", opt.no_gate, "Write outputs but do not fail on validation gates");
    };
    auto* spectrum = app.add_subcommand("spectrum", "Incremental energy spectrum");
    auto* scan = app.add_subcommand("scan", "Transition probability and energy balance along one axis");
    auto* bunching = app.add_subcommand("bunching", "Bunching factors and density profiles versus drift length");
    auto* evolve = app.add_subcommand("evolve", "Time-resolved transition probability from the numeric solver");
    auto* wigner = app.add_subcommand("wigner", "Wigner maps before and after the interaction");
    for (auto* s : {spectrum, scan, bunching, evolve, wigner}) common(s, true);

    auto* figure = app.add_subcommand("figure", "Preset runs for a figure or movie id");
    std::string fig_id;
    bool fig_numeric = false, fig_list = false;
    figure->add_option("id", fig_id, "Figure id (2a..7, S1..S4)");
    figure->add_flag("--numeric", fig_numeric, "Add the numeric cross-check to spectrum and scan sub-runs");
    figure->add_flag("--list", fig_list, "List figure ids and their sub-runs");
    common(figure, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    opt.out = out;

    try {
        if (figure->parsed()) {
            if (fig_list) {
                for (const auto& id : figure_ids()) {
                    std::printf("%s:", id.c_str());
                    for (const auto& r : figure_runs(id)) std::printf(" %s(%s)", r.name.c_str(), r.command.c_str());
                    std::printf("\n");
                }
                return 0;
            }
            if (fig_id.empty()) throw ConfigError("figure: an id is required (use --list)");
            for (const auto& name : run_figure(fig_id, opt, fig_numeric))
                std::printf("%s\n", (opt.out / name).string().c_str());
            return 0;
        }
        const ScenarioConfig cfg = load_config_file(config_path);
        for (auto* s : {spectrum, scan, bunching, evolve, wigner})
            if (s->parsed()) dispatch(s->get_name(), cfg, opt);
        std::printf("%s\n", (opt.out / "manifest.json").string().c_str());
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
