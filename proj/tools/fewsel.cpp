#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fewsel/fewsel.hpp"

namespace {

struct CommonOverrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> budget;
    std::optional<std::string> replay;
    std::optional<std::string> out;
};

fewsel::RunConfig load_with_overrides(const CommonOverrides& args) {
    fewsel::RunConfig config = fewsel::load_run_config(args.config_path);
    if (args.seed) config.study.seeds = {*args.seed};
    if (args.budget) config.backend.pass_budget = *args.budget;
    if (args.replay) config.backend.replay_store = *args.replay;
    if (args.out) config.output_dir = *args.out;
    return config;
}

void add_common(CLI::App* cmd, CommonOverrides& args) {
    cmd->add_option("--config", args.config_path, "run configuration file")->required();
    cmd->add_option("--seed", [&args](const CLI::results_t& r) {
        args.seed = std::stoull(r.front());
        return true;
    }, "override: single run seed");
    cmd->add_option("--budget", [&args](const CLI::results_t& r) {
        args.budget = std::stoull(r.front());
        return true;
    }, "override: upstream pass budget");
    cmd->add_option("--replay", [&args](const CLI::results_t& r) {
        args.replay = r.front();
        return true;
    }, "override: replay store path");
    cmd->add_option("--out", [&args](const CLI::results_t& r) {
        args.out = r.front();
        return true;
    }, "override: output directory");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-shot candidate selection and reliability studies"};
    app.require_subcommand(1);

    CommonOverrides select_args, study_args;
    std::string inspect_path;

    CLI::App* select = app.add_subcommand("select", "score candidates and write selection reports");
    add_common(select, select_args);
    CLI::App* study = app.add_subcommand("study", "run a multi-seed reliability study");
    add_common(study, study_args);
    CLI::App* inspect = app.add_subcommand("inspect", "summarize a table or report artifact");
    inspect->add_option("artifact", inspect_path, "artifact path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (select->parsed()) return fewsel::cmd_select(load_with_overrides(select_args));
        if (study->parsed()) return fewsel::cmd_study(load_with_overrides(study_args));
        if (inspect->parsed()) return fewsel::cmd_inspect(inspect_path);
    } catch (const fewsel::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return fewsel::kExitConfig;
    } catch (const fewsel::BudgetExhausted& e) {
        std::cerr << "aborted: " << e.what() << "\n";
        return fewsel::kExitBudget;
    } catch (const fewsel::BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return fewsel::kExitBackend;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return fewsel::kExitFailure;
    }
    return fewsel::kExitOk;
}
