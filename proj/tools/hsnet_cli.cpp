// hsnet command-line front end.
//
// Exit status: 0 on success, 2 for usage errors and malformed configs,
// 1 for anything that fails at run time.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hsnet/analyzer.hpp"
#include "hsnet/config.hpp"
#include "hsnet/train.hpp"

namespace fs = std::filesystem;
using namespace hsnet;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

void print_plan(const HsBlockConfig& cfg, std::ostream& os) {
    const auto plan = channel_plan(cfg);
    os << "variant " << to_string(cfg.variant) << ", s = " << cfg.s << ", w = " << cfg.w << ", k = " << cfg.k << "\n";
    os << std::setw(6) << "group" << std::setw(9) << "conv_in" << std::setw(10) << "conv_out" << std::setw(9)
       << "forward" << std::setw(6) << "out" << "\n";
    Index total = 0;
    for (Index i = 0; i < plan.groups(); ++i) {
        os << std::setw(6) << i + 1;
        if (i == 0) {
            os << std::setw(9) << "-" << std::setw(10) << "-" << std::setw(9)
               << (plan.first_forward ? std::to_string(plan.first_forward) : std::string("-"));
        } else {
            const auto j = static_cast<std::size_t>(i - 1);
            const bool forwards = j < plan.forward.size();
            os << std::setw(9) << plan.conv_in[j] << std::setw(10) << plan.conv_out[j] << std::setw(9)
               << (forwards ? std::to_string(plan.forward[j]) : std::string("-"));
        }
        os << std::setw(6) << plan.out[static_cast<std::size_t>(i)] << "\n";
        total += plan.out[static_cast<std::size_t>(i)];
    }
    os << "input " << plan.input_width() << " channels, output " << total << " channels\n";
    os << "conv params " << param_hs_exact(cfg) << " (dense k x k over s*w: " << param_normal(cfg.k, cfg.s, cfg.w)
       << ")\n";
}

Dataset load_eval_data(const RunConfig& cfg, const std::optional<fs::path>& data) {
    if (!data) return load_data(cfg).eval;
    if (fs::is_directory(*data)) return load_cifar10(*data, Split::test);
    return load_cifar10_file(*data);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hsnet: hierarchical-split networks on the CPU"};
    app.require_subcommand(1);

    auto* plan_cmd = app.add_subcommand("plan", "Print the channel plan of one HS stage");
    Index plan_s = 0, plan_w = 0, plan_k = 3;
    std::string plan_variant = "B-preserve";
    plan_cmd->add_option("--s", plan_s, "number of groups")->required();
    plan_cmd->add_option("--w", plan_w, "group width")->required();
    plan_cmd->add_option("--k", plan_k, "kernel size");
    plan_cmd->add_option("--variant", plan_variant, "B-preserve, A-split-first or P-project-w");

    auto* analyze_cmd = app.add_subcommand("analyze", "Count parameters and FLOPs");
    std::optional<std::string> analyze_config, analyze_preset;
    std::optional<Index> analyze_size;
    bool analyze_summary = false;
    auto* ac = analyze_cmd->add_option("--config", analyze_config, "run config JSON");
    auto* ap = analyze_cmd->add_option("--preset", analyze_preset, "network preset name");
    ac->excludes(ap);
    analyze_cmd->add_option("--image-size", analyze_size, "input side length (defaults to the config's)");
    analyze_cmd->add_flag("--summary", analyze_summary, "totals only, no per-layer table");

    auto* reconcile_cmd = app.add_subcommand("reconcile", "Sweep presets and variants against published budgets");
    std::string reconcile_out;
    reconcile_cmd->add_option("--out", reconcile_out, "CSV output file")->required();

    auto* train_cmd = app.add_subcommand("train", "Train from a run config");
    std::string train_config, train_out;
    train_cmd->add_option("--config", train_config, "run config JSON")->required();
    train_cmd->add_option("--out", train_out, "output directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string eval_ckpt;
    std::optional<std::string> eval_data, eval_config;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--data", eval_data,
                         "CIFAR-10 binary file or directory (default: the config's eval split)");
    eval_cmd->add_option("--config", eval_config, "run config (default: config.json next to the checkpoint)");

    auto* grad_cmd = app.add_subcommand("gradcheck", "Compare tape gradients with finite differences");
    std::optional<std::string> grad_config, grad_preset;
    Index grad_samples = 20;
    std::uint64_t grad_seed = 7;
    auto* gc = grad_cmd->add_option("--config", grad_config, "run config JSON");
    auto* gp = grad_cmd->add_option("--preset", grad_preset, "network preset name");
    gc->excludes(gp);
    grad_cmd->add_option("--samples", grad_samples, "number of sampled parameters");
    grad_cmd->add_option("--seed", grad_seed, "sampling seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    try {
        if (*plan_cmd) {
            HsBlockConfig cfg;
            cfg.s = plan_s;
            cfg.w = plan_w;
            cfg.k = plan_k;
            cfg.variant = parse_variant(plan_variant);
            cfg.validate();
            print_plan(cfg, std::cout);
        } else if (*analyze_cmd) {
            if (!analyze_config && !analyze_preset) throw ArgumentError("analyze: give --config or --preset");
            const NetworkConfig net = analyze_config ? load_network_config(*analyze_config) : preset(*analyze_preset);
            count(net, analyze_size.value_or(net.image_size)).print(std::cout, !analyze_summary);
        } else if (*reconcile_cmd) {
            const auto table = reconcile_default();
            std::ofstream out(reconcile_out);
            if (!out) throw IoError("cannot open " + reconcile_out + " for writing");
            table.write_csv(out);
            table.print(std::cout);
        } else if (*train_cmd) {
            const auto cfg = load_run_config(train_config);
            const auto result = train(cfg, train_out, &std::cout);
            std::cout << "best eval_acc " << result.best_eval_acc << " at epoch " << result.best_epoch << "\n";
        } else if (*eval_cmd) {
            const fs::path ckpt(eval_ckpt);
            const fs::path cfg_file = eval_config ? fs::path(*eval_config) : ckpt.parent_path() / "config.json";
            const auto cfg = load_run_config(cfg_file);
            const auto data = load_eval_data(cfg, eval_data ? std::optional<fs::path>(*eval_data) : std::nullopt);
            const auto r = evaluate_checkpoint(cfg, ckpt, data);
            std::cout << std::setprecision(17) << "top1 " << r.top1 << "\ntop5 " << r.top5 << "\nloss " << r.loss
                      << "\ncount " << r.count << "\n";
        } else if (*grad_cmd) {
            if (!grad_config && !grad_preset) throw ArgumentError("gradcheck: give --config or --preset");
            const NetworkConfig net = grad_config ? load_network_config(*grad_config) : preset(*grad_preset);
            const auto r = gradcheck(net, grad_samples, grad_seed);
            for (const auto& s : r.samples) {
                std::cout << std::left << std::setw(40) << s.name << std::right << std::setw(8) << s.index
                          << std::setw(16) << std::setprecision(8) << s.analytic << std::setw(16) << s.numeric
                          << std::setw(12) << std::setprecision(3) << s.rel_error << "\n";
            }
            std::cout << "max relative error " << r.max_rel_error << " (tolerance " << r.tolerance << "): "
                      << (r.passed() ? "ok" : "FAILED") << "\n";
            return r.passed() ? 0 : kRuntimeFailure;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    }
    return 0;
}
