#pragma once

#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sqt/app/commands.hpp"
#include "sqt/app/config.hpp"
#include "sqt/app/table.hpp"
#include "sqt/app/validate.hpp"

namespace sqt::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDomainError = 3, kValidationFailed = 4 };

namespace detail {

inline void write_outputs(const app::CommandOutput& result, const std::string& output, const std::string& json,
                          std::ostream& out) {
    const auto header = result.all_header();
    if (output.empty() || output == "-") {
        app::write_csv(out, result.table, header);
    } else {
        std::ofstream f(output, std::ios::binary);
        if (!f) throw ConfigError("cannot write '" + output + "'");
        app::write_csv(f, result.table, header);
    }
    if (!json.empty()) {
        std::ofstream f(json, std::ios::binary);
        if (!f) throw ConfigError("cannot write '" + json + "'");
        nlohmann::json meta = nlohmann::json::object();
        meta["warnings"] = result.warnings;
        f << app::to_json(result.command, result.table, header, meta).dump(2) << '\n';
    }
}

}  // namespace detail

/// Entry point shared by the sqt executable and the tests. args excludes argv[0].
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App cli{"Squeezed-light transmission through disordered waveguides", "sqt"};
    cli.require_subcommand(1);
    cli.set_help_all_flag("--help-all", "Show help for all subcommands");

    struct Common {
        std::vector<std::string> config_files;
        std::string output;
        std::string json;
        int threads = -1;
    };
    std::map<std::string, Common> common;
    std::string level = "fast";
    std::string mutate;

    const std::vector<std::pair<std::string, std::string>> commands{
        {"fano-direct", "Direct-detection Fano factor: analytic average and Monte Carlo"},
        {"fano-homodyne", "Homodyne Fano factor (mode = min, fixed or scan)"},
        {"sweep", "Monte Carlo length sweep with common random numbers"},
        {"figure3", "Curve families of the direct-detection figure"},
        {"figure4", "Curve families of the minimal homodyne figure"},
        {"calibrate", "Ohm's-law calibration of the slice model's mean free path"},
        {"validate", "Run the invariant and oracle suites"}};
    for (const auto& [name, help] : commands) {
        CLI::App* sub = cli.add_subcommand(name, help);
        Common& c = common[name];
        sub->add_option("-c,--config", c.config_files, "key = value or JSON config file (repeatable)");
        sub->add_option("-o,--output", c.output, "CSV output path (default stdout)");
        sub->add_option("--json", c.json, "JSON output path");
        sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
        if (name == "validate") {
            sub->add_option("--level", level, "fast or full")->check(CLI::IsMember({"fast", "full"}));
            sub->add_option("--mutate", mutate, "Inject a corrupted formula (absorbing_bracket)")
                ->check(CLI::IsMember({"absorbing_bracket"}));
        } else {
            sub->allow_extras();
            sub->footer("Any other --key value pair overrides the config file.");
        }
    }

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        cli.parse(argv_rev);
    } catch (const CLI::CallForHelp& e) {
        out << cli.help();
        return kOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << cli.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    }

    CLI::App* sub = cli.get_subcommands().front();
    const std::string name = sub->get_name();
    const Common& c = common[name];
    try {
        app::Config cfg;
        for (const auto& path : c.config_files) app::load_config_file(cfg, path);
        app::apply_environment(cfg);
        if (name != "validate") app::apply_overrides(cfg, sub->remaining());
        if (c.threads >= 0) cfg.set("threads", std::to_string(c.threads), "--threads");

        if (name == "validate") {
            const unsigned threads = static_cast<unsigned>(cfg.get_int("threads", 1));
            const app::FormulaSet formulas = mutate.empty() ? app::FormulaSet{} : app::mutated_formulas();
            const auto report = app::run_validation(level, formulas, threads);
            app::CommandOutput table;
            table.command = "validate";
            table.header = {{"level", level}, {"mutate", mutate.empty() ? "none" : mutate}};
            table.table.columns = {"check", "passed", "detail"};
            for (const auto& chk : report.checks) {
                err << (chk.passed ? "PASS " : "FAIL ") << chk.name << ": " << chk.detail << '\n';
                table.table.add({chk.name, chk.passed ? 1.0 : 0.0, chk.detail});
            }
            if (!c.output.empty() || !c.json.empty()) detail::write_outputs(table, c.output, c.json, out);
            err << (report.passed() ? "validation passed" : "validation FAILED") << '\n';
            return report.passed() ? kOk : kValidationFailed;
        }

        static const std::map<std::string, std::function<app::CommandOutput(const app::Config&)>> dispatch{
            {"fano-direct", app::cmd_fano_direct}, {"fano-homodyne", app::cmd_fano_homodyne},
            {"sweep", app::cmd_sweep},             {"figure3", app::cmd_figure3},
            {"figure4", app::cmd_figure4},         {"calibrate", app::cmd_calibrate}};
        const auto result = dispatch.at(name)(cfg);
        for (const auto& w : result.warnings) err << "warning: " << w << '\n';
        detail::write_outputs(result, c.output, c.json, out);
        return kOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const InvalidArgument& e) {
        err << "invalid parameter: " << e.what() << '\n';
        return kConfigError;
    } catch (const DomainError& e) {
        err << "physics domain error: " << e.what() << '\n';
        return kDomainError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
}

}  // namespace sqt::cli
