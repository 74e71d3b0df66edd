// Command-line front end: closed-form predictions, gradient-descent runs,
// collapse metrics for saved checkpoints, and theory-vs-run comparison.
//
// Exit codes: 0 ok, 2 input error, 3 regime/degenerate input, 4 divergence,
// 5 tolerance failure.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <string>

#include "ncdl/io.hpp"
#include "ncdl/linalg.hpp"
#include "ncdl/metrics.hpp"
#include "ncdl/model.hpp"
#include "ncdl/theory.hpp"
#include "ncdl/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitRegime = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitTolerance = 5;

namespace fs = std::filesystem;
using namespace ncdl;

int cmd_theory(const std::string& config_path, const std::string& out_path) {
    const RunConfig cfg = load_run_config(config_path);
    const TheoryPrediction prediction = predict(cfg.problem);
    const std::string text = prediction_to_json(prediction);
    if (out_path.empty() || out_path == "-") {
        std::cout << text << "\n";
    } else {
        std::ofstream out(out_path);
        if (!out) throw ArgumentError("cannot open output file " + out_path);
        out << text << "\n";
    }
    return kExitOk;
}

std::string csv_header(const MetricReport& report) {
    std::string header = "iter,loss,nc1";
    for (std::size_t i = 1; i <= report.nc2.size(); ++i)
        header += ",nc2_" + std::to_string(i);
    header += ",nc3,balance_max";
    return header;
}

void append_csv_row(std::ofstream& out, const TrajectorySample& sample) {
    out << sample.iteration << "," << format_double(sample.loss);
    if (sample.report) {
        out << "," << format_double(sample.report->nc1);
        for (double v : sample.report->nc2) out << "," << format_double(v);
        out << "," << format_double(sample.report->nc3);
        double bmax = 0.0;
        for (double v : sample.report->balance) bmax = std::max(bmax, v);
        out << "," << format_double(bmax);
    }
    out << "\n";
    out.flush();
}

int cmd_train(const std::string& config_path) {
    const RunConfig cfg = load_run_config(config_path);
    fs::create_directories(cfg.output_dir);

    // A prediction drives the per-sample metric columns; configs with no
    // closed form (regularized bias, imbalanced CE) still train, loss-only.
    std::unique_ptr<TheoryPrediction> prediction;
    try {
        prediction = std::make_unique<TheoryPrediction>(predict(cfg.problem));
    } catch (const RegimeError&) {
    }

    const fs::path csv_path = fs::path(cfg.output_dir) / "trajectory.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw ArgumentError("cannot open " + csv_path.string());

    bool header_written = false;
    auto on_record = [&](const TrajectorySample& sample) {
        if (!header_written) {
            if (sample.report)
                csv << csv_header(*sample.report) << "\n";
            else
                csv << "iter,loss\n";
            header_written = true;
        }
        append_csv_row(csv, sample);
    };

    Trajectory trajectory;
    try {
        trajectory = train(cfg.problem, cfg.train, prediction.get(), on_record);
    } catch (const DivergenceError&) {
        // Partial trajectory is already on disk.
        throw;
    }

    write_checkpoint(fs::path(cfg.output_dir) / "final.ncdl",
                     state_to_named(trajectory.final_state));

    std::ofstream summary(fs::path(cfg.output_dir) / "summary.json");
    if (!summary) throw ArgumentError("cannot write summary.json");
    summary << "{\n  \"final_iteration\": " << trajectory.final_iteration
            << ",\n  \"early_stopped\": " << (trajectory.early_stopped ? "true" : "false")
            << ",\n  \"monotone\": " << (trajectory.monotone ? "true" : "false")
            << ",\n  \"final_loss\": " << format_double(trajectory.samples.back().loss);
    if (prediction && trajectory.samples.back().report) {
        summary << ",\n  \"report\": " << report_to_json(*trajectory.samples.back().report);
    }
    summary << "\n}\n";
    return kExitOk;
}

int cmd_metrics(const std::string& checkpoint_path, const std::string& config_path,
                const std::string& flavor) {
    const RunConfig cfg = load_run_config(config_path);
    const NetworkState state =
        state_from_named(read_checkpoint(checkpoint_path), cfg.problem);

    TheoryPrediction prediction;
    if (flavor.empty() || flavor == "auto" || flavor == "gof") {
        prediction = predict(cfg.problem);
        if (flavor == "gof" && prediction.geometry != Geometry::GeneralOrthogonalFrame)
            throw RegimeError("gof flavor needs an imbalanced MSE prediction");
    } else if (flavor == "of" || flavor == "etf") {
        // Structural targets only; no closed-form scales needed.
        prediction.geometry =
            flavor == "of" ? Geometry::OrthogonalFrame : Geometry::SimplexEtf;
        prediction.singular_values.assign(cfg.problem.num_classes, 0.0);
        prediction.predicted_loss = std::numeric_limits<double>::quiet_NaN();
        if (cfg.problem.has_bias()) prediction.bias_constant_direction = true;
    } else {
        throw ArgumentError("unknown flavor " + flavor);
    }

    const MetricReport report = compare_to_theory(state, cfg.problem, prediction);
    if (prediction.geometry != Geometry::Zero && std::isnan(report.nc3))
        throw DegenerateInputError("zero Gram in the checkpoint; no normalized metric");
    std::cout << report_to_json(report) << "\n";
    return kExitOk;
}

int cmd_compare(const std::string& run_dir, const std::string& config_path, double tol) {
    const RunConfig cfg = load_run_config(config_path);
    const fs::path dir(run_dir);
    if (!fs::exists(dir / "final.ncdl") || !fs::exists(dir / "summary.json"))
        throw ArgumentError("run directory is missing final.ncdl or summary.json");

    const TheoryPrediction prediction = predict(cfg.problem);
    const NetworkState state =
        state_from_named(read_checkpoint(dir / "final.ncdl"), cfg.problem);
    const MetricReport report = compare_to_theory(state, cfg.problem, prediction);

    bool ok = true;
    auto check = [&](const std::string& name, double value, double limit) {
        const bool pass = std::isnan(value) ? true : value <= limit;
        std::cout << (pass ? "  ok    " : "  FAIL  ") << name << " = "
                  << format_double(value) << " (tol " << format_double(limit) << ")\n";
        ok = ok && pass;
    };

    std::cout << "deviation table (" << geometry_name(prediction.geometry) << "):\n";
    check("nc1", report.nc1, tol);
    for (std::size_t i = 0; i < report.nc2.size(); ++i)
        check("nc2_" + std::to_string(i + 1), report.nc2[i], tol);
    check("nc3", report.nc3, tol);
    if (!std::isnan(report.loss_gap) && std::isfinite(prediction.predicted_loss)) {
        const double denom = std::max(std::abs(prediction.predicted_loss), 1e-300);
        check("loss_gap_rel", report.loss_gap / denom, tol);
    }
    for (std::size_t k = 0; k < report.sv_predicted.size(); ++k) {
        const double predicted = report.sv_predicted[k];
        const double measured = k < report.sv_measured.size() ? report.sv_measured[k] : 0.0;
        const double gap = predicted > 0.0 ? std::abs(measured - predicted) / predicted
                                           : std::abs(measured);
        check("sv_" + std::to_string(k + 1) + "_rel", gap, 10.0 * tol);
    }
    if (state.bias && (prediction.bias || prediction.bias_constant_direction))
        check("bias_gap", report.bias_gap, tol);

    return ok ? kExitOk : kExitTolerance;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deep linear network collapse geometry toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_path, checkpoint_path, run_dir;
    std::string flavor = "auto";
    double tol = 1e-3;

    CLI::App* theory = app.add_subcommand("theory", "closed-form prediction as JSON");
    theory->add_option("--config", config_path, "run configuration")->required();
    theory->add_option("--out", out_path, "output path (default stdout)");

    CLI::App* train = app.add_subcommand("train", "gradient-descent run with metrics");
    train->add_option("--config", config_path, "run configuration")->required();

    CLI::App* metrics = app.add_subcommand("metrics", "metric report for a checkpoint");
    metrics->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    metrics->add_option("--config", config_path, "run configuration")->required();
    metrics->add_option("--flavor", flavor, "of|etf|gof|auto");

    CLI::App* compare = app.add_subcommand("compare", "theory-vs-run deviation table");
    compare->add_option("--run", run_dir, "run directory")->required();
    compare->add_option("--config", config_path, "run configuration")->required();
    compare->add_option("--tol", tol, "tolerance for the deviation table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (theory->parsed()) return cmd_theory(config_path, out_path);
        if (train->parsed()) return cmd_train(config_path);
        if (metrics->parsed()) return cmd_metrics(checkpoint_path, config_path, flavor);
        if (compare->parsed()) return cmd_compare(run_dir, config_path, tol);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const RegimeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRegime;
    } catch (const DegenerateInputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRegime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
