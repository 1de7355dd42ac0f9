// Command-line front end for the safety-filter pipeline.

#include <cmath>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "shield/config.hpp"
#include "shield/errors.hpp"
#include "shield/io.hpp"
#include "shield/pipeline.hpp"
#include "shield/teleop_server.hpp"

using namespace shield;
namespace fs = std::filesystem;

namespace {

struct Loaded {
    ExperimentConfig cfg;
    std::string hash;
};

Loaded load(const std::string& path) {
    Loaded l{load_config(path), {}};
    l.hash = config_hash(l.cfg);
    return l;
}

std::string data_file(const std::string& dirOrFile, const char* name) {
    return fs::is_directory(dirOrFile) ? (fs::path(dirOrFile) / name).string() : dirOrFile;
}

Dataset load_dataset(const Loaded& l, const std::string& path) {
    std::string hash;
    Dataset d = decode_dataset(read_file(path), l.cfg.world, &hash);
    require_config(l.hash, hash, path);
    return d;
}

ValueGrid load_grid(const Loaded& l, const std::string& path) {
    std::string hash;
    ValueGrid vg = decode_value_grid(read_file(path), &hash);
    require_config(l.hash, hash, path);
    return vg;
}

WorldModel load_model(const Loaded& l, const std::string& path) {
    std::string hash;
    MarginModel m;
    bool has = false;
    WorldModel wm{decode_ensemble(read_file(path), &m, &has, &hash), std::nullopt};
    require_config(l.hash, hash, path);
    if (has) wm.margin = std::move(m);
    return wm;
}

CalibrationResult load_calibration(const Loaded& l, const std::string& path) {
    std::string hash;
    CalibrationResult r;
    try {
        r = calibration_from_json(nlohmann::json::parse(read_file(path)), &hash);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Format, path + ": " + e.what());
    }
    require_config(l.hash, hash, path);
    return r;
}

/// Value grid or Q-function, told apart by the artifact magic.
SafetySolution load_solution(const Loaded& l, const std::string& path, double epsilon) {
    const std::string bytes = read_file(path);
    std::string hash;
    if (bytes.rfind(kQFunctionMagic, 0) == 0) {
        QFunction q = decode_qfunction(bytes, &hash);
        require_config(l.hash, hash, path);
        return SafetySolution(QSolution{std::move(q)});
    }
    ValueGrid vg = decode_value_grid(bytes, &hash);
    require_config(l.hash, hash, path);
    return SafetySolution(GridSolution{std::move(vg), penalty_of(l.cfg, epsilon), l.cfg.world});
}

void print_stats(const char* label, const ConfusionStats& s) {
    std::cout << label << ": tpr " << s.tpr << " tnr " << s.tnr << " fpr " << s.fpr << " bacc " << s.bacc
              << " (excluded " << s.excluded << ")\n";
}

void print_summary(const char* label, const SafetySummary& s) {
    std::cout << label << ": safety " << s.safetyRate << " failures " << s.failures << "/" << s.total << " halted "
              << s.halted << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty-aware safety filter for the Dubins car"};
    app.require_subcommand(1);
    std::string config, out, data, gtPath, ensPath, calPath, solPath, failureLogDir;
    std::vector<std::string> replay;
    int port = 0;
    double epsilonOverride = std::nan("");

    auto* genData = app.add_subcommand("gen-data", "Generate train and calibration datasets");
    genData->add_option("--config", config)->required();
    genData->add_option("--out", out, "output directory")->required();
    genData->add_option("--gt", gtPath, "ground-truth grid; solved on the fly when absent");

    auto* solveGt = app.add_subcommand("solve-gt", "Solve the ground-truth value grid");
    solveGt->add_option("--config", config)->required();
    solveGt->add_option("--out", out)->required();

    auto* trainEns = app.add_subcommand("train-ensemble", "Train the ensemble (and margin classifier)");
    trainEns->add_option("--config", config)->required();
    trainEns->add_option("--data", data, "dataset directory or train file")->required();
    trainEns->add_option("--out", out)->required();

    auto* calib = app.add_subcommand("calibrate", "Calibrate the OOD threshold");
    calib->add_option("--config", config)->required();
    calib->add_option("--ensemble", ensPath)->required();
    calib->add_option("--calib", data, "dataset directory or calibration file")->required();
    calib->add_option("--out", out)->required();

    auto* solveFilter = app.add_subcommand("solve-filter", "Solve the uncertainty-aware value grid");
    solveFilter->add_option("--config", config)->required();
    solveFilter->add_option("--ensemble", ensPath)->required();
    solveFilter->add_option("--calib", calPath)->required();
    solveFilter->add_option("--out", out)->required();

    auto* trainQ = app.add_subcommand("train-q", "Fit the safety Q-function on imagined rollouts");
    trainQ->add_option("--config", config)->required();
    trainQ->add_option("--ensemble", ensPath)->required();
    trainQ->add_option("--calib", calPath)->required();
    trainQ->add_option("--data", data, "dataset directory or train file")->required();
    trainQ->add_option("--out", out)->required();

    auto* evaluate = app.add_subcommand("evaluate", "Score a solution against ground truth and in rollouts");
    evaluate->add_option("--config", config)->required();
    evaluate->add_option("--solution", solPath)->required();
    evaluate->add_option("--gt", gtPath)->required();
    evaluate->add_option("--ensemble", ensPath)->required();
    evaluate->add_option("--calib", calPath)->required();
    evaluate->add_option("--out", out, "report file")->required();
    evaluate->add_option("--replay", replay, "rollout logs replayed as task policies");
    evaluate->add_option("--failure-logs", failureLogDir, "directory for logs of unfiltered failures");

    auto* serve = app.add_subcommand("serve", "Teleoperation service");
    serve->add_option("--config", config)->required();
    serve->add_option("--solution", solPath)->required();
    serve->add_option("--ensemble", ensPath)->required();
    serve->add_option("--calib", calPath)->required();
    serve->add_option("--port", port, "listen port; defaults to the config");
    serve->add_option("--epsilon", epsilonOverride, "override the calibrated threshold");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const Loaded l = load(config);
        const auto& cfg = l.cfg;

        if (*solveGt) {
            const ValueGrid gt = stage_solve_gt(cfg);
            write_atomic(out, encode_value_grid(gt, l.hash));
            std::cout << "sweeps " << gt.meta.iterations << " residual " << gt.meta.residual << "\n";
            if (!gt.meta.converged) std::cerr << "warning: value iteration did not converge\n";
        } else if (*genData) {
            const ValueGrid gt = gtPath.empty() ? stage_solve_gt(cfg) : load_grid(l, gtPath);
            const DataSplit d = stage_gen_data(cfg, gt);
            write_atomic((fs::path(out) / "train.jsonl").string(), encode_dataset(d.train, l.hash));
            write_atomic((fs::path(out) / "calib.jsonl").string(), encode_dataset(d.calib, l.hash));
            std::cout << "train " << d.train.trajectories.size() << " trajectories, calib "
                      << d.calib.trajectories.size() << "\n";
        } else if (*trainEns) {
            const Dataset train = load_dataset(l, data_file(data, "train.jsonl"));
            const WorldModel wm = stage_train_ensemble(cfg, train);
            write_atomic(out, encode_ensemble(wm.ensemble, wm.margin ? &*wm.margin : nullptr, l.hash));
            if (wm.margin && wm.margin->degenerate) {
                std::cerr << "warning: margin classifier saw a single class\n";
            }
        } else if (*calib) {
            const WorldModel wm = load_model(l, ensPath);
            const Dataset cal = load_dataset(l, data_file(data, "calib.jsonl"));
            const CalibrationResult r = stage_calibrate(cfg, wm.ensemble, cal);
            write_atomic(out, to_json(r, l.hash).dump(2) + "\n");
            std::cout << "epsilon_hat " << r.epsilonHat << "\n";
            if (r.degenerate) {
                std::cerr << "warning: Degenerate calibration: N = " << r.N
                          << " is too small for alpha_cal; the threshold is infinite\n";
            }
        } else if (*solveFilter) {
            const WorldModel wm = load_model(l, ensPath);
            const double eps = filter_epsilon(cfg, load_calibration(l, calPath));
            const ValueGrid v = stage_solve_filter(cfg, wm, eps);
            write_atomic(out, encode_value_grid(v, l.hash));
            std::cout << "sweeps " << v.meta.iterations << " residual " << v.meta.residual << "\n";
            if (!v.meta.converged) std::cerr << "warning: value iteration did not converge\n";
        } else if (*trainQ) {
            const WorldModel wm = load_model(l, ensPath);
            const double eps = filter_epsilon(cfg, load_calibration(l, calPath));
            const Dataset train = load_dataset(l, data_file(data, "train.jsonl"));
            const QTrainResult q = stage_train_q(cfg, wm, train, eps);
            write_atomic(out, encode_qfunction(q.q, cfg.qtrain.hidden, l.hash));
            std::cout << "td loss " << q.finalLoss << " steps " << q.gradientSteps << "\n";
        } else if (*evaluate) {
            const WorldModel wm = load_model(l, ensPath);
            const double eps = filter_epsilon(cfg, load_calibration(l, calPath));
            const SafetySolution sol = load_solution(l, solPath, eps);
            const ValueGrid gt = load_grid(l, gtPath);
            std::vector<std::string> logs;
            for (const auto& p : replay) logs.push_back(read_file(p));
            const EnsembleDynamics dyn(wm.ensemble, cfg.method);
            const EvalReport r = stage_evaluate(cfg, sol, dyn, eps, gt, logs);
            nlohmann::json j = to_json(r);
            j["configHash"] = l.hash;
            j["epsilon"] = eps;
            write_atomic(out, j.dump(2) + "\n");
            if (!failureLogDir.empty()) {
                for (std::size_t i = 0; i < r.failureLogs.size(); ++i) {
                    write_atomic((fs::path(failureLogDir) / ("failure_" + std::to_string(i) + ".jsonl")).string(),
                                 r.failureLogs[i]);
                }
            }
            print_stats("monitor", r.monitor);
            print_summary("filtered", r.filtered);
            print_summary("unfiltered", r.unfiltered);
            if (r.replayFiltered) {
                print_summary("replay filtered", *r.replayFiltered);
                print_summary("replay unfiltered", *r.replayUnfiltered);
            }
        } else if (*serve) {
            const WorldModel wm = load_model(l, ensPath);
            const double eps =
                std::isnan(epsilonOverride) ? filter_epsilon(cfg, load_calibration(l, calPath)) : epsilonOverride;
            const SafetySolution sol = load_solution(l, solPath, eps);
            const EnsembleDynamics dyn(wm.ensemble, cfg.method);
            const auto starts = teleop_starts(sol, cfg.world, cfg.serve.startMargin);
            TeleopOptions opt;
            opt.filter = filter_params(eps, cfg.delta, penalty_of(cfg, eps), cfg.world);
            opt.world = cfg.world;
            opt.seed = cfg.serve.seed;
            std::uint64_t sessions = 0;
            TeleopServer server(
                ServerOptions{"127.0.0.1", static_cast<unsigned short>(port > 0 ? port : cfg.serve.port),
                              cfg.world.dt, true},
                [&] {
                    TeleopOptions o = opt;
                    o.seed = mix_seed(opt.seed, sessions++);
                    return std::make_unique<TeleopSession>(sol, dyn, starts, o);
                });
            std::cout << "listening on ws://127.0.0.1:" << server.port() << "/" << std::endl;
            server.run();
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
