#include "oid/cli_runner.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "oid/cyclic.hpp"
#include "oid/io.hpp"
#include "oid/monte_carlo.hpp"

namespace oid {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig load_with_overrides(const std::string& config_path, const CliOverrides& overrides) {
    RunConfig cfg = load_run_config(config_path);
    if (overrides.out_dir) cfg.output_dir = *overrides.out_dir;
    if (overrides.seed) cfg.monte_carlo.seed = *overrides.seed;
    if (overrides.runs) cfg.monte_carlo.runs = *overrides.runs;
    return cfg;
}

void write_design_artifacts(const fs::path& dir, const RunConfig& cfg, const DesignResult& design,
                            const Matrix& hessian) {
    const int nu = cfg.model.n_u, ny = cfg.model.n_y;
    std::vector<std::string> header{"t"};
    if (nu == 1)
        header.push_back("u");
    else
        for (int i = 1; i <= nu; ++i) header.push_back("u_" + std::to_string(i));
    if (ny == 1)
        header.push_back("y");
    else
        for (int i = 1; i <= ny; ++i) header.push_back("y_" + std::to_string(i));
    std::vector<std::vector<double>> rows;
    for (Eigen::Index t = 0; t < design.u_star.rows(); ++t) {
        std::vector<double> row{static_cast<double>(t + 1)};
        for (int i = 0; i < nu; ++i) row.push_back(design.u_star(t, i));
        for (int i = 0; i < ny; ++i) row.push_back(design.y_noiseless(t, i));
        rows.push_back(std::move(row));
    }
    write_csv(dir / "design.csv", header, rows);

    std::vector<std::vector<double>> trace_rows;
    for (const auto& r : design.trace)
        trace_rows.push_back({static_cast<double>(r.t), r.j, r.lmi_margin,
                              static_cast<double>(r.inner_iterations), r.first_input});
    write_csv(dir / "trace.csv", {"t", "j", "lmi_margin", "inner_iterations", "first_input"},
              trace_rows);

    write_matrix_csv(dir / "fim.csv", design.final_fim);
    write_matrix_csv(dir / "hessian.csv", hessian);

    const EllipsoidPair pair = EllipsoidPair::make(hessian, design.final_fim, cfg.model.theta_g,
                                                   cfg.spec.gamma, cfg.spec.alpha);
    std::vector<std::vector<double>> epts;
    const int p = cfg.model.n_theta_g();
    for (int i = 0; i < p; ++i) {
        for (int j = i + 1; j < p; ++j) {
            for (int which = 0; which < 2; ++which) {
                const Matrix b = pair.boundary_slice(i, j, which == 0);
                for (Eigen::Index k = 0; k < b.rows(); ++k)
                    epts.push_back({static_cast<double>(which), static_cast<double>(i),
                                    static_cast<double>(j), static_cast<double>(k), b(k, 0),
                                    b(k, 1)});
            }
        }
    }
    write_csv(dir / "ellipsoids.csv", {"set_app0_id1", "i", "j", "k", "theta_i", "theta_j"}, epts);

    json summary;
    summary["status"] = design.success ? "success" : "max_time";
    summary["t_star"] = design.t_star;
    summary["total_length"] = design.u_star.rows();
    summary["j_final"] = design.j_final;
    summary["tol_j"] = cfg.spec.tol_j;
    summary["lmi_margin"] = design.lmi_margin;
    summary["gamma"] = cfg.spec.gamma;
    summary["alpha"] = cfg.spec.alpha;
    summary["chi2_level"] = pair.chi2_level;
    summary["u_max"] = cfg.spec.u_max;
    summary["y_max"] = cfg.spec.y_max;
    if (design.final_slack.size()) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(design.final_slack);
        summary["slack_eigenvalues"] = std::vector<double>(
            es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    }
    std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
}

}  // namespace

int run_design(const std::string& config_path, const CliOverrides& overrides) {
    RunConfig cfg;
    Matrix hessian;
    try {
        cfg = load_with_overrides(config_path, overrides);
        hessian = vapp_hessian(cfg.model, cfg.model.theta_g, cfg.vapp);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    try {
        const DesignResult design =
            receding_horizon_design(cfg.model, cfg.spec, hessian, cfg.model.theta_g);
        fs::create_directories(cfg.output_dir);
        write_design_artifacts(cfg.output_dir, cfg, design, hessian);
        if (!design.success) {
            std::cerr << "design did not terminate within max_time = " << cfg.spec.max_time
                      << " samples (J = " << design.j_final
                      << "); partial artifacts written; consider a lower gamma\n";
            return kExitDesignFailed;
        }
        std::cout << "design terminated at t* = " << design.t_star << " (sequence length "
                  << design.u_star.rows() << "), LMI margin " << design.lmi_margin << ", artifacts in "
                  << cfg.output_dir.string() << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "design error: " << e.what() << "\n";
        return 1;
    }
}

int run_validate(const std::string& config_path, const std::string& design_csv,
                 const CliOverrides& overrides) {
    try {
        const RunConfig cfg = load_with_overrides(config_path, overrides);
        const CsvTable table = read_csv(design_csv);
        const int nu = cfg.model.n_u, ny = cfg.model.n_y;
        if (static_cast<int>(table.header.size()) != 1 + nu + ny)
            throw ConfigError(design_csv + ": expected " + std::to_string(1 + nu + ny) +
                              " columns for this model, found " +
                              std::to_string(table.header.size()));
        Matrix u(table.rows.size(), nu);
        for (std::size_t t = 0; t < table.rows.size(); ++t)
            for (int i = 0; i < nu; ++i) u(t, i) = table.rows[t][1 + i];

        const Matrix hessian = vapp_hessian(cfg.model, cfg.model.theta_g, cfg.vapp);
        const SensitivityBank bank =
            sensitivity_impulse_responses(cfg.model, cfg.model.theta_g, cfg.spec.truncation_n,
                                          cfg.spec.horizon_nu, cfg.spec.tail_energy_tol);
        const Matrix fim =
            batch_fim(bank, NoiseWhitener::from_covariance(cfg.model.lambda), u);
        const EllipsoidPair pair = EllipsoidPair::make(hessian, fim, cfg.model.theta_g,
                                                       cfg.spec.gamma, cfg.spec.alpha);

        const MonteCarloReport report =
            monte_carlo(cfg.model, u, pair, cfg.monte_carlo.runs, cfg.monte_carlo.seed,
                        cfg.monte_carlo.lambda_scale);

        fs::create_directories(cfg.output_dir);
        std::vector<std::string> header{"run"};
        for (int i = 1; i <= cfg.model.n_theta_g(); ++i) header.push_back("theta_" + std::to_string(i));
        header.insert(header.end(), {"in_si", "in_app", "converged"});
        std::vector<std::vector<double>> rows;
        for (const auto& r : report.runs) {
            std::vector<double> row{static_cast<double>(r.run)};
            for (Eigen::Index i = 0; i < r.theta_hat.size(); ++i) row.push_back(r.theta_hat(i));
            row.push_back(r.in_id ? 1.0 : 0.0);
            row.push_back(r.in_app ? 1.0 : 0.0);
            row.push_back(r.converged ? 1.0 : 0.0);
            rows.push_back(std::move(row));
        }
        write_csv(cfg.output_dir / "montecarlo.csv", header, rows);

        json summary;
        {
            std::ifstream in(cfg.output_dir / "summary.json");
            if (in) {
                try {
                    in >> summary;
                } catch (...) {
                    summary = json::object();
                }
            }
        }
        summary["validation"] = {{"runs", cfg.monte_carlo.runs},
                                 {"seed", cfg.monte_carlo.seed},
                                 {"lambda_scale", cfg.monte_carlo.lambda_scale},
                                 {"flagged_runs", report.flagged_runs},
                                 {"inside_id_fraction", report.inside_id_fraction},
                                 {"inside_app_fraction", report.inside_app_fraction}};
        std::ofstream(cfg.output_dir / "summary.json") << summary.dump(2) << "\n";

        std::cout << "validation: " << report.inside_id_fraction << " inside E_SI, "
                  << report.inside_app_fraction << " inside E_app over " << cfg.monte_carlo.runs
                  << " runs (" << report.flagged_runs << " flagged)\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "validate error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace oid
