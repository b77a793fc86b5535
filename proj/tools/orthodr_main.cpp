// Command-line front end: dataset ingestion, model fitting, subspace
// distances, benchmarking and simulation-data generation.
//
// Exit codes: 0 success, 2 usage/flag errors, 3 input-file parse errors,
// 4 data/argument validation errors, 5 solver or internal failures.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "orthodr/io.hpp"
#include "orthodr/regression.hpp"
#include "orthodr/simgen.hpp"
#include "orthodr/solver.hpp"
#include "orthodr/stiefel.hpp"
#include "orthodr/survival.hpp"

namespace fs = std::filesystem;
using namespace orthodr;

namespace {

constexpr int kExitParse = 3;
constexpr int kExitValidation = 4;
constexpr int kExitSolver = 5;

int default_threads() {
    if (const char* env = std::getenv("ORTHODR_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    return 1;
}

struct ControlFlags {
    double ftol = 1e-6, gtol = 1e-6, btol = 1e-6, epsilon = 1e-6;
    int maxitr = 500;
    int threads = default_threads();

    void attach(CLI::App* cmd) {
        cmd->add_option("--ftol", ftol, "Relative objective-change tolerance");
        cmd->add_option("--gtol", gtol, "Projected-gradient tolerance");
        cmd->add_option("--btol", btol, "Parameter-change tolerance");
        cmd->add_option("--epsilon", epsilon, "Finite-difference step");
        cmd->add_option("--maxitr", maxitr, "Maximum iterations");
        cmd->add_option("--threads", threads,
                        "Worker threads for numeric gradients (env ORTHODR_THREADS)");
    }

    SolverControl to_control() const {
        SolverControl c;
        c.ftol = ftol;
        c.gtol = gtol;
        c.btol = btol;
        c.epsilon = epsilon;
        c.maxitr = maxitr;
        c.num_threads = threads;
        return c;
    }
};

std::vector<std::string> default_feature_names(Index p) {
    std::vector<std::string> names;
    for (Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
    return names;
}

Subspace load_subspace(const fs::path& path) {
    const Table t = read_csv(path);
    return Subspace::from_matrix(t.values);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"orthoDr: orthogonality-constrained optimization and "
                 "semiparametric dimension reduction"};
    app.require_subcommand(1);
    // Flat key=value config file; subcommand options use dotted keys, e.g.
    // `fit-reg.ndr=1`. Command-line flags always win.
    app.set_config("--config", "", "Flat key=value config file (flags win)");

    // ---- fit-surv ----------------------------------------------------
    auto* fit_surv_cmd = app.add_subcommand("fit-surv", "Fit the survival DR model");
    std::string fs_data, fs_time, fs_censor, fs_method = "dm", fs_out, fs_format = "all";
    int fs_ndr = 2;
    double fs_bw = 0.0, fs_slice = 0.0;
    ControlFlags fs_ctrl;
    fit_surv_cmd->add_option("--data", fs_data, "Input CSV")->required();
    fit_surv_cmd->add_option("--time", fs_time, "Observed-time column")->required();
    fit_surv_cmd->add_option("--censor", fs_censor, "Censoring-indicator column")->required();
    fit_surv_cmd->add_option("--method", fs_method, "Estimating equation (dm)");
    fit_surv_cmd->add_option("--ndr", fs_ndr, "Structural dimension (default 2)");
    fit_surv_cmd->add_option("--bw", fs_bw, "Kernel bandwidth (default: Silverman)");
    fit_surv_cmd->add_option("--slice-fraction", fs_slice, "phi window fraction");
    fit_surv_cmd->add_option("--out", fs_out, "Output directory")->required();
    fit_surv_cmd->add_option("--format", fs_format, "json|csv|text|all");
    fs_ctrl.attach(fit_surv_cmd);

    // ---- fit-reg -----------------------------------------------------
    auto* fit_reg_cmd = app.add_subcommand("fit-reg", "Fit the regression DR model");
    std::string fr_data, fr_outcome, fr_method = "sir", fr_out, fr_format = "all";
    int fr_ndr = 2;
    double fr_bw = 0.0;
    ControlFlags fr_ctrl;
    fit_reg_cmd->add_option("--data", fr_data, "Input CSV")->required();
    fit_reg_cmd->add_option("--outcome", fr_outcome, "Outcome column")->required();
    fit_reg_cmd->add_option("--method", fr_method, "sir|phd");
    fit_reg_cmd->add_option("--ndr", fr_ndr, "Structural dimension (default 2)");
    fit_reg_cmd->add_option("--bw", fr_bw, "Kernel bandwidth (default: Silverman)");
    fit_reg_cmd->add_option("--out", fr_out, "Output directory")->required();
    fit_reg_cmd->add_option("--format", fr_format, "json|csv|text|all");
    fr_ctrl.attach(fit_reg_cmd);

    // ---- distance ----------------------------------------------------
    auto* dist_cmd = app.add_subcommand("distance", "Distance between two column spaces");
    std::string d_b1, d_b2, d_method = "dist", d_x;
    dist_cmd->add_option("--b1", d_b1, "First basis CSV")->required();
    dist_cmd->add_option("--b2", d_b2, "Second basis CSV")->required();
    dist_cmd->add_option("--method", d_method, "dist|trace|canonical|sine");
    dist_cmd->add_option("--x", d_x, "Sample CSV (required for canonical)");

    // ---- optim-demo ---------------------------------------------------
    auto* demo_cmd = app.add_subcommand(
        "optim-demo", "General-solver demo: first principal component");
    Index od_n = 400, od_p = 100;
    std::uint64_t od_seed = 1;
    std::string od_out;
    demo_cmd->add_option("--n", od_n, "Sample size");
    demo_cmd->add_option("--p", od_p, "Covariate count");
    demo_cmd->add_option("--seed", od_seed, "RNG seed");
    demo_cmd->add_option("--out", od_out, "Optional output directory");

    // ---- benchmark ----------------------------------------------------
    auto* bench_cmd = app.add_subcommand("benchmark", "Fixed-budget solver benchmark");
    std::string b_problem = "brockett", b_out;
    Index b_n = 150, b_p = 5;
    int b_iters = 250, b_repeats = 1;
    std::uint64_t b_seed = 1;
    bench_cmd->add_option("--problem", b_problem, "brockett|pca");
    bench_cmd->add_option("--n", b_n, "Problem size n");
    bench_cmd->add_option("--p", b_p, "Problem size p");
    bench_cmd->add_option("--iters", b_iters, "Iteration budget");
    bench_cmd->add_option("--repeats", b_repeats, "Independent repeats");
    bench_cmd->add_option("--seed", b_seed, "Base RNG seed");
    bench_cmd->add_option("--out", b_out, "Output directory")->required();

    // ---- simulate -------------------------------------------------------
    auto* sim_cmd = app.add_subcommand("simulate", "Generate simulation datasets");
    std::string s_design = "surv", s_out;
    Index s_n = 350, s_p = 6;
    std::uint64_t s_seed = 1;
    sim_cmd->add_option("--design", s_design, "surv|reg");
    sim_cmd->add_option("--n", s_n, "Sample size");
    sim_cmd->add_option("--p", s_p, "Covariate count");
    sim_cmd->add_option("--seed", s_seed, "RNG seed");
    sim_cmd->add_option("--out", s_out, "Output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit_surv_cmd->parsed()) {
            const IngestedSurv in = ingest_surv_csv(fs_data, fs_time, fs_censor);
            SurvFitSpec spec;
            spec.method = parse_surv_method(fs_method);
            spec.ndr = fs_ndr;
            spec.control = fs_ctrl.to_control();
            if (fs_bw > 0.0) {
                KernelConfig k = KernelConfig::with_bw(fs_bw);
                if (fs_slice > 0.0) k.slice_fraction = fs_slice;
                spec.kernel = k;
            } else if (fs_slice > 0.0) {
                KernelConfig k = KernelConfig::with_bw(silverman_bw(fs_ndr, in.data.n()));
                k.slice_fraction = fs_slice;
                spec.kernel = k;
            }
            const DrFitResult result = fit_surv(in.data, spec);

            const Standardization st{result.center, result.scale};
            const Matrix projected = st.apply(in.data.X) * result.B().values();
            Matrix outcome(in.data.n(), 2);
            outcome.col(0) = in.data.Y;
            outcome.col(1) = in.data.delta.cast<double>();
            emit_results(result, in.feature_names, projected, outcome, {"time", "censor"},
                         fs_out, parse_emit_format(fs_format));
            std::cout << "fit-surv: f = " << format_g15(result.fit.fval) << ", "
                      << result.fit.iterations << " iterations, "
                      << (result.fit.converged ? "converged" : "stopped") << " ("
                      << to_string(result.fit.reason) << "), elapsed "
                      << format_g15(result.fit.elapsed) << " s\n";
        } else if (fit_reg_cmd->parsed()) {
            const IngestedReg in = ingest_reg_csv(fr_data, fr_outcome);
            RegFitSpec spec;
            spec.method = parse_reg_method(fr_method);
            spec.ndr = fr_ndr;
            spec.control = fr_ctrl.to_control();
            if (fr_bw > 0.0) spec.kernel = KernelConfig::with_bw(fr_bw);
            const DrFitResult result = fit_reg(in.data, spec);

            const Standardization st{result.center, result.scale};
            const Matrix projected = st.apply(in.data.X) * result.B().values();
            Matrix outcome(in.data.n(), 1);
            outcome.col(0) = in.data.y;
            emit_results(result, in.feature_names, projected, outcome, {"y"}, fr_out,
                         parse_emit_format(fr_format));
            std::cout << "fit-reg: f = " << format_g15(result.fit.fval) << ", "
                      << result.fit.iterations << " iterations, "
                      << (result.fit.converged ? "converged" : "stopped") << " ("
                      << to_string(result.fit.reason) << "), elapsed "
                      << format_g15(result.fit.elapsed) << " s\n";
        } else if (dist_cmd->parsed()) {
            const Subspace s1 = load_subspace(d_b1);
            const Subspace s2 = load_subspace(d_b2);
            std::optional<Table> xt;
            if (!d_x.empty()) xt = read_csv(d_x);
            const Matrix* x = xt ? &xt->values : nullptr;
            std::cout << format_g15(distance(s1, s2, d_method, x)) << "\n";
        } else if (demo_cmd->parsed()) {
            // Maximize w'(X'X)w over unit w and compare against the SVD.
            std::mt19937_64 rng(od_seed);
            Matrix X = detail::random_normal_matrix(od_n, od_p, rng);
            const Eigen::RowVectorXd mu = X.colwise().mean();
            X.rowwise() -= mu;
            auto gram = std::make_shared<const Matrix>(X.transpose() * X);
            ObjectiveSpec spec;
            spec.value_fn = [gram](const Matrix& w) {
                return (w.transpose() * (*gram) * w)(0, 0);
            };
            spec.gradient_fn = [gram](const Matrix& w) -> Matrix { return 2.0 * (*gram) * w; };
            spec.maximize = true;
            const FitResult fit =
                ortho_optim(random_stiefel(od_p, 1, od_seed), spec, SolverControl());

            Eigen::SelfAdjointEigenSolver<Matrix> eig(*gram);
            const Matrix top = eig.eigenvectors().col(od_p - 1);
            const double d =
                distance(Subspace(fit.B), Subspace::from_matrix(top), DistanceMethod::dist);
            std::cout << "optim-demo: fval = " << format_g15(fit.fval) << ", iterations = "
                      << fit.iterations << ", dist to SVD component = " << format_g15(d)
                      << "\n";
            if (!od_out.empty()) {
                fs::create_directories(od_out);
                OrderedJson j;
                j["problem"] = "pca";
                j["n"] = od_n;
                j["p"] = od_p;
                j["seed"] = od_seed;
                j["fval"] = fit.fval;
                j["iterations"] = fit.iterations;
                j["dist_to_svd"] = d;
                std::ofstream out(fs::path(od_out) / "optim_demo.json");
                out << j.dump(2) << '\n';
            }
        } else if (bench_cmd->parsed()) {
            const auto results = run_benchmark(parse_bench_problem(b_problem), b_n, b_p,
                                               b_iters, b_repeats, b_seed);
            write_bench_results(results, b_out);
            for (const auto& r : results)
                std::cout << r.problem << " n=" << r.n << " p=" << r.p << " iters="
                          << r.trace.size() - 1 << " seconds=" << format_g15(r.seconds)
                          << " oracle_distance=" << format_g15(r.oracle_distance) << "\n";
        } else if (sim_cmd->parsed()) {
            const fs::path out_path(s_out);
            if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
            fs::path truth_path = out_path;
            truth_path.replace_filename(out_path.stem().string() + "_truth.csv");
            if (s_design == "surv") {
                const SurvivalSim sim = gen_survival_sim(s_n, s_p, s_seed);
                Matrix table(s_n, s_p + 2);
                table.leftCols(s_p) = sim.data.X;
                table.col(s_p) = sim.data.Y;
                table.col(s_p + 1) = sim.data.delta.cast<double>();
                auto names = default_feature_names(s_p);
                names.push_back("time");
                names.push_back("censor");
                write_matrix_csv(out_path, table, names);
                write_matrix_csv(truth_path, sim.fail_edr, direction_names(2),
                                 default_feature_names(s_p), "feature");
            } else if (s_design == "reg") {
                const RegressionSim sim = gen_regression_sim(s_n, s_p, s_seed);
                Matrix table(s_n, s_p + 1);
                table.leftCols(s_p) = sim.data.X;
                table.col(s_p) = sim.data.y;
                auto names = default_feature_names(s_p);
                names.push_back("y");
                write_matrix_csv(out_path, table, names);
                write_matrix_csv(truth_path, sim.true_B, direction_names(1),
                                 default_feature_names(s_p), "feature");
            } else {
                throw ValidationError("unknown simulation design '" + s_design + "'");
            }
            std::cout << "simulate: wrote " << out_path.string() << " and "
                      << truth_path.string() << "\n";
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParse;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const UnimplementedMethodError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const MissingArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const RankDeficiencyError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
