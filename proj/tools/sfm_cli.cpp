#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sfm/sfm.hpp"

namespace {

using nlohmann::json;

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch()).count();
}

void write_manifest(const std::string& path, const json& body) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << body.dump(2) << '\n';
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (!token.empty()) out.push_back(std::stod(token));
    }
    return out;
}

std::vector<std::string> parse_string_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (!token.empty()) out.push_back(token);
    }
    return out;
}

sfm::LossKind parse_loss(const std::string& name) {
    if (name == "squared") return sfm::LossKind::Squared;
    if (name == "logistic") return sfm::LossKind::Logistic;
    throw CLI::ValidationError("--loss", "unknown loss '" + name + "'");
}

// Regularizer names map onto the model family: `ti`/`cs` mean the order-2
// penalties for FMs, their ANOVA generalizations for HOFMs, and the
// all-subsets penalties for the all-subsets model.
sfm::RegKind map_reg(const std::string& reg, const std::string& model_kind) {
    if (model_kind == "fm") {
        if (reg == "l2") return sfm::RegKind::L2SQ;
        if (reg == "l1") return sfm::RegKind::L1;
        if (reg == "l21") return sfm::RegKind::L21;
        if (reg == "ti") return sfm::RegKind::TI;
        if (reg == "cs") return sfm::RegKind::CS;
    } else if (model_kind == "hofm") {
        if (reg == "l2") return sfm::RegKind::L2SQ;
        if (reg == "ti") return sfm::RegKind::TI_M;
        if (reg == "cs") return sfm::RegKind::CS_M;
    } else if (model_kind == "allsubsets") {
        if (reg == "l2") return sfm::RegKind::L2SQ;
        if (reg == "ti") return sfm::RegKind::TI_ALL;
        if (reg == "cs") return sfm::RegKind::CS_ALL;
    }
    throw CLI::ValidationError("--reg", "regularizer '" + reg
                               + "' is not supported with model kind '" + model_kind + "'");
}

double predict_any(const sfm::TrainedModel& model, const sfm::SparseSlice& x) {
    if (const auto* fm = std::get_if<sfm::FmModel>(&model)) return sfm::fm_predict(*fm, x);
    if (const auto* hofm = std::get_if<sfm::HofmModel>(&model)) return sfm::hofm_predict(*hofm, x);
    return sfm::all_subsets_predict(std::get<sfm::AllSubsetsModel>(model), x);
}

const sfm::DenseMatrix& factor_matrix(const sfm::TrainedModel& model) {
    if (const auto* fm = std::get_if<sfm::FmModel>(&model)) return fm->P;
    if (const auto* hofm = std::get_if<sfm::HofmModel>(&model)) {
        if (hofm->P_by_order.empty())
            throw std::runtime_error("model has no factor matrices");
        return hofm->P_by_order.front();
    }
    return std::get<sfm::AllSubsetsModel>(model).P;
}

struct GenArgs {
    std::size_t d_true = 80, blocks = 8, d_noise = 20, n = 200;
    double corr = 0.2, noise_std = 0.1;
    std::uint64_t seed = 0;
    std::string out;
};

int run_gen(const GenArgs& a) {
    sfm::SyntheticSpec spec;
    spec.d_true = a.d_true;
    spec.n_blocks = a.blocks;
    spec.d_noise = a.d_noise;
    spec.n_samples = a.n;
    spec.feature_corr = a.corr;
    spec.target_noise_std = a.noise_std;
    spec.seed = a.seed;
    const double t0 = now_seconds();
    const auto task = sfm::generate(spec);
    sfm::save_libsvm(task.X, task.y, a.out + ".libsvm");
    sfm::save_dense_matrix(task.W_true, a.out + ".wtrue");
    json manifest = {
        {"command", "gen"},
        {"d_true", a.d_true}, {"blocks", a.blocks}, {"d_noise", a.d_noise},
        {"n", a.n}, {"corr", a.corr}, {"noise_std", a.noise_std}, {"seed", a.seed},
        {"outputs", {a.out + ".libsvm", a.out + ".wtrue"}},
        {"wall_seconds", now_seconds() - t0},
    };
    write_manifest(a.out + ".manifest.json", manifest);
    std::cout << "wrote " << a.out << ".libsvm (" << task.X.n_rows() << " x "
              << task.X.n_cols() << ", nnz " << task.X.nnz() << ")\n";
    return 0;
}

struct TrainArgs {
    std::string data, model_kind = "fm", reg = "l2", loss = "squared", out;
    std::size_t k = 30, epochs = 100, n_features = 0;
    int order = 2;
    double lw = 0.0, lp = 0.0, lpt = 0.0, tol = 1e-3;
    double time_budget = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 0;
    bool no_linear = false;
};

sfm::TrainConfig build_config(const TrainArgs& a) {
    sfm::TrainConfig cfg;
    cfg.loss = parse_loss(a.loss);
    cfg.spec.kind = map_reg(a.reg, a.model_kind);
    cfg.spec.lambda_w = a.lw;
    cfg.spec.lambda_p = a.lp;
    cfg.spec.lambda_tilde = a.lpt;
    cfg.rank = a.k;
    cfg.order = a.order;
    cfg.max_epochs = a.epochs;
    cfg.tol = a.tol;
    cfg.seed = a.seed;
    cfg.fit_linear = !a.no_linear;
    cfg.fit_bias = !a.no_linear;
    cfg.time_budget = a.time_budget;
    return cfg;
}

sfm::ModelKind parse_model_kind(const std::string& name) {
    if (name == "fm") return sfm::ModelKind::FM;
    if (name == "hofm") return sfm::ModelKind::HOFM;
    if (name == "allsubsets") return sfm::ModelKind::ALLSUBSETS;
    throw CLI::ValidationError("--model-kind", "unknown model kind '" + name + "'");
}

int run_train(const TrainArgs& a) {
    auto [X, y] = sfm::load_libsvm(a.data, a.n_features);
    const auto cfg = build_config(a);
    const double t0 = now_seconds();
    auto result = sfm::train(parse_model_kind(a.model_kind), X, y, cfg);
    const double seconds = now_seconds() - t0;

    sfm::ModelArchive archive;
    archive.model = std::move(result.model);
    archive.hyperparameters = {
        {"model_kind", a.model_kind}, {"reg", a.reg}, {"loss", a.loss},
        {"k", std::to_string(a.k)}, {"order", std::to_string(a.order)},
        {"lw", std::to_string(a.lw)}, {"lp", std::to_string(a.lp)},
        {"lpt", std::to_string(a.lpt)}, {"seed", std::to_string(a.seed)},
    };
    sfm::save_model(archive, a.out);

    std::ofstream hist(a.out + ".history.csv");
    hist << "epoch,objective,seconds\n";
    for (const auto& h : result.history)
        hist << h.epoch << ',' << h.objective << ',' << h.seconds << '\n';

    json manifest = {
        {"command", "train"},
        {"data", a.data}, {"model_kind", a.model_kind}, {"reg", a.reg}, {"loss", a.loss},
        {"k", a.k}, {"order", a.order}, {"lw", a.lw}, {"lp", a.lp}, {"lpt", a.lpt},
        {"epochs", a.epochs}, {"tol", a.tol}, {"seed", a.seed},
        {"no_linear", a.no_linear},
        {"epochs_run", result.epochs_run}, {"converged", result.converged},
        {"final_objective", result.history.empty() ? 0.0 : result.history.back().objective},
        {"outputs", {a.out, a.out + ".history.csv"}},
        {"wall_seconds", seconds},
    };
    write_manifest(a.out + ".manifest.json", manifest);
    std::cout << "trained " << a.model_kind << "/" << a.reg << " in " << result.epochs_run
              << " epochs (" << seconds << " s), final objective "
              << (result.history.empty() ? 0.0 : result.history.back().objective) << "\n";
    return 0;
}

struct EvalArgs {
    std::string data, model, w_true, metrics = "rmse", out;
    std::size_t n_features = 0;
};

int run_eval(const EvalArgs& a) {
    const auto archive = sfm::load_model(a.model);
    std::size_t d = 0;
    if (const auto* fm = std::get_if<sfm::FmModel>(&archive.model)) d = fm->n_features();
    else if (const auto* hofm = std::get_if<sfm::HofmModel>(&archive.model)) d = hofm->n_features();
    else d = std::get<sfm::AllSubsetsModel>(archive.model).n_features();
    auto [X, y] = sfm::load_libsvm(a.data, a.n_features ? a.n_features : d);

    std::vector<double> scores(X.n_rows());
    for (std::size_t n = 0; n < X.n_rows(); ++n)
        scores[n] = predict_any(archive.model, X.row(n));

    json report = {{"command", "eval"}, {"data", a.data}, {"model", a.model}};
    for (const auto& metric : parse_string_list(a.metrics)) {
        if (metric == "rmse") {
            report["rmse"] = sfm::rmse(y, scores);
        } else if (metric == "auc") {
            std::vector<double> labels(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) labels[i] = y[i] > 0.0 ? 1.0 : -1.0;
            report["auc"] = sfm::roc_auc(labels, scores);
        } else if (metric == "support") {
            if (a.w_true.empty())
                throw CLI::ValidationError("--metrics", "support metrics require --w-true");
            const auto W = sfm::load_dense_matrix(a.w_true);
            const auto rep = sfm::support_report(W, factor_matrix(archive.model));
            report["estimation_error"] = rep.estimation_error;
            report["f1"] = rep.f1;
            report["exact_recovery"] = rep.exact_recovery;
            report["used_interactions"] = rep.n_pred_interactions;
            report["used_features"] = rep.n_pred_features;
        } else {
            throw CLI::ValidationError("--metrics", "unknown metric '" + metric + "'");
        }
    }
    std::cout << report.dump(2) << '\n';
    if (!a.out.empty()) write_manifest(a.out, report);
    return 0;
}

struct BenchRecoveryArgs {
    std::string setting = "interaction";
    std::size_t n_datasets = 10, seeds = 10, k = 30, epochs = 200;
    std::string n_list = "200";
    std::string reg_list = "ti,cs,l1,l21,fm";
    std::string lambda_grid = "0.01,0.1,1,10,100";
    double tol = 1e-3;
    double time_budget = 2.0;
    std::string out = "bench_recovery";
};

struct CellStats {
    double f1_sum = 0.0, err_sum = 0.0, pssr_sum = 0.0;
    std::size_t runs = 0;
};

int run_bench_recovery(const BenchRecoveryArgs& a) {
    sfm::SyntheticSpec base;
    if (a.setting == "interaction") {
        base.d_true = 80; base.n_blocks = 8; base.d_noise = 20;
    } else if (a.setting == "feature") {
        base.d_true = 20; base.n_blocks = 1; base.d_noise = 80;
    } else {
        throw CLI::ValidationError("--setting", "must be 'interaction' or 'feature'");
    }

    const auto n_values = parse_double_list(a.n_list);
    const auto regs = parse_string_list(a.reg_list);
    const auto lambdas = parse_double_list(a.lambda_grid);
    const double t0 = now_seconds();

    std::ofstream runs_csv(a.out + "_runs.csv");
    runs_csv << "setting,n,dataset,seed,reg,lambda,f1,estimation_error,exact_recovery,"
                "used_interactions,used_features,epochs,seconds\n";

    std::map<std::string, CellStats> cells;
    for (const double n_raw : n_values) {
        const auto N = static_cast<std::size_t>(n_raw);
        for (std::size_t ds = 0; ds < a.n_datasets; ++ds) {
            sfm::SyntheticSpec spec = base;
            spec.n_samples = N;
            spec.seed = 1000 + ds;
            const auto task = sfm::generate(spec);
            for (const auto& reg : regs) {
                for (const double lam : lambdas) {
                    for (std::size_t seed = 0; seed < a.seeds; ++seed) {
                        sfm::TrainConfig cfg;
                        cfg.loss = sfm::LossKind::Squared;
                        cfg.spec.kind = map_reg(reg == "fm" ? "l2" : reg, "fm");
                        cfg.spec.lambda_p = lam;
                        cfg.spec.lambda_tilde = reg == "fm" ? 0.0 : lam;
                        cfg.rank = a.k;
                        cfg.max_epochs = a.epochs;
                        cfg.tol = a.tol;
                        cfg.time_budget = a.time_budget;
                        cfg.seed = seed;
                        cfg.fit_linear = false;   // targets are purely quadratic
                        cfg.fit_bias = false;
                        const double rt0 = now_seconds();
                        auto result = sfm::train(sfm::ModelKind::FM, task.X, task.y, cfg);
                        const double rsec = now_seconds() - rt0;
                        const auto& model = std::get<sfm::FmModel>(result.model);
                        const auto rep = sfm::support_report(task.W_true, model.P);
                        runs_csv << a.setting << ',' << N << ',' << ds << ',' << seed << ','
                                 << reg << ',' << lam << ',' << rep.f1 << ','
                                 << rep.estimation_error << ',' << (rep.exact_recovery ? 1 : 0)
                                 << ',' << rep.n_pred_interactions << ',' << rep.n_pred_features
                                 << ',' << result.epochs_run << ',' << rsec << '\n';
                        std::ostringstream key;
                        key << N << ',' << reg << ',' << lam;
                        auto& cell = cells[key.str()];
                        cell.f1_sum += rep.f1;
                        cell.err_sum += rep.estimation_error;
                        cell.pssr_sum += rep.exact_recovery ? 1.0 : 0.0;
                        ++cell.runs;
                    }
                }
                runs_csv.flush();
            }
        }
    }

    std::ofstream summary_csv(a.out + "_summary.csv");
    summary_csv << "n,reg,lambda,mean_f1,mean_estimation_error,pssr,runs\n";
    for (const auto& [key, cell] : cells) {
        const double r = static_cast<double>(cell.runs);
        summary_csv << key << ',' << cell.f1_sum / r << ',' << cell.err_sum / r << ','
                    << cell.pssr_sum / r << ',' << cell.runs << '\n';
    }

    json manifest = {
        {"command", "bench-recovery"},
        {"setting", a.setting}, {"n_datasets", a.n_datasets}, {"seeds", a.seeds},
        {"n_list", a.n_list}, {"reg_list", a.reg_list}, {"lambda_grid", a.lambda_grid},
        {"k", a.k}, {"epochs", a.epochs}, {"tol", a.tol}, {"time_budget", a.time_budget},
        {"outputs", {a.out + "_runs.csv", a.out + "_summary.csv"}},
        {"wall_seconds", now_seconds() - t0},
    };
    write_manifest(a.out + ".manifest.json", manifest);
    std::cout << "wrote " << a.out << "_runs.csv and " << a.out << "_summary.csv\n";
    return 0;
}

struct BenchProxArgs {
    std::string d_list = "8,16,32,64,128,256,512,1024,2048,4096,8192,16384";
    std::string lambda_list = "0.0078125,1,128";
    std::size_t trials = 20;
    std::uint64_t seed = 0;
    std::string out = "bench_prox";
};

int run_bench_prox(const BenchProxArgs& a) {
    const auto ds = parse_double_list(a.d_list);
    const auto lambdas = parse_double_list(a.lambda_list);
    sfm::Rng rng(a.seed);
    std::ofstream csv(a.out + ".csv");
    csv << "d,lambda,trial,sort_seconds,rand_seconds,max_gap\n";
    const double t0 = now_seconds();
    for (const double d_raw : ds) {
        const auto d = static_cast<std::size_t>(d_raw);
        for (const double lam : lambdas) {
            for (std::size_t trial = 0; trial < a.trials; ++trial) {
                std::vector<double> p(d);
                for (auto& v : p) v = rng.next_gaussian();
                const double s0 = now_seconds();
                const auto sorted = sfm::prox_sq_l1_sort(p, lam);
                const double s1 = now_seconds();
                const auto randomized = sfm::prox_sq_l1_rand(p, lam, rng);
                const double s2 = now_seconds();
                double gap = 0.0;
                for (std::size_t i = 0; i < d; ++i)
                    gap = std::max(gap, std::abs(sorted.values[i] - randomized.values[i]));
                csv << d << ',' << lam << ',' << trial << ',' << (s1 - s0) << ','
                    << (s2 - s1) << ',' << gap << '\n';
            }
        }
    }
    json manifest = {
        {"command", "bench-prox"},
        {"d_list", a.d_list}, {"lambda_list", a.lambda_list}, {"trials", a.trials},
        {"seed", a.seed},
        {"outputs", {a.out + ".csv"}},
        {"wall_seconds", now_seconds() - t0},
    };
    write_manifest(a.out + ".manifest.json", manifest);
    std::cout << "wrote " << a.out << ".csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse factorization machines with interaction- and feature-selecting penalties"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* cmd_gen = app.add_subcommand("gen", "Generate a synthetic support-recovery dataset");
    cmd_gen->add_option("--d-true", gen.d_true, "Number of informative features");
    cmd_gen->add_option("--blocks", gen.blocks, "Number of interaction blocks");
    cmd_gen->add_option("--d-noise", gen.d_noise, "Number of noise features");
    cmd_gen->add_option("--n", gen.n, "Number of samples");
    cmd_gen->add_option("--corr", gen.corr, "Within-block feature correlation");
    cmd_gen->add_option("--noise-std", gen.noise_std, "Target noise standard deviation");
    cmd_gen->add_option("--seed", gen.seed, "Random seed");
    cmd_gen->add_option("--out", gen.out, "Output path prefix")->required();

    TrainArgs tr;
    auto* cmd_train = app.add_subcommand("train", "Train a model on a libsvm dataset");
    cmd_train->add_option("--data", tr.data, "Training data (libsvm)")->required();
    cmd_train->add_option("--model-kind", tr.model_kind, "fm | hofm | allsubsets");
    cmd_train->add_option("--reg", tr.reg, "l2 | l1 | l21 | ti | cs");
    cmd_train->add_option("--loss", tr.loss, "squared | logistic");
    cmd_train->add_option("--k", tr.k, "Factorization rank");
    cmd_train->add_option("--order", tr.order, "Highest interaction order (hofm)");
    cmd_train->add_option("--lw", tr.lw, "l2 strength on linear weights");
    cmd_train->add_option("--lp", tr.lp, "l2 strength on factors");
    cmd_train->add_option("--lpt", tr.lpt, "Sparsity penalty strength");
    cmd_train->add_option("--epochs", tr.epochs, "Maximum epochs");
    cmd_train->add_option("--tol", tr.tol, "Convergence tolerance (max parameter change)");
    cmd_train->add_option("--seed", tr.seed, "Random seed");
    cmd_train->add_option("--time-budget", tr.time_budget, "Wall-time budget in seconds");
    cmd_train->add_option("--n-features", tr.n_features, "Feature-count override");
    cmd_train->add_flag("--no-linear", tr.no_linear, "Omit the linear term and bias");
    cmd_train->add_option("--out", tr.out, "Model output path")->required();

    EvalArgs ev;
    auto* cmd_eval = app.add_subcommand("eval", "Evaluate a trained model");
    cmd_eval->add_option("--data", ev.data, "Evaluation data (libsvm)")->required();
    cmd_eval->add_option("--model", ev.model, "Model archive path")->required();
    cmd_eval->add_option("--w-true", ev.w_true, "Ground-truth interaction matrix");
    cmd_eval->add_option("--metrics", ev.metrics, "Comma list of rmse,auc,support");
    cmd_eval->add_option("--n-features", ev.n_features, "Feature-count override");
    cmd_eval->add_option("--out", ev.out, "Write the report as JSON");

    BenchRecoveryArgs br;
    auto* cmd_br = app.add_subcommand("bench-recovery", "Synthetic support-recovery sweep");
    cmd_br->add_option("--setting", br.setting, "interaction | feature");
    cmd_br->add_option("--n-datasets", br.n_datasets, "Datasets per sample size");
    cmd_br->add_option("--n-list", br.n_list, "Comma list of sample sizes");
    cmd_br->add_option("--seeds", br.seeds, "Seeds per dataset");
    cmd_br->add_option("--reg-list", br.reg_list, "Comma list of ti,cs,l1,l21,fm");
    cmd_br->add_option("--lambda-grid", br.lambda_grid, "Comma list of penalty strengths");
    cmd_br->add_option("--k", br.k, "Factorization rank");
    cmd_br->add_option("--epochs", br.epochs, "Maximum epochs per run");
    cmd_br->add_option("--tol", br.tol, "Convergence tolerance");
    cmd_br->add_option("--time-budget", br.time_budget, "Per-run wall-time budget in seconds");
    cmd_br->add_option("--out", br.out, "Output path prefix");

    BenchProxArgs bp;
    auto* cmd_bp = app.add_subcommand("bench-prox", "Time sort vs randomized squared-l1 prox");
    cmd_bp->add_option("--d-list", bp.d_list, "Comma list of vector lengths");
    cmd_bp->add_option("--lambda-list", bp.lambda_list, "Comma list of penalty strengths");
    cmd_bp->add_option("--trials", bp.trials, "Trials per (d, lambda)");
    cmd_bp->add_option("--seed", bp.seed, "Random seed");
    cmd_bp->add_option("--out", bp.out, "Output path prefix");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (cmd_gen->parsed()) return run_gen(gen);
        if (cmd_train->parsed()) return run_train(tr);
        if (cmd_eval->parsed()) return run_eval(ev);
        if (cmd_br->parsed()) return run_bench_recovery(br);
        if (cmd_bp->parsed()) return run_bench_prox(bp);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
