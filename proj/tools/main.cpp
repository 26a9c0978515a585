#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dsiml/bqp.hpp"
#include "dsiml/error.hpp"
#include "dsiml/eval.hpp"
#include "dsiml/interactions.hpp"
#include "dsiml/retrieval.hpp"
#include "dsiml/trainer.hpp"
#include "json.hpp"

using json = nlohmann::ordered_json;
using namespace dsiml;

namespace {

char parse_separator(const std::string& sep) {
    if (sep == "tab" || sep == "\\t") return '\t';
    if (sep == "space") return ' ';
    if (sep.size() == 1) return sep[0];
    throw std::invalid_argument("--sep expects a single character, 'tab' or 'space'");
}

std::uint32_t default_threads() {
    if (const char* env = std::getenv("DSIML_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<std::uint32_t>(v);
    }
    return 1;
}

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// options shared by the training-flavoured subcommands
struct HyperOpts {
    Hyperparams hp;
    std::string solver = "auto";
    bool no_clip = false;
    bool no_resample = false;

    void add_flags(CLI::App* cmd) {
        hp.threads = default_threads();
        cmd->add_option("--dim", hp.dim, "code / embedding dimension")->capture_default_str();
        cmd->add_option("--gamma", hp.gamma, "angle margin tan(beta), in (0, 1.7321]")
            ->capture_default_str();
        cmd->add_option("--lambda", hp.lambda, "scale-loss weight")->capture_default_str();
        cmd->add_option("--neg", hp.n_neg, "negatives per positive")->capture_default_str();
        cmd->add_option("--epochs", hp.epochs, "SGD epochs")->capture_default_str();
        cmd->add_option("--lr", hp.learning_rate, "SGD learning rate")->capture_default_str();
        cmd->add_option("--batch-users", hp.batch_users, "users per mini-batch")
            ->capture_default_str();
        cmd->add_option("--iters", hp.max_outer_iters, "max alternating iterations")
            ->capture_default_str();
        cmd->add_option("--tol", hp.tol, "relative bound decrease for convergence")
            ->capture_default_str();
        cmd->add_option("--restarts", hp.bqp_restarts, "flip-descent restarts")
            ->capture_default_str();
        cmd->add_option("--solver", solver, "BQP solver: auto|exhaustive|flip")
            ->capture_default_str();
        cmd->add_option("--cml-margin", hp.cml_margin, "fixed margin of the CML baseline")
            ->capture_default_str();
        cmd->add_option("--seed", hp.seed, "random seed")->capture_default_str();
        cmd->add_option("--threads", hp.threads,
                        "worker threads (DSIML_THREADS as fallback)")
            ->capture_default_str();
        cmd->add_flag("--no-clip", no_clip, "disable embedding row-norm clipping");
        cmd->add_flag("--no-resample", no_resample,
                      "keep one negative sample per run instead of per iteration");
    }

    Hyperparams build() const {
        Hyperparams out = hp;
        out.clip_rows = !no_clip;
        out.resample_negatives = !no_resample;
        if (solver == "auto") {
            out.solver = BqpSolverKind::automatic;
        } else if (solver == "exhaustive") {
            out.solver = BqpSolverKind::exhaustive;
        } else if (solver == "flip") {
            out.solver = BqpSolverKind::flip_descent;
        } else {
            throw std::invalid_argument("unknown --solver '" + solver + "'");
        }
        out.validate();
        return out;
    }
};

struct DataOpts {
    std::string data_path;
    std::string test_path;
    std::string sep = "tab";
    double rating_threshold = 1.0;

    void add_flags(CLI::App* cmd, bool with_test) {
        cmd->add_option("--data", data_path, "interaction file (train split)")->required();
        if (with_test) {
            cmd->add_option("--test", test_path, "held-out interaction file");
        }
        cmd->add_option("--sep", sep, "field separator: single char, 'tab' or 'space'")
            ->capture_default_str();
        cmd->add_option("--rating-threshold", rating_threshold,
                        "minimum rating that counts as positive")
            ->capture_default_str();
    }

    InteractionSet load() const {
        std::size_t dropped = 0;
        auto set = load_interactions_pair(data_path, test_path, parse_separator(sep),
                                          rating_threshold, &dropped);
        if (dropped > 0) {
            std::cerr << "note: dropped " << dropped
                      << " test pairs with users/items unseen in training\n";
        }
        return set;
    }
};

void emit(const json& j) { std::cout << j.dump() << "\n" << std::flush; }

void emit_report(const TrainReport& report, const std::string& stage) {
    for (const auto& rec : report.records) {
        emit(json{{"stage", stage},
                  {"iter", rec.iteration},
                  {"phase", rec.phase},
                  {"bound", rec.bound},
                  {"objective", rec.objective},
                  {"seconds", rec.seconds}});
    }
}

void emit_metrics(const RankingMetrics& metrics, const std::string& model,
                  std::uint64_t seed, const json& extra = json::object()) {
    for (const auto& at : metrics.per_k) {
        json j{{"model", model},
               {"k", at.k},
               {"ndcg", at.ndcg},
               {"hr", at.hr},
               {"users", metrics.users_evaluated},
               {"seed", seed}};
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
        emit(j);
    }
}

struct TrainedModels {
    SimlModel siml;
    DsimlModel dsiml;
    bool has_dsiml = false;
};

TrainedModels run_training(const InteractionSet& data, const Hyperparams& hp,
                           const std::string& mode, bool quiet_reports) {
    if (mode != "siml" && mode != "dsiml") {
        throw std::invalid_argument("unknown --mode '" + mode + "'");
    }
    TrainedModels out{train_siml(data, hp), {}, false};
    if (!quiet_reports) emit_report(out.siml.report, "siml");
    if (mode == "dsiml") {
        out.dsiml = train_dsiml(data, hp, out.siml.user_factors, out.siml.item_factors);
        out.has_dsiml = true;
        if (!quiet_reports) emit_report(out.dsiml.report, "dsiml");
    }
    return out;
}

void save_models(const TrainedModels& models, const std::string& out_prefix) {
    save_embeddings(models.siml.user_factors, out_prefix + ".u.emb");
    save_embeddings(models.siml.item_factors, out_prefix + ".v.emb");
    if (models.has_dsiml) {
        save_codes(models.dsiml.user_codes, out_prefix + ".u.code");
        save_codes(models.dsiml.item_codes, out_prefix + ".v.code");
    }
}

std::vector<std::size_t> default_ks() { return {10}; }

RankingMetrics eval_prefix(const std::string& prefix, const std::string& kind,
                           const InteractionSet& data, std::span<const std::size_t> ks,
                           std::uint32_t threads, std::string* model_name) {
    const bool codes_exist = std::filesystem::exists(prefix + ".u.code");
    const bool use_codes = kind == "codes" || (kind == "auto" && codes_exist);
    if (use_codes) {
        *model_name = "dsiml";
        return evaluate_codes(load_codes(prefix + ".u.code"), load_codes(prefix + ".v.code"),
                              data, ks, threads);
    }
    *model_name = "siml";
    return evaluate_embeddings(load_embeddings(prefix + ".u.emb"),
                               load_embeddings(prefix + ".v.emb"), data, ks, threads);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"discrete scale-invariant metric learning for hashing-based recommendation"};
    app.require_subcommand(1);

    // ---- prepare ----
    auto* prepare = app.add_subcommand("prepare", "filter, split and canonicalize a dataset");
    auto prep_data = std::make_shared<DataOpts>();
    auto prep_min = std::make_shared<std::size_t>(20);
    auto prep_frac = std::make_shared<double>(0.8);
    auto prep_seed = std::make_shared<std::uint64_t>(42);
    auto prep_out = std::make_shared<std::string>();
    prep_data->add_flags(prepare, false);
    prepare->add_option("--min-degree", *prep_min, "drop users/items below this degree (0 skips)")
        ->capture_default_str();
    prepare->add_option("--train-frac", *prep_frac, "train share per user")->capture_default_str();
    prepare->add_option("--seed", *prep_seed, "split seed")->capture_default_str();
    prepare->add_option("--out", *prep_out, "output prefix")->required();
    prepare->callback([=]() {
        auto set = prep_data->load();
        if (*prep_min > 0) set = filter_min_degree(set, *prep_min);
        set = split_train_test(set, *prep_frac, *prep_seed);
        save_interactions(set, *prep_out + ".train.txt", *prep_out + ".test.txt");
        std::cerr << "prepared " << set.n_users() << " users x " << set.n_items()
                  << " items: " << set.total_train() << " train / " << set.total_test()
                  << " test positives\n";
        emit(json{{"command", "prepare"},
                  {"users", set.n_users()},
                  {"items", set.n_items()},
                  {"train", set.total_train()},
                  {"test", set.total_test()},
                  {"train_file", *prep_out + ".train.txt"},
                  {"test_file", *prep_out + ".test.txt"}});
    });

    // ---- train ----
    auto* train = app.add_subcommand("train", "train the continuous and/or binary model");
    auto train_data = std::make_shared<DataOpts>();
    auto train_hyper = std::make_shared<HyperOpts>();
    auto train_mode = std::make_shared<std::string>("dsiml");
    auto train_out = std::make_shared<std::string>();
    train_data->add_flags(train, true);
    train_hyper->add_flags(train);
    train->add_option("--mode", *train_mode, "siml (continuous only) or dsiml")
        ->capture_default_str();
    train->add_option("--out", *train_out, "model output prefix")->required();
    train->callback([=]() {
        const Hyperparams hp = train_hyper->build();  // rejects bad gamma before any work
        if (*train_mode != "siml" && *train_mode != "dsiml") {
            throw std::invalid_argument("unknown --mode '" + *train_mode + "'");
        }
        const auto data = train_data->load();
        const auto models = run_training(data, hp, *train_mode, false);
        save_models(models, *train_out);
        const TrainReport& final_report =
            models.has_dsiml ? models.dsiml.report : models.siml.report;
        std::cerr << "trained " << *train_mode << " on " << data.n_users() << " users, "
                  << data.n_items() << " items\n";
        emit(json{{"command", "train"},
                  {"mode", *train_mode},
                  {"converged", final_report.converged},
                  {"iterations", final_report.iterations},
                  {"user_checksum", hex64(final_report.user_checksum)},
                  {"item_checksum", hex64(final_report.item_checksum)},
                  {"out", *train_out}});
    });

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "rank all items and report NDCG@k / HR@k");
    auto eval_data = std::make_shared<DataOpts>();
    auto eval_model = std::make_shared<std::string>();
    auto eval_kind = std::make_shared<std::string>("auto");
    auto eval_ks = std::make_shared<std::vector<std::size_t>>(default_ks());
    auto eval_seed = std::make_shared<std::uint64_t>(42);
    auto eval_threads = std::make_shared<std::uint32_t>(default_threads());
    eval_data->add_flags(eval, true);
    eval->add_option("--model", *eval_model, "model file prefix")->required();
    eval->add_option("--kind", *eval_kind, "auto|codes|embeddings")->capture_default_str();
    eval->add_option("--k", *eval_ks, "cutoffs, repeatable or comma separated")
        ->delimiter(',')
        ->capture_default_str();
    eval->add_option("--seed", *eval_seed, "seed echoed into the output")->capture_default_str();
    eval->add_option("--threads", *eval_threads, "worker threads")->capture_default_str();
    eval->callback([=]() {
        const auto data = eval_data->load();
        std::string model_name;
        const auto metrics =
            eval_prefix(*eval_model, *eval_kind, data, *eval_ks, *eval_threads, &model_name);
        emit_metrics(metrics, model_name, *eval_seed);
    });

    // ---- recommend ----
    auto* recommend = app.add_subcommand("recommend", "top-k Hamming recommendations");
    auto rec_data = std::make_shared<DataOpts>();
    auto rec_model = std::make_shared<std::string>();
    auto rec_k = std::make_shared<std::size_t>(10);
    auto rec_users = std::make_shared<std::vector<std::uint32_t>>();
    rec_data->add_flags(recommend, true);
    recommend->add_option("--model", *rec_model, "model file prefix (codes)")->required();
    recommend->add_option("--k", *rec_k, "list length")->capture_default_str();
    recommend->add_option("--users", *rec_users, "user ids (default: all)")->delimiter(',');
    recommend->callback([=]() {
        const auto data = rec_data->load();
        const auto user_codes = load_codes(*rec_model + ".u.code");
        const auto item_codes = load_codes(*rec_model + ".v.code");
        if (user_codes.rows() != data.n_users() || item_codes.rows() != data.n_items()) {
            throw DataError("model shape does not match dataset");
        }
        std::vector<std::vector<std::uint32_t>> excluded(data.n_users());
        for (std::size_t u = 0; u < data.n_users(); ++u) {
            excluded[u].assign(data.train_items(u).begin(), data.train_items(u).end());
        }
        const RetrievalIndex index(item_codes, std::move(excluded));

        std::vector<std::uint32_t> targets = *rec_users;
        if (targets.empty()) {
            targets.resize(data.n_users());
            for (std::uint32_t u = 0; u < data.n_users(); ++u) targets[u] = u;
        }
        for (std::uint32_t u : targets) {
            if (u >= data.n_users()) throw DataError("user id out of range");
            const auto top = top_k(index, user_codes, u, *rec_k, u);
            json items = json::array(), dists = json::array();
            for (const auto& s : top) {
                items.push_back(s.item);
                dists.push_back(s.distance);
            }
            emit(json{{"user", u}, {"items", items}, {"distances", dists}});
        }
    });

    // ---- bench ----
    auto* bench = app.add_subcommand("bench", "packed-Hamming vs float full-ranking throughput");
    auto bench_m = std::make_shared<std::size_t>(100000);
    auto bench_dim = std::make_shared<std::size_t>(64);
    auto bench_q = std::make_shared<std::size_t>(100);
    auto bench_seed = std::make_shared<std::uint64_t>(42);
    bench->add_option("--m", *bench_m, "item count")->capture_default_str();
    bench->add_option("--dim", *bench_dim, "code dimension")->capture_default_str();
    bench->add_option("--queries", *bench_q, "number of queries")->capture_default_str();
    bench->add_option("--seed", *bench_seed, "data seed")->capture_default_str();
    bench->callback([=]() {
        const auto r = benchmark_speedup(*bench_m, *bench_dim, *bench_q, *bench_seed);
        std::cerr << "hamming " << r.hamming_qps << " qps vs float " << r.float_qps
                  << " qps\n";
        emit(json{{"m", r.m},
                  {"d", r.dim},
                  {"hamming_qps", r.hamming_qps},
                  {"float_qps", r.float_qps},
                  {"speedup", r.speedup}});
    });

    // ---- grid ----
    auto* grid = app.add_subcommand("grid", "gamma x lambda x seed sweep");
    auto grid_data = std::make_shared<DataOpts>();
    auto grid_hyper = std::make_shared<HyperOpts>();
    auto grid_mode = std::make_shared<std::string>("dsiml");
    auto grid_gammas = std::make_shared<std::vector<double>>(std::vector<double>{1.0});
    auto grid_lambdas = std::make_shared<std::vector<double>>(std::vector<double>{1.0});
    auto grid_seeds = std::make_shared<std::vector<std::uint64_t>>(std::vector<std::uint64_t>{42});
    auto grid_ks = std::make_shared<std::vector<std::size_t>>(default_ks());
    grid_data->add_flags(grid, true);
    grid_hyper->add_flags(grid);
    grid->add_option("--mode", *grid_mode, "siml or dsiml")->capture_default_str();
    grid->add_option("--gammas", *grid_gammas, "gamma grid")->delimiter(',');
    grid->add_option("--lambdas", *grid_lambdas, "lambda grid")->delimiter(',');
    grid->add_option("--seeds", *grid_seeds, "seed grid")->delimiter(',');
    grid->add_option("--k", *grid_ks, "cutoffs")->delimiter(',');
    grid->callback([=]() {
        // validate the whole grid before touching data
        if (*grid_mode != "siml" && *grid_mode != "dsiml") {
            throw std::invalid_argument("unknown --mode '" + *grid_mode + "'");
        }
        for (double g : *grid_gammas) {
            Hyperparams probe = grid_hyper->hp;
            probe.gamma = g;
            probe.validate();
        }
        const auto data = grid_data->load();
        for (double gamma : *grid_gammas) {
            for (double lambda : *grid_lambdas) {
                for (std::uint64_t seed : *grid_seeds) {
                    Hyperparams hp = grid_hyper->build();
                    hp.gamma = gamma;
                    hp.lambda = lambda;
                    hp.seed = seed;
                    const auto models = run_training(data, hp, *grid_mode, true);
                    RankingMetrics metrics;
                    std::string model_name;
                    if (models.has_dsiml) {
                        model_name = "dsiml";
                        metrics = evaluate_codes(models.dsiml.user_codes,
                                                 models.dsiml.item_codes, data, *grid_ks,
                                                 hp.threads);
                    } else {
                        model_name = "siml";
                        metrics = evaluate_embeddings(models.siml.user_factors,
                                                      models.siml.item_factors, data,
                                                      *grid_ks, hp.threads);
                    }
                    emit_metrics(metrics, model_name, seed,
                                 json{{"gamma", gamma}, {"lambda", lambda}});
                }
            }
        }
    });

    // ---- rq4 ----
    auto* rq4 = app.add_subcommand("rq4",
                                   "imbalanced-data study: scale-invariant vs fixed margin");
    auto rq4_hyper = std::make_shared<HyperOpts>();
    auto rq4_seeds = std::make_shared<std::vector<std::uint64_t>>(
        std::vector<std::uint64_t>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    auto rq4_config = std::make_shared<Rq4Config>();
    rq4_hyper->add_flags(rq4);
    rq4->add_option("--seeds", *rq4_seeds, "seeds, one synthetic dataset each")->delimiter(',');
    rq4->add_option("--users", rq4_config->n_users, "synthetic user count")
        ->capture_default_str();
    rq4->add_option("--major", rq4_config->n_major, "majority-class item count")
        ->capture_default_str();
    rq4->add_option("--minor", rq4_config->n_minor, "minority-class item count")
        ->capture_default_str();
    rq4->add_option("--spread-major", rq4_config->spread_major, "majority cluster spread")
        ->capture_default_str();
    rq4->add_option("--spread-minor", rq4_config->spread_minor, "minority cluster spread")
        ->capture_default_str();
    rq4->add_option("--k", rq4_config->k, "metric cutoff")->capture_default_str();
    rq4->callback([=]() {
        const Hyperparams hp = rq4_hyper->build();
        const auto report = run_rq4(*rq4_seeds, hp, *rq4_config);
        for (const auto& row : report.rows) {
            emit(json{{"seed", row.seed},
                      {"siml_ndcg", row.siml_ndcg},
                      {"siml_hr", row.siml_hr},
                      {"cml_ndcg", row.cml_ndcg},
                      {"cml_hr", row.cml_hr}});
        }
        emit(json{{"command", "rq4"},
                  {"seeds", report.rows.size()},
                  {"siml_mean_ndcg", report.siml_mean_ndcg},
                  {"cml_mean_ndcg", report.cml_mean_ndcg},
                  {"siml_mean_hr", report.siml_mean_hr},
                  {"cml_mean_hr", report.cml_mean_hr}});
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
