#include "dsiml/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "dsiml/bqp.hpp"
#include "dsiml/parallel.hpp"
#include "dsiml/rng.hpp"
#include "dsiml/varbound.hpp"

namespace dsiml {

namespace {

constexpr double kAcceptTol = 1e-12;

// seed stream tags
constexpr std::uint64_t kInitUsers = 1;
constexpr std::uint64_t kInitItems = 2;
constexpr std::uint64_t kEpochShuffle = 3;
constexpr std::uint64_t kEpochBatch = 4;
constexpr std::uint64_t kOuterBatch = 5;
constexpr std::uint64_t kSolver = 6;

struct Stopwatch {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

enum class LossKind { siml, cml };

void clip_row(std::span<double> row, double max_norm) {
    double norm2 = 0.0;
    for (double v : row) norm2 += v * v;
    if (norm2 > max_norm * max_norm) {
        const double scale = max_norm / std::sqrt(norm2);
        for (double& v : row) v *= scale;
    }
}

SimlModel run_embedding_sgd(const InteractionSet& data, const Hyperparams& hp,
                            LossKind kind) {
    hp.validate();
    const std::size_t n = data.n_users();
    const std::size_t m = data.n_items();
    const double max_norm = std::sqrt(static_cast<double>(hp.dim));

    auto [users, items] = initial_embeddings(n, m, hp);
    EmbeddingMatrix grad_u(n, hp.dim), grad_v(m, hp.dim);

    Stopwatch sw;
    TrainReport report;

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::vector<std::uint32_t> touched_users, touched_items;

    for (std::uint32_t epoch = 1; epoch <= hp.epochs; ++epoch) {
        Rng shuffle_rng(Rng::mix(Rng::mix(hp.seed, kEpochShuffle), epoch));
        shuffle_rng.shuffle(std::span<std::uint32_t>(order));

        double epoch_objective = 0.0;
        std::size_t chunk_id = 0;
        for (std::size_t lo = 0; lo < n; lo += hp.batch_users, ++chunk_id) {
            const std::size_t hi = std::min(n, lo + hp.batch_users);
            const std::span<const std::uint32_t> chunk(order.data() + lo, hi - lo);
            const std::uint64_t batch_seed = Rng::mix(Rng::mix(hp.seed, kEpochBatch),
                                                      static_cast<std::uint64_t>(epoch) *
                                                              1000003ULL +
                                                          chunk_id);
            const TripletBatch batch = sample_npair_batch(data, chunk, hp.n_neg, batch_seed);

            epoch_objective += (kind == LossKind::siml)
                                   ? siml_objective(users, items, batch, hp)
                                   : cml_objective(users, items, batch, hp);

            touched_users.clear();
            touched_items.clear();
            for (const auto& t : batch.tuples) {
                touched_users.push_back(t.user);
                touched_items.push_back(t.positive);
                touched_items.insert(touched_items.end(), t.negatives.begin(),
                                     t.negatives.end());
            }
            std::sort(touched_users.begin(), touched_users.end());
            touched_users.erase(std::unique(touched_users.begin(), touched_users.end()),
                                touched_users.end());
            std::sort(touched_items.begin(), touched_items.end());
            touched_items.erase(std::unique(touched_items.begin(), touched_items.end()),
                                touched_items.end());

            for (std::uint32_t r : touched_users) {
                std::fill(grad_u.row(r).begin(), grad_u.row(r).end(), 0.0);
            }
            for (std::uint32_t r : touched_items) {
                std::fill(grad_v.row(r).begin(), grad_v.row(r).end(), 0.0);
            }
            if (kind == LossKind::siml) {
                accumulate_siml_gradients(users, items, batch, hp, grad_u, grad_v);
            } else {
                accumulate_cml_gradients(users, items, batch, hp, grad_u, grad_v);
            }
            for (std::uint32_t r : touched_users) {
                auto row = users.row(r);
                const auto g = grad_u.row(r);
                for (std::size_t k = 0; k < row.size(); ++k) row[k] -= hp.learning_rate * g[k];
                if (hp.clip_rows) clip_row(row, max_norm);
            }
            for (std::uint32_t r : touched_items) {
                auto row = items.row(r);
                const auto g = grad_v.row(r);
                for (std::size_t k = 0; k < row.size(); ++k) row[k] -= hp.learning_rate * g[k];
                if (hp.clip_rows) clip_row(row, max_norm);
            }
        }

        report.records.push_back({epoch, "epoch", epoch_objective, epoch_objective,
                                  sw.seconds()});
        report.iterations = epoch;
        if (!std::isfinite(epoch_objective)) {
            throw DivergenceError("objective became non-finite at epoch " +
                                      std::to_string(epoch),
                                  report);
        }
    }
    if (!users.all_finite() || !items.all_finite()) {
        throw DivergenceError("embeddings became non-finite", report);
    }
    report.converged = true;
    report.user_checksum = users.checksum();
    report.item_checksum = items.checksum();
    return {std::move(users), std::move(items), std::move(report)};
}

BqpSolverKind effective_solver(const Hyperparams& hp) {
    if (hp.solver != BqpSolverKind::automatic) return hp.solver;
    return hp.dim <= 12 ? BqpSolverKind::exhaustive : BqpSolverKind::flip_descent;
}

}  // namespace

std::pair<EmbeddingMatrix, EmbeddingMatrix> initial_embeddings(std::size_t n_users,
                                                               std::size_t n_items,
                                                               const Hyperparams& hp) {
    return {EmbeddingMatrix::random_uniform(n_users, hp.dim, Rng::mix(hp.seed, kInitUsers)),
            EmbeddingMatrix::random_uniform(n_items, hp.dim, Rng::mix(hp.seed, kInitItems))};
}

SimlModel train_siml(const InteractionSet& data, const Hyperparams& hp) {
    return run_embedding_sgd(data, hp, LossKind::siml);
}

SimlModel train_cml(const InteractionSet& data, const Hyperparams& hp) {
    return run_embedding_sgd(data, hp, LossKind::cml);
}

DsimlModel train_dsiml(const InteractionSet& data, const Hyperparams& hp) {
    const SimlModel warm = train_siml(data, hp);
    return train_dsiml(data, hp, warm.user_factors, warm.item_factors);
}

DsimlModel train_dsiml(const InteractionSet& data, const Hyperparams& hp,
                       const EmbeddingMatrix& init_users, const EmbeddingMatrix& init_items) {
    hp.validate();
    if (init_users.rows() != data.n_users() || init_items.rows() != data.n_items() ||
        init_users.dim() != hp.dim || init_items.dim() != hp.dim) {
        throw std::invalid_argument("initial embeddings do not match dataset/dim");
    }
    const std::size_t n = data.n_users();
    const std::size_t m = data.n_items();
    const BqpSolverKind solver = effective_solver(hp);

    BinaryCodeMatrix user_codes = sign_quantize(init_users);
    BinaryCodeMatrix item_codes = sign_quantize(init_items);

    std::vector<std::uint32_t> all_users(n);
    std::iota(all_users.begin(), all_users.end(), 0u);

    Stopwatch sw;
    TrainReport report;

    TripletBatch batch;
    BatchAdjacency adj;
    VariationalState state;
    auto resample = [&](std::uint32_t iter) {
        batch = sample_npair_batch(data, all_users, hp.n_neg,
                                   Rng::mix(Rng::mix(hp.seed, kOuterBatch), iter));
        adj = BatchAdjacency::build(batch, n, m);
        state = VariationalState(batch.triplet_count());
    };
    resample(1);

    auto record = [&](std::uint32_t iter, const char* phase) {
        report.records.push_back({iter, phase,
                                  bound_objective(user_codes, item_codes, state, batch, hp),
                                  dsiml_objective(user_codes, item_codes, batch, hp),
                                  sw.seconds()});
    };
    auto solve_one = [&](const BqpInstance& inst, std::span<const int> warm,
                         std::uint64_t stream) {
        if (solver == BqpSolverKind::exhaustive) return solve_exhaustive(inst);
        return solve_flip_descent(inst, warm, hp.bqp_restarts,
                                  Rng::mix(Rng::mix(hp.seed, kSolver), stream));
    };

    double prev_end = std::numeric_limits<double>::quiet_NaN();
    for (std::uint32_t iter = 1; iter <= hp.max_outer_iters; ++iter) {
        if (iter > 1 && hp.resample_negatives) resample(iter);

        update_phi(state, user_codes, item_codes, batch, hp);
        update_eta(state, user_codes, item_codes, batch, hp);
        record(iter, "phi-update");
        const double iter_start = report.records.back().bound;

        // user phase: subproblems are independent given fixed item codes
        parallel_for(n, hp.threads, [&](std::size_t u) {
            const auto& triplets = adj.user_triplets[u];
            if (triplets.empty()) return;
            update_variational(state, user_codes, item_codes, batch, hp, triplets);
            const auto inst =
                assemble_user_subproblem(static_cast<std::uint32_t>(u), user_codes,
                                         item_codes, state, batch, hp, triplets);
            const auto warm = user_codes.row_signs(u);
            const double warm_value = inst.evaluate(warm);
            const auto sol = solve_one(inst, warm, (std::uint64_t{iter} << 33) | u);
            if (sol.value < warm_value - kAcceptTol) user_codes.set_row(u, sol.signs);
        });
        record(iter, "user-codes");

        update_phi(state, user_codes, item_codes, batch, hp);
        update_eta(state, user_codes, item_codes, batch, hp);
        record(iter, "eta-update");

        // item phase: sequential Gauss-Seidel; items couple through the y
        // statistic, so each subproblem is refreshed at the latest codes
        for (std::size_t i = 0; i < m; ++i) {
            const auto& triplets = adj.item_triplets[i];
            if (triplets.empty()) continue;
            update_variational(state, user_codes, item_codes, batch, hp, triplets);
            const auto inst =
                assemble_item_subproblem(static_cast<std::uint32_t>(i), user_codes,
                                         item_codes, state, batch, hp, triplets);
            const auto warm = item_codes.row_signs(i);
            const double warm_value = inst.evaluate(warm);
            const auto sol =
                solve_one(inst, warm, (std::uint64_t{iter} << 33) | (1ULL << 32) | i);
            if (sol.value < warm_value - kAcceptTol) item_codes.set_row(i, sol.signs);
        }
        record(iter, "item-codes");

        report.iterations = iter;
        const double end_bound = report.records.back().bound;
        const double reference = std::isnan(prev_end) ? iter_start : prev_end;
        const double decrease = reference - end_bound;
        if (decrease / std::fmax(1.0, std::fabs(reference)) < hp.tol) {
            report.converged = true;
            break;
        }
        prev_end = end_bound;
    }

    report.user_checksum = user_codes.checksum();
    report.item_checksum = item_codes.checksum();
    return {std::move(user_codes), std::move(item_codes), std::move(report)};
}

}  // namespace dsiml
