#include "dsiml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "dsiml/error.hpp"
#include "dsiml/parallel.hpp"
#include "dsiml/retrieval.hpp"
#include "dsiml/rng.hpp"
#include "dsiml/trainer.hpp"

namespace dsiml {

namespace {

bool hit(std::span<const std::uint32_t> positives_sorted, std::uint32_t item) {
    return std::binary_search(positives_sorted.begin(), positives_sorted.end(), item);
}

}  // namespace

double ndcg_at_k(std::span<const std::uint32_t> ranked,
                 std::span<const std::uint32_t> positives_sorted, std::size_t k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (positives_sorted.empty()) return 0.0;
    const std::size_t depth = std::min(k, ranked.size());
    double dcg = 0.0;
    for (std::size_t r = 1; r <= depth; ++r) {
        if (hit(positives_sorted, ranked[r - 1])) {
            dcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
        }
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min(k, positives_sorted.size());
    for (std::size_t r = 1; r <= ideal; ++r) {
        idcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    }
    return dcg / idcg;
}

double hr_at_k(std::span<const std::uint32_t> ranked,
               std::span<const std::uint32_t> positives_sorted, std::size_t k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (positives_sorted.empty()) return 0.0;
    const std::size_t depth = std::min(k, ranked.size());
    std::size_t hits = 0;
    for (std::size_t r = 0; r < depth; ++r) {
        if (hit(positives_sorted, ranked[r])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(positives_sorted.size());
}

namespace {

// Shared metric loop; rank_fn(u, depth) returns the user's top `depth`
// candidate item ids, train positives already excluded.
template <typename RankFn>
RankingMetrics evaluate_with(const InteractionSet& data, std::span<const std::size_t> ks,
                             std::uint32_t threads, RankFn&& rank_fn) {
    if (ks.empty()) throw std::invalid_argument("need at least one cutoff k");
    for (std::size_t k : ks) {
        if (k < 1) throw std::invalid_argument("k must be >= 1");
    }
    const std::size_t n = data.n_users();
    const std::size_t kmax = *std::max_element(ks.begin(), ks.end());

    // per-user metric values, reduced in id order for determinism
    std::vector<double> ndcg(n * ks.size(), 0.0), hr(n * ks.size(), 0.0);
    std::vector<char> counted(n, 0);

    parallel_for(n, threads, [&](std::size_t u) {
        const auto test = data.test_items(u);
        if (test.empty()) return;
        counted[u] = 1;
        const std::vector<std::uint32_t> ranked = rank_fn(u, kmax);
        for (std::size_t ki = 0; ki < ks.size(); ++ki) {
            ndcg[u * ks.size() + ki] = ndcg_at_k(ranked, test, ks[ki]);
            hr[u * ks.size() + ki] = hr_at_k(ranked, test, ks[ki]);
        }
    });

    RankingMetrics metrics;
    for (std::size_t u = 0; u < n; ++u) {
        if (counted[u]) ++metrics.users_evaluated;
    }
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        double nd = 0.0, h = 0.0;
        for (std::size_t u = 0; u < n; ++u) {
            if (!counted[u]) continue;
            nd += ndcg[u * ks.size() + ki];
            h += hr[u * ks.size() + ki];
        }
        const double denom = std::max<std::size_t>(metrics.users_evaluated, 1);
        metrics.per_k.push_back({ks[ki], nd / denom, h / denom});
    }
    return metrics;
}

std::vector<std::vector<std::uint32_t>> train_exclusions(const InteractionSet& data) {
    std::vector<std::vector<std::uint32_t>> out(data.n_users());
    for (std::size_t u = 0; u < data.n_users(); ++u) {
        out[u].assign(data.train_items(u).begin(), data.train_items(u).end());
    }
    return out;
}

}  // namespace

RankingMetrics evaluate_codes(const BinaryCodeMatrix& users, const BinaryCodeMatrix& items,
                              const InteractionSet& data, std::span<const std::size_t> ks,
                              std::uint32_t threads) {
    if (users.rows() != data.n_users() || items.rows() != data.n_items() ||
        users.dim() != items.dim()) {
        throw std::invalid_argument("model shape does not match dataset");
    }
    const RetrievalIndex index(items, train_exclusions(data));
    return evaluate_with(data, ks, threads, [&](std::size_t u, std::size_t depth) {
        const auto scored =
            top_k(index, users, u, depth, static_cast<std::uint32_t>(u));
        std::vector<std::uint32_t> ids(scored.size());
        for (std::size_t r = 0; r < scored.size(); ++r) ids[r] = scored[r].item;
        return ids;
    });
}

RankingMetrics evaluate_embeddings(const EmbeddingMatrix& users,
                                   const EmbeddingMatrix& items, const InteractionSet& data,
                                   std::span<const std::size_t> ks, std::uint32_t threads) {
    if (users.rows() != data.n_users() || items.rows() != data.n_items() ||
        users.dim() != items.dim()) {
        throw std::invalid_argument("model shape does not match dataset");
    }
    return evaluate_with(data, ks, threads, [&](std::size_t u, std::size_t depth) {
        const auto bu = users.row(u);
        const auto train = data.train_items(u);

        struct Entry {
            double score;
            std::uint32_t id;
        };
        // "better": higher score, then smaller id; top() is the worst kept
        const auto better = [](const Entry& a, const Entry& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.id < b.id;
        };
        std::priority_queue<Entry, std::vector<Entry>, decltype(better)> heap(better);

        for (std::uint32_t i = 0; i < items.rows(); ++i) {
            if (std::binary_search(train.begin(), train.end(), i)) continue;
            const auto vi = items.row(i);
            double score = 0.0;
            for (std::size_t c = 0; c < vi.size(); ++c) score += bu[c] * vi[c];
            const Entry e{score, i};
            if (heap.size() < depth) {
                heap.push(e);
            } else if (better(e, heap.top())) {
                heap.pop();
                heap.push(e);
            }
        }
        std::vector<std::uint32_t> ids(heap.size());
        for (std::size_t pos = heap.size(); pos-- > 0;) {
            ids[pos] = heap.top().id;
            heap.pop();
        }
        return ids;
    });
}

namespace {

// geometry constants of the synthetic generator
constexpr std::size_t kLatentDim = 2;
constexpr double kClusterSeparation = 8.0;  // distance between cluster centers
constexpr double kUserSpreadFactor = 0.8;   // users sit slightly inside their cluster
constexpr double kProximityFactor = 1.0;    // positive iff dist <= factor * class spread
constexpr int kRetryCap = 20;

}  // namespace

std::pair<InteractionSet, SyntheticGeometry> generate_imbalanced_synthetic(
    std::size_t n_users, std::size_t n_major, std::size_t n_minor, double spread_major,
    double spread_minor, std::uint64_t seed) {
    if (!(n_major > n_minor && n_minor >= 1)) {
        throw std::invalid_argument("need n_major > n_minor >= 1");
    }
    if (!(spread_major > spread_minor && spread_minor > 0.0)) {
        throw std::invalid_argument("need spread_major > spread_minor > 0");
    }
    const std::size_t m = n_major + n_minor;
    const double half = kClusterSeparation / 2.0;
    const double centers[2][kLatentDim] = {{-half, 0.0}, {half, 0.0}};
    const double spreads[2] = {spread_major, spread_minor};

    for (int attempt = 0; attempt < kRetryCap; ++attempt) {
        Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(attempt)));
        SyntheticGeometry geom;
        geom.latent_dim = kLatentDim;
        geom.n_major = n_major;
        geom.n_minor = n_minor;
        geom.item_points.resize(m * kLatentDim);
        geom.user_points.resize(n_users * kLatentDim);

        for (std::size_t i = 0; i < m; ++i) {
            const int cls = i < n_major ? 0 : 1;
            for (std::size_t c = 0; c < kLatentDim; ++c) {
                geom.item_points[i * kLatentDim + c] =
                    centers[cls][c] + spreads[cls] * rng.next_gaussian();
            }
        }
        for (std::size_t u = 0; u < n_users; ++u) {
            const int cls = static_cast<int>(rng.below(2));
            for (std::size_t c = 0; c < kLatentDim; ++c) {
                geom.user_points[u * kLatentDim + c] =
                    centers[cls][c] + kUserSpreadFactor * spreads[cls] * rng.next_gaussian();
            }
        }

        // an item is positive when it lies within a cutoff proportional to
        // its own class spread, so preferences track intra-class variation
        geom.threshold = kProximityFactor;
        const double cutoff[2] = {kProximityFactor * spread_major,
                                  kProximityFactor * spread_minor};

        std::vector<std::vector<std::uint32_t>> train(n_users), test(n_users);
        bool degenerate = false;
        for (std::size_t u = 0; u < n_users && !degenerate; ++u) {
            for (std::size_t i = 0; i < m; ++i) {
                double d2 = 0.0;
                for (std::size_t c = 0; c < kLatentDim; ++c) {
                    const double diff = geom.user_points[u * kLatentDim + c] -
                                        geom.item_points[i * kLatentDim + c];
                    d2 += diff * diff;
                }
                const double cut = cutoff[i < n_major ? 0 : 1];
                if (d2 <= cut * cut) {
                    train[u].push_back(static_cast<std::uint32_t>(i));
                }
            }
            degenerate = train[u].empty();
        }
        if (degenerate) continue;

        return {InteractionSet::from_lists(n_users, m, std::move(train), std::move(test)),
                std::move(geom)};
    }
    throw DataError("synthetic generator: no valid geometry after " +
                    std::to_string(kRetryCap) + " attempts");
}

Rq4Report run_rq4(std::span<const std::uint64_t> seeds, const Hyperparams& hp,
                  const Rq4Config& config) {
    Rq4Report report;
    const std::size_t ks[] = {config.k};
    for (std::uint64_t seed : seeds) {
        auto [full, geom] = generate_imbalanced_synthetic(
            config.n_users, config.n_major, config.n_minor, config.spread_major,
            config.spread_minor, Rng::mix(seed, 0xDA7AULL));
        const InteractionSet data = split_train_test(full, config.train_fraction, seed);

        Hyperparams run_hp = hp;
        run_hp.seed = seed;
        const SimlModel siml = train_siml(data, run_hp);
        const SimlModel cml = train_cml(data, run_hp);

        const auto ms = evaluate_embeddings(siml.user_factors, siml.item_factors, data, ks,
                                            hp.threads);
        const auto mc =
            evaluate_embeddings(cml.user_factors, cml.item_factors, data, ks, hp.threads);
        report.rows.push_back({seed, ms.per_k[0].ndcg, ms.per_k[0].hr, mc.per_k[0].ndcg,
                               mc.per_k[0].hr});
    }
    for (const auto& row : report.rows) {
        report.siml_mean_ndcg += row.siml_ndcg;
        report.siml_mean_hr += row.siml_hr;
        report.cml_mean_ndcg += row.cml_ndcg;
        report.cml_mean_hr += row.cml_hr;
    }
    const double denom = std::max<std::size_t>(report.rows.size(), 1);
    report.siml_mean_ndcg /= denom;
    report.siml_mean_hr /= denom;
    report.cml_mean_ndcg /= denom;
    report.cml_mean_hr /= denom;
    return report;
}

}  // namespace dsiml
