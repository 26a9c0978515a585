#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dsiml/codes.hpp"
#include "dsiml/interactions.hpp"
#include "dsiml/objective.hpp"

namespace dsiml {

struct RankingMetrics {
    struct AtK {
        std::size_t k;
        double ndcg;
        double hr;
    };

    std::vector<AtK> per_k;
    std::size_t users_evaluated = 0;
};

/// Binary-relevance NDCG with 1/log2(rank+1) gains (ranks 1-based) and the
/// per-user ideal ranking as normalizer; 0 when positives is empty.
double ndcg_at_k(std::span<const std::uint32_t> ranked,
                 std::span<const std::uint32_t> positives_sorted, std::size_t k);

/// |top-k intersect positives| / |positives|; 0 when positives is empty.
double hr_at_k(std::span<const std::uint32_t> ranked,
               std::span<const std::uint32_t> positives_sorted, std::size_t k);

/// Ranks all items per user (train positives excluded), averages NDCG@k and
/// HR@k over users that have at least one test positive. Codes rank by
/// Hamming distance, embeddings by descending dot product; ties break toward
/// smaller item ids in both cases.
RankingMetrics evaluate_codes(const BinaryCodeMatrix& users, const BinaryCodeMatrix& items,
                              const InteractionSet& data, std::span<const std::size_t> ks,
                              std::uint32_t threads = 1);
RankingMetrics evaluate_embeddings(const EmbeddingMatrix& users,
                                   const EmbeddingMatrix& items, const InteractionSet& data,
                                   std::span<const std::size_t> ks,
                                   std::uint32_t threads = 1);

/// Latent 2-d geometry of a generated dataset, kept for diagnostics.
struct SyntheticGeometry {
    std::size_t latent_dim = 0;
    std::size_t n_major = 0;
    std::size_t n_minor = 0;
    double threshold = 0.0;                // proximity factor: cutoff = factor * spread
    std::vector<double> user_points;       // n_users x latent_dim
    std::vector<double> item_points;       // (n_major + n_minor) x latent_dim

    bool is_minor_item(std::size_t i) const { return i >= n_major; }
};

/// Plants two item clusters of unequal size and spread plus user points in a
/// latent plane; an item is positive for a user when it lies within a cutoff
/// proportional to its class spread, so user tolerance tracks the class's
/// intra-class variation. Regenerates internally (up to a retry cap) when
/// some user ends up with no positive.
std::pair<InteractionSet, SyntheticGeometry> generate_imbalanced_synthetic(
    std::size_t n_users, std::size_t n_major, std::size_t n_minor, double spread_major,
    double spread_minor, std::uint64_t seed);

struct Rq4Config {
    std::size_t n_users = 200;
    std::size_t n_major = 400;
    std::size_t n_minor = 40;
    double spread_major = 3.0;
    double spread_minor = 0.5;
    double train_fraction = 0.8;
    std::size_t k = 10;
};

struct Rq4Row {
    std::uint64_t seed;
    double siml_ndcg;
    double siml_hr;
    double cml_ndcg;
    double cml_hr;
};

struct Rq4Report {
    std::vector<Rq4Row> rows;
    double siml_mean_ndcg = 0.0;
    double siml_mean_hr = 0.0;
    double cml_mean_ndcg = 0.0;
    double cml_mean_hr = 0.0;
};

/// Per seed: generate the synthetic dataset, split, train the continuous
/// scale-invariant model and the fixed-margin baseline under the same
/// budget and batches, and report paired NDCG@k / HR@k.
Rq4Report run_rq4(std::span<const std::uint64_t> seeds, const Hyperparams& hp,
                  const Rq4Config& config = {});

}  // namespace dsiml
