#include "dsiml/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

#include "dsiml/error.hpp"
#include "dsiml/rng.hpp"

namespace dsiml {

RetrievalIndex::RetrievalIndex(BinaryCodeMatrix item_codes)
    : items_(std::move(item_codes)) {}

RetrievalIndex::RetrievalIndex(BinaryCodeMatrix item_codes,
                               std::vector<std::vector<std::uint32_t>> excluded)
    : items_(std::move(item_codes)), excluded_(std::move(excluded)) {
    for (auto& list : excluded_) {
        std::sort(list.begin(), list.end());
        if (!list.empty() && list.back() >= items_.rows()) {
            throw DataError("excluded item id out of range");
        }
    }
}

bool RetrievalIndex::is_excluded(std::uint32_t user, std::uint32_t item) const {
    if (user >= excluded_.size()) return false;
    const auto& list = excluded_[user];
    return std::binary_search(list.begin(), list.end(), item);
}

std::vector<ScoredItem> top_k(const RetrievalIndex& index, const BinaryCodeMatrix& users,
                              std::size_t user_row, std::size_t k,
                              std::optional<std::uint32_t> exclude_user) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    const BinaryCodeMatrix& items = index.items();
    if (users.dim() != items.dim()) {
        throw std::invalid_argument("query dimension does not match index");
    }
    const auto query = users.row_words(user_row);
    const std::size_t words = items.words_per_row();

    // max-heap on (distance, id): the root is the current worst of the top k
    using Entry = std::pair<std::uint32_t, std::uint32_t>;
    std::priority_queue<Entry> heap;

    for (std::uint32_t i = 0; i < items.rows(); ++i) {
        if (exclude_user && index.is_excluded(*exclude_user, i)) continue;
        const std::uint64_t* w = items.row_words(i).data();
        std::uint32_t dist = 0;
        for (std::size_t j = 0; j < words; ++j) {
            dist += static_cast<std::uint32_t>(std::popcount(query[j] ^ w[j]));
        }
        if (heap.size() < k) {
            heap.emplace(dist, i);
        } else if (Entry{dist, i} < heap.top()) {
            heap.pop();
            heap.emplace(dist, i);
        }
    }

    std::vector<ScoredItem> out(heap.size());
    for (std::size_t pos = heap.size(); pos-- > 0;) {
        const auto [dist, id] = heap.top();
        heap.pop();
        out[pos] = {id, dist};
    }
    return out;
}

namespace {

struct Sink {
    std::uint64_t checksum = 0;
};

}  // namespace

BenchmarkResult benchmark_speedup(std::size_t m, std::size_t dim, std::size_t n_queries,
                                  std::uint64_t seed) {
    if (m < 1 || dim < 1 || n_queries < 1) {
        throw std::invalid_argument("benchmark sizes must be >= 1");
    }
    const BinaryCodeMatrix items = BinaryCodeMatrix::random(m, dim, Rng::mix(seed, 11));
    const BinaryCodeMatrix queries =
        BinaryCodeMatrix::random(n_queries, dim, Rng::mix(seed, 13));

    // the float scorer sees the same +-1 data in single precision
    std::vector<float> item_f(m * dim), query_f(n_queries * dim);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < dim; ++c) {
            item_f[r * dim + c] = static_cast<float>(items.get(r, c));
        }
    }
    for (std::size_t r = 0; r < n_queries; ++r) {
        for (std::size_t c = 0; c < dim; ++c) {
            query_f[r * dim + c] = static_cast<float>(queries.get(r, c));
        }
    }

    const std::size_t words = items.words_per_row();
    Sink sink;

    auto run_hamming = [&]() {
        for (std::size_t q = 0; q < n_queries; ++q) {
            const auto query = queries.row_words(q);
            std::uint32_t best_dist = ~0u;
            std::uint32_t best_id = 0;
            for (std::size_t i = 0; i < m; ++i) {
                const std::uint64_t* w = items.row_words(i).data();
                std::uint32_t dist = 0;
                for (std::size_t j = 0; j < words; ++j) {
                    dist += static_cast<std::uint32_t>(std::popcount(query[j] ^ w[j]));
                }
                if (dist < best_dist) {
                    best_dist = dist;
                    best_id = static_cast<std::uint32_t>(i);
                }
            }
            sink.checksum ^= (static_cast<std::uint64_t>(best_dist) << 32) | best_id;
        }
    };
    auto run_float = [&]() {
        for (std::size_t q = 0; q < n_queries; ++q) {
            const float* query = query_f.data() + q * dim;
            float best_score = -std::numeric_limits<float>::infinity();
            std::uint32_t best_id = 0;
            for (std::size_t i = 0; i < m; ++i) {
                const float* v = item_f.data() + i * dim;
                float score = 0.0f;
                for (std::size_t j = 0; j < dim; ++j) score += query[j] * v[j];
                if (score > best_score) {
                    best_score = score;
                    best_id = static_cast<std::uint32_t>(i);
                }
            }
            sink.checksum ^= static_cast<std::uint64_t>(best_id);
        }
    };

    using clock = std::chrono::steady_clock;
    auto time_of = [](auto&& fn) {
        const auto t0 = clock::now();
        fn();
        return std::chrono::duration<double>(clock::now() - t0).count();
    };

    // warm caches once per scorer, then measure
    run_hamming();
    const double hamming_s = time_of(run_hamming);
    run_float();
    const double float_s = time_of(run_float);

    volatile std::uint64_t keep_alive = sink.checksum;
    (void)keep_alive;

    BenchmarkResult r;
    r.m = m;
    r.dim = dim;
    r.queries = n_queries;
    r.hamming_qps = static_cast<double>(n_queries) / hamming_s;
    r.float_qps = static_cast<double>(n_queries) / float_s;
    r.speedup = r.hamming_qps / r.float_qps;
    return r;
}

}  // namespace dsiml
