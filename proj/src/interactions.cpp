#include "dsiml/interactions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "dsiml/error.hpp"
#include "dsiml/rng.hpp"

namespace dsiml {

namespace {

bool sorted_contains(std::span<const std::uint32_t> v, std::uint32_t x) {
    return std::binary_search(v.begin(), v.end(), x);
}

std::vector<std::size_t> item_degrees(const std::vector<std::vector<std::uint32_t>>& train,
                                      const std::vector<std::vector<std::uint32_t>>& test,
                                      std::size_t n_items) {
    std::vector<std::size_t> deg(n_items, 0);
    for (const auto& lists : {&train, &test}) {
        for (const auto& items : *lists) {
            for (std::uint32_t i : items) ++deg[i];
        }
    }
    return deg;
}

}  // namespace

InteractionSet InteractionSet::from_lists(std::size_t n_users, std::size_t n_items,
                                          std::vector<std::vector<std::uint32_t>> train,
                                          std::vector<std::vector<std::uint32_t>> test) {
    if (train.size() != n_users || test.size() != n_users) {
        throw DataError("from_lists: list sizes disagree with n_users");
    }
    for (std::size_t u = 0; u < n_users; ++u) {
        std::sort(train[u].begin(), train[u].end());
        std::sort(test[u].begin(), test[u].end());
        if (train[u].empty()) {
            throw DataError("user " + std::to_string(u) + " has no train positive");
        }
        std::vector<std::uint32_t> merged;
        merged.reserve(train[u].size() + test[u].size());
        std::merge(train[u].begin(), train[u].end(), test[u].begin(), test[u].end(),
                   std::back_inserter(merged));
        if (std::adjacent_find(merged.begin(), merged.end()) != merged.end()) {
            throw DataError("duplicate positive for user " + std::to_string(u));
        }
        if (!merged.empty() && merged.back() >= n_items) {
            throw DataError("item id out of range for user " + std::to_string(u));
        }
    }
    InteractionSet s;
    s.item_degree_ = item_degrees(train, test, n_items);
    s.train_ = std::move(train);
    s.test_ = std::move(test);
    s.n_items_ = n_items;
    for (const auto& v : s.train_) s.total_train_ += v.size();
    for (const auto& v : s.test_) s.total_test_ += v.size();
    return s;
}

bool InteractionSet::is_positive(std::size_t u, std::uint32_t i) const {
    return sorted_contains(train_[u], i) || sorted_contains(test_[u], i);
}

namespace {

struct RawPairs {
    std::unordered_map<std::string, std::uint32_t> user_ids;
    std::unordered_map<std::string, std::uint32_t> item_ids;
    std::unordered_set<std::uint64_t> seen;
    std::vector<std::vector<std::uint32_t>> per_user;

    std::uint32_t intern(std::unordered_map<std::string, std::uint32_t>& map,
                         const std::string& key) {
        auto [it, inserted] = map.emplace(key, static_cast<std::uint32_t>(map.size()));
        return it->second;
    }
};

// Appends the accepted pairs of one file into raw. When grow_ids is false,
// pairs referencing unknown users or items are counted in *dropped instead.
void parse_file(RawPairs& raw, const std::string& path, char separator, double threshold,
                bool grow_ids, std::size_t* dropped) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;

        std::vector<std::string> fields;
        std::size_t start = 0;
        while (fields.size() < 3) {
            const std::size_t pos = line.find(separator, start);
            if (pos == std::string::npos) {
                fields.push_back(line.substr(start));
                break;
            }
            fields.push_back(line.substr(start, pos - start));
            start = pos + 1;
        }
        if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
            throw ParseError("expected at least user and item fields", line_no);
        }
        double rating = 1.0;
        if (fields.size() >= 3) {
            try {
                std::size_t used = 0;
                rating = std::stod(fields[2], &used);
                if (used != fields[2].size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw ParseError("bad rating field '" + fields[2] + "'", line_no);
            }
        }
        if (rating < threshold) continue;

        std::uint32_t u, i;
        if (grow_ids) {
            u = raw.intern(raw.user_ids, fields[0]);
            i = raw.intern(raw.item_ids, fields[1]);
        } else {
            const auto uit = raw.user_ids.find(fields[0]);
            const auto iit = raw.item_ids.find(fields[1]);
            if (uit == raw.user_ids.end() || iit == raw.item_ids.end()) {
                if (dropped) ++*dropped;
                continue;
            }
            u = uit->second;
            i = iit->second;
        }
        const std::uint64_t key = (static_cast<std::uint64_t>(u) << 32) | i;
        if (!raw.seen.insert(key).second) continue;
        if (raw.per_user.size() <= u) raw.per_user.resize(u + 1);
        raw.per_user[u].push_back(i);
    }
}

}  // namespace

InteractionSet load_interactions(const std::string& path, char separator,
                                 double rating_threshold) {
    std::size_t dropped = 0;
    return load_interactions_pair(path, "", separator, rating_threshold, &dropped);
}

InteractionSet load_interactions_pair(const std::string& train_path,
                                      const std::string& test_path, char separator,
                                      double rating_threshold, std::size_t* dropped_test) {
    RawPairs raw;
    parse_file(raw, train_path, separator, rating_threshold, true, nullptr);
    if (raw.seen.empty()) throw DataError("no interactions accepted from " + train_path);
    const std::size_t n_users = raw.user_ids.size();
    const std::size_t n_items = raw.item_ids.size();
    raw.per_user.resize(n_users);
    std::vector<std::vector<std::uint32_t>> train = std::move(raw.per_user);

    std::vector<std::vector<std::uint32_t>> test(n_users);
    if (!test_path.empty()) {
        raw.per_user.assign(n_users, {});
        std::size_t dropped = 0;
        parse_file(raw, test_path, separator, rating_threshold, false, &dropped);
        raw.per_user.resize(n_users);
        test = std::move(raw.per_user);
        if (dropped_test) *dropped_test = dropped;
    } else if (dropped_test) {
        *dropped_test = 0;
    }
    return InteractionSet::from_lists(n_users, n_items, std::move(train), std::move(test));
}

InteractionSet filter_min_degree(const InteractionSet& set, std::size_t min_count) {
    if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");

    const std::size_t n = set.n_users();
    const std::size_t m = set.n_items();
    std::vector<char> user_alive(n, 1), item_alive(m, 1);

    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t u = 0; u < n; ++u) {
            if (!user_alive[u]) continue;
            std::size_t deg = 0, train_deg = 0;
            for (std::uint32_t i : set.train_items(u)) {
                if (item_alive[i]) ++deg, ++train_deg;
            }
            for (std::uint32_t i : set.test_items(u)) {
                if (item_alive[i]) ++deg;
            }
            if (deg < min_count || train_deg == 0) {
                user_alive[u] = 0;
                changed = true;
            }
        }
        std::vector<std::size_t> item_deg(m, 0);
        for (std::size_t u = 0; u < n; ++u) {
            if (!user_alive[u]) continue;
            for (std::uint32_t i : set.train_items(u)) ++item_deg[i];
            for (std::uint32_t i : set.test_items(u)) ++item_deg[i];
        }
        for (std::size_t i = 0; i < m; ++i) {
            if (item_alive[i] && item_deg[i] < min_count) {
                item_alive[i] = 0;
                changed = true;
            }
        }
    }

    std::vector<std::uint32_t> item_map(m, 0);
    std::uint32_t next_item = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (item_alive[i]) item_map[i] = next_item++;
    }
    if (next_item == 0) throw DataError("degree filter removed all data");

    std::vector<std::vector<std::uint32_t>> train, test;
    for (std::size_t u = 0; u < n; ++u) {
        if (!user_alive[u]) continue;
        std::vector<std::uint32_t> tr, te;
        for (std::uint32_t i : set.train_items(u)) {
            if (item_alive[i]) tr.push_back(item_map[i]);
        }
        for (std::uint32_t i : set.test_items(u)) {
            if (item_alive[i]) te.push_back(item_map[i]);
        }
        train.push_back(std::move(tr));
        test.push_back(std::move(te));
    }
    if (train.empty()) throw DataError("degree filter removed all data");
    const std::size_t n_surviving = train.size();
    return InteractionSet::from_lists(n_surviving, next_item, std::move(train),
                                      std::move(test));
}

InteractionSet split_train_test(const InteractionSet& set, double train_fraction,
                                std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("train_fraction must be in (0, 1)");
    }
    const std::size_t n = set.n_users();
    std::vector<std::vector<std::uint32_t>> train(n), test(n);
    for (std::size_t u = 0; u < n; ++u) {
        std::vector<std::uint32_t> pool(set.train_items(u).begin(), set.train_items(u).end());
        pool.insert(pool.end(), set.test_items(u).begin(), set.test_items(u).end());
        std::sort(pool.begin(), pool.end());

        Rng rng(Rng::mix(seed, 0x53504C49u ^ u));
        rng.shuffle(std::span<std::uint32_t>(pool));

        // +1e-9 so exact fractions are not lost to representation error
        auto n_test = static_cast<std::size_t>(
            std::floor(static_cast<double>(pool.size()) * (1.0 - train_fraction) + 1e-9));
        if (n_test >= pool.size()) n_test = pool.size() - 1;

        test[u].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_test));
        train[u].assign(pool.begin() + static_cast<std::ptrdiff_t>(n_test), pool.end());
    }
    return InteractionSet::from_lists(n, set.n_items(), std::move(train), std::move(test));
}

TripletBatch sample_npair_batch(const InteractionSet& set,
                                std::span<const std::uint32_t> user_ids,
                                std::uint32_t n_neg, std::uint64_t seed) {
    if (n_neg < 1) throw std::invalid_argument("n_neg must be >= 1");
    TripletBatch batch;
    batch.n_neg = n_neg;
    Rng rng(seed);

    for (std::uint32_t u : user_ids) {
        if (u >= set.n_users()) throw std::out_of_range("user id out of range");
        // eligible negatives: every item that is not a positive in either split
        std::vector<std::uint32_t> pool;
        pool.reserve(set.n_items() - set.degree(u));
        const auto tr = set.train_items(u);
        const auto te = set.test_items(u);
        std::size_t a = 0, b = 0;
        for (std::uint32_t i = 0; i < set.n_items(); ++i) {
            while (a < tr.size() && tr[a] < i) ++a;
            while (b < te.size() && te[b] < i) ++b;
            const bool pos = (a < tr.size() && tr[a] == i) || (b < te.size() && te[b] == i);
            if (!pos) pool.push_back(i);
        }
        if (pool.size() < n_neg) {
            throw DataError("user " + std::to_string(u) + " has only " +
                            std::to_string(pool.size()) + " eligible negatives, need " +
                            std::to_string(n_neg));
        }
        std::vector<std::size_t> swaps(n_neg);
        for (std::uint32_t positive : tr) {
            TripletBatch::Tuple t;
            t.user = u;
            t.positive = positive;
            t.negatives.reserve(n_neg);
            // partial Fisher-Yates, undone afterwards so the pool can be reused
            for (std::uint32_t k = 0; k < n_neg; ++k) {
                const std::size_t j = k + static_cast<std::size_t>(rng.below(pool.size() - k));
                swaps[k] = j;
                std::swap(pool[k], pool[j]);
                t.negatives.push_back(pool[k]);
            }
            for (std::uint32_t k = n_neg; k-- > 0;) {
                std::swap(pool[k], pool[swaps[k]]);
            }
            // canonical order; the draw is a set, not a sequence
            std::sort(t.negatives.begin(), t.negatives.end());
            batch.tuples.push_back(std::move(t));
        }
    }
    return batch;
}

void save_interactions(const InteractionSet& set, const std::string& train_path,
                       const std::string& test_path) {
    auto write = [&set](const std::string& path, bool train) {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw DataError("cannot write " + path);
        for (std::size_t u = 0; u < set.n_users(); ++u) {
            const auto items = train ? set.train_items(u) : set.test_items(u);
            for (std::uint32_t i : items) {
                out << u << '\t' << i << '\t' << 1 << '\n';
            }
        }
        if (!out) throw DataError("write failed: " + path);
    };
    write(train_path, true);
    write(test_path, false);
}

}  // namespace dsiml
