#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dsiml {

/// One (N+1)-tuple of a user, one of their train positives, and n_neg
/// distinct sampled negatives.
struct TripletBatch {
    struct Tuple {
        std::uint32_t user;
        std::uint32_t positive;
        std::vector<std::uint32_t> negatives;
    };

    std::vector<Tuple> tuples;
    std::uint32_t n_neg = 0;

    std::size_t triplet_count() const noexcept { return tuples.size() * n_neg; }
};

/// Deduplicated implicit feedback with dense ids and a train/test tag per
/// positive. Immutable after construction; every user has at least one
/// train-tagged positive.
class InteractionSet {
public:
    static InteractionSet from_lists(std::size_t n_users, std::size_t n_items,
                                     std::vector<std::vector<std::uint32_t>> train,
                                     std::vector<std::vector<std::uint32_t>> test);

    std::size_t n_users() const noexcept { return train_.size(); }
    std::size_t n_items() const noexcept { return n_items_; }

    std::span<const std::uint32_t> train_items(std::size_t u) const { return train_[u]; }
    std::span<const std::uint32_t> test_items(std::size_t u) const { return test_[u]; }

    /// True when item i is a positive of user u in either split.
    bool is_positive(std::size_t u, std::uint32_t i) const;

    std::size_t degree(std::size_t u) const { return train_[u].size() + test_[u].size(); }
    std::size_t item_degree(std::size_t i) const { return item_degree_[i]; }

    std::size_t total_train() const noexcept { return total_train_; }
    std::size_t total_test() const noexcept { return total_test_; }

private:
    InteractionSet() = default;

    std::vector<std::vector<std::uint32_t>> train_;
    std::vector<std::vector<std::uint32_t>> test_;
    std::vector<std::size_t> item_degree_;
    std::size_t n_items_ = 0;
    std::size_t total_train_ = 0;
    std::size_t total_test_ = 0;
};

/// Reads one interaction per line: user_key<sep>item_key[<sep>rating][...].
/// Lines starting with '#' and empty lines are skipped; a missing rating
/// counts as 1.0; pairs with rating below the threshold are omitted; external
/// keys are mapped to dense ids in order of first appearance among accepted
/// pairs; duplicates keep a single positive. All positives are tagged train.
InteractionSet load_interactions(const std::string& path, char separator = '\t',
                                 double rating_threshold = 1.0);

/// Loads a train file plus an optional test file under one shared id space
/// (train file first). Test pairs whose user or item never occurs in the
/// train file are dropped; the count of dropped pairs is returned through
/// dropped_test when non-null.
InteractionSet load_interactions_pair(const std::string& train_path,
                                      const std::string& test_path, char separator,
                                      double rating_threshold,
                                      std::size_t* dropped_test = nullptr);

/// Iteratively removes users and items with fewer than min_count
/// interactions (and users left without a train positive) until a fixed
/// point, then re-densifies ids preserving relative order.
InteractionSet filter_min_degree(const InteractionSet& set, std::size_t min_count);

/// Per-user random split of all positives; floor(count*(1-train_fraction))
/// positives move to test, so small users keep everything in train.
InteractionSet split_train_test(const InteractionSet& set, double train_fraction,
                                std::uint64_t seed);

/// One tuple per (user, train positive) with n_neg distinct negatives drawn
/// uniformly from the items that are not positives of the user in either
/// split. Deterministic under the seed.
TripletBatch sample_npair_batch(const InteractionSet& set,
                                std::span<const std::uint32_t> user_ids,
                                std::uint32_t n_neg, std::uint64_t seed);

/// Writes "user<TAB>item<TAB>1" lines for the train and test splits.
void save_interactions(const InteractionSet& set, const std::string& train_path,
                       const std::string& test_path);

}  // namespace dsiml
