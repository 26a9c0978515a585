#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "dsiml/codes.hpp"
#include "dsiml/interactions.hpp"
#include "dsiml/objective.hpp"
#include "dsiml/varbound.hpp"

namespace dsiml {

/// One entity's quadratic subproblem min b^T A b + c^T b over {+-1}^dim.
/// Q(b) + constant reproduces the entity's share of the variational bound
/// exactly, for every candidate b.
struct BqpInstance {
    enum class Owner { user, item };

    std::size_t dim = 0;
    std::vector<double> a;  // dim x dim, symmetric, row-major
    std::vector<double> c;  // dim
    double constant = 0.0;
    Owner owner = Owner::user;
    std::uint32_t owner_id = 0;

    double evaluate(std::span<const int> b) const;

    /// Debug dump: "dim", dim rows of A, c, constant; one line each.
    void dump_text(std::ostream& out) const;
    static BqpInstance parse_text(std::istream& in);
};

/// Triplet index lists per user and per item for one batch, so per-entity
/// assembly does not rescan the whole batch.
struct BatchAdjacency {
    std::vector<std::vector<std::size_t>> user_triplets;
    std::vector<std::vector<std::size_t>> item_triplets;  // both roles mixed

    static BatchAdjacency build(const TripletBatch& batch, std::size_t n_users,
                                std::size_t n_items);
};

/// Builds user u's subproblem from the triplets of the batch that belong to
/// u, with the variational parameters taken from the state caches. Callers
/// should refresh the state at the current codes first so the bound is tight
/// at the warm start. Throws DataError when u has no triplets.
BqpInstance assemble_user_subproblem(std::uint32_t u, const BinaryCodeMatrix& users,
                                     const BinaryCodeMatrix& items,
                                     const VariationalState& state,
                                     const TripletBatch& batch, const Hyperparams& hp);
BqpInstance assemble_user_subproblem(std::uint32_t u, const BinaryCodeMatrix& users,
                                     const BinaryCodeMatrix& items,
                                     const VariationalState& state,
                                     const TripletBatch& batch, const Hyperparams& hp,
                                     std::span<const std::size_t> triplets);

/// Item i's subproblem; an item contributes in its positive role and in its
/// negative role, both included.
BqpInstance assemble_item_subproblem(std::uint32_t i, const BinaryCodeMatrix& users,
                                     const BinaryCodeMatrix& items,
                                     const VariationalState& state,
                                     const TripletBatch& batch, const Hyperparams& hp);
BqpInstance assemble_item_subproblem(std::uint32_t i, const BinaryCodeMatrix& users,
                                     const BinaryCodeMatrix& items,
                                     const VariationalState& state,
                                     const TripletBatch& batch, const Hyperparams& hp,
                                     std::span<const std::size_t> triplets);

struct BqpSolution {
    std::vector<int> signs;
    double value = 0.0;
};

/// Global minimizer over all 2^dim candidates (dim <= 16). Ties within 1e-12
/// resolve to the lexicographically smallest vector (-1 before +1).
BqpSolution solve_exhaustive(const BqpInstance& inst);

/// Best-improvement single-bit flip descent; the first trajectory starts at
/// warm_start, the remaining restarts-1 at seeded random codes, so the
/// returned value never exceeds Q(warm_start).
BqpSolution solve_flip_descent(const BqpInstance& inst, std::span<const int> warm_start,
                               std::uint32_t restarts, std::uint64_t seed);

}  // namespace dsiml
