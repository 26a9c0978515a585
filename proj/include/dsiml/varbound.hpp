#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dsiml/codes.hpp"
#include "dsiml/interactions.hpp"
#include "dsiml/objective.hpp"

namespace dsiml {

/// Curvature pi(xi) = (sigma(xi) - 1/2) / (2 xi) of the quadratic bound on
/// log(1 + e^t). Even, positive, decreasing in |xi|, -> 1/8 at 0.
double pi_curvature(double xi);

/// Quadratic upper bound pi(xi)(t^2 - xi^2) + (t - xi)/2 + log(1 + e^xi);
/// >= softplus(t) everywhere, tight at xi = +-t.
double jj_bound(double t, double xi);

/// Per-triplet caches of the statistics x and y; these double as the
/// variational parameters phi and eta (a parameter is "fresh" when its cache
/// entry equals the statistic at the current codes). Triplet index = tuple
/// index * n_neg + negative slot, aligned with the active batch.
struct VariationalState {
    VariationalState() = default;
    explicit VariationalState(std::size_t triplet_count)
        : x_cache(triplet_count, 0.0), y_cache(triplet_count, 0.0) {}

    std::vector<double> x_cache;
    std::vector<double> y_cache;

    std::size_t size() const noexcept { return x_cache.size(); }
};

/// phi := x at the current codes, for every triplet in the batch.
void update_phi(VariationalState& state, const BinaryCodeMatrix& users,
                const BinaryCodeMatrix& items, const TripletBatch& batch,
                const Hyperparams& hp);

/// eta := y at the current codes, for every triplet in the batch.
void update_eta(VariationalState& state, const BinaryCodeMatrix& users,
                const BinaryCodeMatrix& items, const TripletBatch& batch,
                const Hyperparams& hp);

/// Refreshes both caches for the listed triplet indices only.
void update_variational(VariationalState& state, const BinaryCodeMatrix& users,
                        const BinaryCodeMatrix& items, const TripletBatch& batch,
                        const Hyperparams& hp, std::span<const std::size_t> triplets);

/// Sum over triplets of jj_bound(x, phi) + lambda * jj_bound(y, eta) at the
/// current codes; >= dsiml_objective, equal right after both updates.
double bound_objective(const BinaryCodeMatrix& users, const BinaryCodeMatrix& items,
                       const VariationalState& state, const TripletBatch& batch,
                       const Hyperparams& hp);

}  // namespace dsiml
