#include "dsiml/varbound.hpp"

#include <cmath>
#include <stdexcept>

namespace dsiml {

namespace {

void check_alignment(const VariationalState& state, const TripletBatch& batch) {
    if (state.size() != batch.triplet_count()) {
        throw std::invalid_argument("variational state holds " + std::to_string(state.size()) +
                                    " triplets, batch has " +
                                    std::to_string(batch.triplet_count()));
    }
}

}  // namespace

double pi_curvature(double xi) {
    const double a = std::fabs(xi);
    if (a < 1e-4) {
        // series of tanh(xi/2)/(4 xi); the closed form is 0/0 at zero
        const double x2 = xi * xi;
        return 0.125 - x2 / 96.0 + (x2 * x2) / 960.0;
    }
    return (logistic(a) - 0.5) / (2.0 * a);
}

double jj_bound(double t, double xi) {
    return pi_curvature(xi) * (t * t - xi * xi) + 0.5 * (t - xi) + softplus(xi);
}

void update_phi(VariationalState& state, const BinaryCodeMatrix& users,
                const BinaryCodeMatrix& items, const TripletBatch& batch,
                const Hyperparams& hp) {
    check_alignment(state, batch);
    std::size_t idx = 0;
    for (const auto& t : batch.tuples) {
        for (std::uint32_t j : t.negatives) {
            state.x_cache[idx++] =
                triplet_statistics(users, t.user, items, t.positive, j, hp.gamma).x;
        }
    }
}

void update_eta(VariationalState& state, const BinaryCodeMatrix& users,
                const BinaryCodeMatrix& items, const TripletBatch& batch,
                const Hyperparams& hp) {
    check_alignment(state, batch);
    std::size_t idx = 0;
    for (const auto& t : batch.tuples) {
        for (std::uint32_t j : t.negatives) {
            state.y_cache[idx++] =
                triplet_statistics(users, t.user, items, t.positive, j, hp.gamma).y;
        }
    }
}

void update_variational(VariationalState& state, const BinaryCodeMatrix& users,
                        const BinaryCodeMatrix& items, const TripletBatch& batch,
                        const Hyperparams& hp, std::span<const std::size_t> triplets) {
    check_alignment(state, batch);
    for (std::size_t idx : triplets) {
        const auto& t = batch.tuples[idx / batch.n_neg];
        const std::uint32_t j = t.negatives[idx % batch.n_neg];
        const auto s = triplet_statistics(users, t.user, items, t.positive, j, hp.gamma);
        state.x_cache[idx] = s.x;
        state.y_cache[idx] = s.y;
    }
}

double bound_objective(const BinaryCodeMatrix& users, const BinaryCodeMatrix& items,
                       const VariationalState& state, const TripletBatch& batch,
                       const Hyperparams& hp) {
    check_alignment(state, batch);
    double total = 0.0;
    std::size_t idx = 0;
    for (const auto& t : batch.tuples) {
        for (std::uint32_t j : t.negatives) {
            const auto s = triplet_statistics(users, t.user, items, t.positive, j, hp.gamma);
            total += jj_bound(s.x, state.x_cache[idx]) +
                     hp.lambda * jj_bound(s.y, state.y_cache[idx]);
            ++idx;
        }
    }
    return total;
}

}  // namespace dsiml
