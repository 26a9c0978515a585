#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "dsiml/codes.hpp"
#include "dsiml/interactions.hpp"

namespace dsiml {

/// tan(60 deg) up to the tolerance used when validating the angle margin.
inline constexpr double kGammaMax = 1.7321;

enum class BqpSolverKind { automatic, exhaustive, flip_descent };

struct Hyperparams {
    std::uint32_t dim = 20;
    double gamma = 1.0;          // scale-invariant margin, tan(beta)
    double lambda = 1.0;         // weight of the scale loss vs the pairwise loss
    double cml_margin = 4.0;     // fixed-margin baseline only
    std::uint32_t n_neg = 5;
    double learning_rate = 0.05;
    std::uint32_t epochs = 50;
    std::uint32_t batch_users = 16;
    std::uint32_t bqp_restarts = 8;
    std::uint32_t max_outer_iters = 30;
    double tol = 1e-4;           // relative bound decrease that counts as converged
    bool clip_rows = true;       // clip embedding rows at norm sqrt(dim)
    bool resample_negatives = true;
    BqpSolverKind solver = BqpSolverKind::automatic;
    std::uint32_t threads = 1;
    std::uint64_t seed = 42;

    /// Throws std::invalid_argument on out-of-range settings.
    void validate() const;
};

/// Overflow-safe log(1 + e^t).
double softplus(double t);

/// Overflow-safe sigmoid.
double logistic(double t);

/// r_hat = 1/2 + b^T d / (2 dim), in [0, 1].
double predicted_rating(const BinaryCodeMatrix& users, std::size_t u,
                        const BinaryCodeMatrix& items, std::size_t i);

/// ||b_u - d_i||^2 - gamma^2 ||2 d_j - (b_u + d_i)||^2, via the inner-product
/// expansion. The code overload reduces to
/// (2 - 6 g^2) d - 2 (1 + g^2) b_u.d_i + 4 g^2 (b_u.d_j + d_i.d_j).
double scale_hinge_argument(std::span<const double> b_u, std::span<const double> d_i,
                            std::span<const double> d_j, double gamma);
double scale_hinge_argument(const BinaryCodeMatrix& users, std::size_t u,
                            const BinaryCodeMatrix& items, std::size_t i, std::size_t j,
                            double gamma);

/// max(0, argument / 4); the quarter maps the expanded form back onto the
/// ||oi'||^2 - gamma^2 ||oj||^2 triangle construction.
double scale_hinge_loss(std::span<const double> b_u, std::span<const double> d_i,
                        std::span<const double> d_j, double gamma);
double scale_hinge_loss(const BinaryCodeMatrix& users, std::size_t u,
                        const BinaryCodeMatrix& items, std::size_t i, std::size_t j,
                        double gamma);

struct TripletStats {
    double x;  // (b_u.d_j - b_u.d_i) / (2 dim) = r_hat_uj - r_hat_ui
    double y;  // 2 g^2 (b_u.d_j + d_i.d_j) - (1 + g^2) b_u.d_i
};

TripletStats triplet_statistics(const BinaryCodeMatrix& users, std::size_t u,
                                const BinaryCodeMatrix& items, std::size_t i,
                                std::size_t j, double gamma);
TripletStats triplet_statistics(std::span<const double> b_u, std::span<const double> d_i,
                                std::span<const double> d_j, double gamma);

inline double pairwise_loss(double x) { return softplus(x); }
inline double scale_loss(double y) { return softplus(y); }

/// Sum over batch triplets of softplus(x) + lambda * softplus(y).
double dsiml_objective(const BinaryCodeMatrix& users, const BinaryCodeMatrix& items,
                       const TripletBatch& batch, const Hyperparams& hp);

/// Continuous analog of dsiml_objective on real embeddings.
double siml_objective(const EmbeddingMatrix& users, const EmbeddingMatrix& items,
                      const TripletBatch& batch, const Hyperparams& hp);

/// Fixed-margin triplet hinge [||b_u - d_i||^2 - ||b_u - d_j||^2 + m]_+.
double cml_loss(std::span<const double> b_u, std::span<const double> d_i,
                std::span<const double> d_j, double margin);

double cml_objective(const EmbeddingMatrix& users, const EmbeddingMatrix& items,
                     const TripletBatch& batch, const Hyperparams& hp);

/// Adds the analytic gradients of the continuous objective over the batch
/// into grad_users / grad_items (rows not touched by the batch are left
/// alone, so callers zero what they need).
void accumulate_siml_gradients(const EmbeddingMatrix& users, const EmbeddingMatrix& items,
                               const TripletBatch& batch, const Hyperparams& hp,
                               EmbeddingMatrix& grad_users, EmbeddingMatrix& grad_items);

void accumulate_cml_gradients(const EmbeddingMatrix& users, const EmbeddingMatrix& items,
                              const TripletBatch& batch, const Hyperparams& hp,
                              EmbeddingMatrix& grad_users, EmbeddingMatrix& grad_items);

std::pair<EmbeddingMatrix, EmbeddingMatrix> siml_gradients(const EmbeddingMatrix& users,
                                                           const EmbeddingMatrix& items,
                                                           const TripletBatch& batch,
                                                           const Hyperparams& hp);

}  // namespace dsiml
