#include "dsiml/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dsiml {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

void check_dims(std::span<const double> a, std::span<const double> b,
                std::span<const double> c) {
    if (a.size() != b.size() || a.size() != c.size()) {
        throw std::invalid_argument("vector dimension mismatch");
    }
}

void check_index(std::size_t row, std::size_t rows, const char* what) {
    if (row >= rows) {
        throw std::out_of_range(std::string(what) + " id " + std::to_string(row) +
                                " out of range (" + std::to_string(rows) + ")");
    }
}

}  // namespace

void Hyperparams::validate() const {
    if (dim < 1) throw std::invalid_argument("dim must be >= 1");
    if (!(gamma > 0.0) || gamma > kGammaMax) {
        throw std::invalid_argument("gamma must lie in (0, " + std::to_string(kGammaMax) +
                                    "] (tan 60 deg); got " + std::to_string(gamma));
    }
    if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
    if (cml_margin < 0.0) throw std::invalid_argument("cml_margin must be >= 0");
    if (n_neg < 1) throw std::invalid_argument("n_neg must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (batch_users < 1) throw std::invalid_argument("batch_users must be >= 1");
    if (bqp_restarts < 1) throw std::invalid_argument("bqp_restarts must be >= 1");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
    if (solver == BqpSolverKind::exhaustive && dim > 16) {
        throw std::invalid_argument("exhaustive solver is capped at dim 16");
    }
}

double softplus(double t) {
    // max(t, 0) + log1p(e^{-|t|}) never overflows
    return std::fmax(t, 0.0) + std::log1p(std::exp(-std::fabs(t)));
}

double logistic(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

double predicted_rating(const BinaryCodeMatrix& users, std::size_t u,
                        const BinaryCodeMatrix& items, std::size_t i) {
    const double d = static_cast<double>(users.dim());
    return 0.5 + static_cast<double>(inner_product(users, u, items, i)) / (2.0 * d);
}

double scale_hinge_argument(std::span<const double> b_u, std::span<const double> d_i,
                            std::span<const double> d_j, double gamma) {
    check_dims(b_u, d_i, d_j);
    const double g2 = gamma * gamma;
    const double nb = dot(b_u, b_u), ni = dot(d_i, d_i), nj = dot(d_j, d_j);
    const double ui = dot(b_u, d_i), uj = dot(b_u, d_j), ij = dot(d_i, d_j);
    const double near_term = nb + ni - 2.0 * ui;
    const double far_term = 4.0 * nj + nb + ni + 2.0 * ui - 4.0 * uj - 4.0 * ij;
    return near_term - g2 * far_term;
}

double scale_hinge_argument(const BinaryCodeMatrix& users, std::size_t u,
                            const BinaryCodeMatrix& items, std::size_t i, std::size_t j,
                            double gamma) {
    const double g2 = gamma * gamma;
    const double d = static_cast<double>(users.dim());
    const int ui = inner_product(users, u, items, i);
    const int uj = inner_product(users, u, items, j);
    const int ij = inner_product(items, i, items, j);
    return (2.0 - 6.0 * g2) * d - 2.0 * (1.0 + g2) * ui + 4.0 * g2 * (uj + ij);
}

double scale_hinge_loss(std::span<const double> b_u, std::span<const double> d_i,
                        std::span<const double> d_j, double gamma) {
    return std::fmax(0.0, scale_hinge_argument(b_u, d_i, d_j, gamma) / 4.0);
}

double scale_hinge_loss(const BinaryCodeMatrix& users, std::size_t u,
                        const BinaryCodeMatrix& items, std::size_t i, std::size_t j,
                        double gamma) {
    return std::fmax(0.0, scale_hinge_argument(users, u, items, i, j, gamma) / 4.0);
}

TripletStats triplet_statistics(const BinaryCodeMatrix& users, std::size_t u,
                                const BinaryCodeMatrix& items, std::size_t i,
                                std::size_t j, double gamma) {
    const double g2 = gamma * gamma;
    const double d = static_cast<double>(users.dim());
    const int ui = inner_product(users, u, items, i);
    const int uj = inner_product(users, u, items, j);
    const int ij = inner_product(items, i, items, j);
    return {static_cast<double>(uj - ui) / (2.0 * d),
            2.0 * g2 * static_cast<double>(uj + ij) - (1.0 + g2) * static_cast<double>(ui)};
}

TripletStats triplet_statistics(std::span<const double> b_u, std::span<const double> d_i,
                                std::span<const double> d_j, double gamma) {
    check_dims(b_u, d_i, d_j);
    const double g2 = gamma * gamma;
    const double d = static_cast<double>(b_u.size());
    const double ui = dot(b_u, d_i), uj = dot(b_u, d_j), ij = dot(d_i, d_j);
    return {(uj - ui) / (2.0 * d), 2.0 * g2 * (uj + ij) - (1.0 + g2) * ui};
}

double dsiml_objective(const BinaryCodeMatrix& users, const BinaryCodeMatrix& items,
                       const TripletBatch& batch, const Hyperparams& hp) {
    double total = 0.0;
    for (const auto& t : batch.tuples) {
        check_index(t.user, users.rows(), "user");
        check_index(t.positive, items.rows(), "item");
        for (std::uint32_t j : t.negatives) {
            check_index(j, items.rows(), "item");
            const auto s = triplet_statistics(users, t.user, items, t.positive, j, hp.gamma);
            total += pairwise_loss(s.x) + hp.lambda * scale_loss(s.y);
        }
    }
    return total;
}

double siml_objective(const EmbeddingMatrix& users, const EmbeddingMatrix& items,
                      const TripletBatch& batch, const Hyperparams& hp) {
    double total = 0.0;
    for (const auto& t : batch.tuples) {
        check_index(t.user, users.rows(), "user");
        check_index(t.positive, items.rows(), "item");
        const auto bu = users.row(t.user);
        const auto di = items.row(t.positive);
        for (std::uint32_t j : t.negatives) {
            check_index(j, items.rows(), "item");
            const auto s = triplet_statistics(bu, di, items.row(j), hp.gamma);
            total += pairwise_loss(s.x) + hp.lambda * scale_loss(s.y);
        }
    }
    return total;
}

double cml_loss(std::span<const double> b_u, std::span<const double> d_i,
                std::span<const double> d_j, double margin) {
    check_dims(b_u, d_i, d_j);
    double near = 0.0, far = 0.0;
    for (std::size_t k = 0; k < b_u.size(); ++k) {
        const double a = b_u[k] - d_i[k];
        const double b = b_u[k] - d_j[k];
        near += a * a;
        far += b * b;
    }
    return std::fmax(0.0, near - far + margin);
}

double cml_objective(const EmbeddingMatrix& users, const EmbeddingMatrix& items,
                     const TripletBatch& batch, const Hyperparams& hp) {
    double total = 0.0;
    for (const auto& t : batch.tuples) {
        const auto bu = users.row(t.user);
        const auto di = items.row(t.positive);
        for (std::uint32_t j : t.negatives) {
            total += cml_loss(bu, di, items.row(j), hp.cml_margin);
        }
    }
    return total;
}

void accumulate_siml_gradients(const EmbeddingMatrix& users, const EmbeddingMatrix& items,
                               const TripletBatch& batch, const Hyperparams& hp,
                               EmbeddingMatrix& grad_users, EmbeddingMatrix& grad_items) {
    const double g2 = hp.gamma * hp.gamma;
    const double d = static_cast<double>(users.dim());
    const double inv2d = 1.0 / (2.0 * d);
    for (const auto& t : batch.tuples) {
        const auto bu = users.row(t.user);
        const auto di = items.row(t.positive);
        auto gu = grad_users.row(t.user);
        auto gi = grad_items.row(t.positive);
        for (std::uint32_t j : t.negatives) {
            const auto dj = items.row(j);
            auto gj = grad_items.row(j);
            const auto s = triplet_statistics(bu, di, dj, hp.gamma);
            const double wx = logistic(s.x);
            const double wy = hp.lambda * logistic(s.y);
            for (std::size_t k = 0; k < bu.size(); ++k) {
                // x = (b.dj - b.di) / 2d, y = 2g^2 (b.dj + di.dj) - (1+g^2) b.di
                gu[k] += wx * (dj[k] - di[k]) * inv2d +
                         wy * (2.0 * g2 * dj[k] - (1.0 + g2) * di[k]);
                gi[k] += wx * (-bu[k]) * inv2d +
                         wy * (2.0 * g2 * dj[k] - (1.0 + g2) * bu[k]);
                gj[k] += wx * bu[k] * inv2d + wy * 2.0 * g2 * (bu[k] + di[k]);
            }
        }
    }
}

void accumulate_cml_gradients(const EmbeddingMatrix& users, const EmbeddingMatrix& items,
                              const TripletBatch& batch, const Hyperparams& hp,
                              EmbeddingMatrix& grad_users, EmbeddingMatrix& grad_items) {
    for (const auto& t : batch.tuples) {
        const auto bu = users.row(t.user);
        const auto di = items.row(t.positive);
        auto gu = grad_users.row(t.user);
        auto gi = grad_items.row(t.positive);
        for (std::uint32_t j : t.negatives) {
            const auto dj = items.row(j);
            if (cml_loss(bu, di, dj, hp.cml_margin) <= 0.0) continue;
            auto gj = grad_items.row(j);
            for (std::size_t k = 0; k < bu.size(); ++k) {
                gu[k] += 2.0 * (dj[k] - di[k]);
                gi[k] += -2.0 * (bu[k] - di[k]);
                gj[k] += 2.0 * (bu[k] - dj[k]);
            }
        }
    }
}

std::pair<EmbeddingMatrix, EmbeddingMatrix> siml_gradients(const EmbeddingMatrix& users,
                                                           const EmbeddingMatrix& items,
                                                           const TripletBatch& batch,
                                                           const Hyperparams& hp) {
    EmbeddingMatrix gu(users.rows(), users.dim());
    EmbeddingMatrix gv(items.rows(), items.dim());
    accumulate_siml_gradients(users, items, batch, hp, gu, gv);
    return {std::move(gu), std::move(gv)};
}

}  // namespace dsiml
