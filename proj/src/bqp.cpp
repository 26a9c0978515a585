#include "dsiml/bqp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "dsiml/error.hpp"
#include "dsiml/rng.hpp"

namespace dsiml {

namespace {

constexpr double kTieTol = 1e-12;
constexpr double kImproveTol = 1e-12;

// One bound term jj(t(b), xi) with affine statistic t(b) = g.b + s and
// weight w contributes w*pi(xi)*g g^T to A, w*(2 pi(xi) s + 1/2) g to c and
// w*jj(s, xi) to the constant.
void add_bound_term(BqpInstance& inst, std::span<const double> g, double s, double xi,
                    double w) {
    const double p = pi_curvature(xi);
    const double wq = w * p;
    const double wl = w * (2.0 * p * s + 0.5);
    const std::size_t d = inst.dim;
    for (std::size_t k = 0; k < d; ++k) {
        // fill the upper triangle and mirror so A stays bitwise symmetric
        for (std::size_t l = k; l < d; ++l) {
            const double v = wq * (g[k] * g[l]);
            inst.a[k * d + l] += v;
            if (l != k) inst.a[l * d + k] = inst.a[k * d + l];
        }
        inst.c[k] += wl * g[k];
    }
    inst.constant += w * jj_bound(s, xi);
}

void check_state(const VariationalState& state, const TripletBatch& batch) {
    if (state.size() != batch.triplet_count()) {
        throw std::invalid_argument("variational state misaligned with batch");
    }
}

}  // namespace

double BqpInstance::evaluate(std::span<const int> b) const {
    if (b.size() != dim) throw std::invalid_argument("candidate dimension mismatch");
    double q = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
        double row = 0.0;
        const double* ak = a.data() + k * dim;
        for (std::size_t l = 0; l < dim; ++l) row += ak[l] * static_cast<double>(b[l]);
        q += static_cast<double>(b[k]) * (row + c[k]);
    }
    return q;
}

void BqpInstance::dump_text(std::ostream& out) const {
    out << std::setprecision(17);
    out << dim << '\n';
    for (std::size_t k = 0; k < dim; ++k) {
        for (std::size_t l = 0; l < dim; ++l) {
            out << a[k * dim + l] << (l + 1 == dim ? '\n' : ' ');
        }
    }
    for (std::size_t k = 0; k < dim; ++k) out << c[k] << (k + 1 == dim ? '\n' : ' ');
    out << constant << '\n';
}

BqpInstance BqpInstance::parse_text(std::istream& in) {
    BqpInstance inst;
    if (!(in >> inst.dim)) throw DataError("bqp dump: missing dimension");
    inst.a.assign(inst.dim * inst.dim, 0.0);
    inst.c.assign(inst.dim, 0.0);
    for (double& v : inst.a) {
        if (!(in >> v)) throw DataError("bqp dump: truncated matrix");
    }
    for (double& v : inst.c) {
        if (!(in >> v)) throw DataError("bqp dump: truncated linear term");
    }
    if (!(in >> inst.constant)) throw DataError("bqp dump: missing constant");
    return inst;
}

BatchAdjacency BatchAdjacency::build(const TripletBatch& batch, std::size_t n_users,
                                     std::size_t n_items) {
    BatchAdjacency adj;
    adj.user_triplets.resize(n_users);
    adj.item_triplets.resize(n_items);
    std::size_t idx = 0;
    for (const auto& t : batch.tuples) {
        for (std::uint32_t j : t.negatives) {
            adj.user_triplets[t.user].push_back(idx);
            adj.item_triplets[t.positive].push_back(idx);
            adj.item_triplets[j].push_back(idx);
            ++idx;
        }
    }
    return adj;
}

BqpInstance assemble_user_subproblem(std::uint32_t u, const BinaryCodeMatrix& users,
                                     const BinaryCodeMatrix& items,
                                     const VariationalState& state,
                                     const TripletBatch& batch, const Hyperparams& hp,
                                     std::span<const std::size_t> triplets) {
    check_state(state, batch);
    if (triplets.empty()) {
        throw DataError("user " + std::to_string(u) + " has no triplets in this batch");
    }
    const std::size_t d = users.dim();
    const double g2 = hp.gamma * hp.gamma;
    const double inv2d = 1.0 / (2.0 * static_cast<double>(d));

    BqpInstance inst;
    inst.dim = d;
    inst.a.assign(d * d, 0.0);
    inst.c.assign(d, 0.0);
    inst.owner = BqpInstance::Owner::user;
    inst.owner_id = u;

    std::vector<double> g(d);
    for (std::size_t idx : triplets) {
        const auto& t = batch.tuples[idx / batch.n_neg];
        if (t.user != u) throw std::invalid_argument("triplet does not belong to the user");
        const std::uint32_t j = t.negatives[idx % batch.n_neg];
        const auto di = items.row_signs(t.positive);
        const auto dj = items.row_signs(j);

        // x(b) = (d_j - d_i).b / 2d, no constant part
        for (std::size_t k = 0; k < d; ++k) {
            g[k] = static_cast<double>(dj[k] - di[k]) * inv2d;
        }
        add_bound_term(inst, g, 0.0, state.x_cache[idx], 1.0);

        // y(b) = (2 g^2 d_j - (1+g^2) d_i).b + 2 g^2 d_i.d_j
        for (std::size_t k = 0; k < d; ++k) {
            g[k] = 2.0 * g2 * static_cast<double>(dj[k]) -
                   (1.0 + g2) * static_cast<double>(di[k]);
        }
        const double s = 2.0 * g2 * static_cast<double>(inner_product(items, t.positive, items, j));
        add_bound_term(inst, g, s, state.y_cache[idx], hp.lambda);
    }
    return inst;
}

BqpInstance assemble_user_subproblem(std::uint32_t u, const BinaryCodeMatrix& users,
                                     const BinaryCodeMatrix& items,
                                     const VariationalState& state,
                                     const TripletBatch& batch, const Hyperparams& hp) {
    std::vector<std::size_t> triplets;
    std::size_t idx = 0;
    for (const auto& t : batch.tuples) {
        for (std::size_t s = 0; s < t.negatives.size(); ++s, ++idx) {
            if (t.user == u) triplets.push_back(idx);
        }
    }
    return assemble_user_subproblem(u, users, items, state, batch, hp, triplets);
}

BqpInstance assemble_item_subproblem(std::uint32_t i, const BinaryCodeMatrix& users,
                                     const BinaryCodeMatrix& items,
                                     const VariationalState& state,
                                     const TripletBatch& batch, const Hyperparams& hp,
                                     std::span<const std::size_t> triplets) {
    check_state(state, batch);
    if (triplets.empty()) {
        throw DataError("item " + std::to_string(i) + " has no triplets in this batch");
    }
    const std::size_t d = items.dim();
    const double g2 = hp.gamma * hp.gamma;
    const double inv2d = 1.0 / (2.0 * static_cast<double>(d));

    BqpInstance inst;
    inst.dim = d;
    inst.a.assign(d * d, 0.0);
    inst.c.assign(d, 0.0);
    inst.owner = BqpInstance::Owner::item;
    inst.owner_id = i;

    std::vector<double> g(d);
    for (std::size_t idx : triplets) {
        const auto& t = batch.tuples[idx / batch.n_neg];
        const std::uint32_t j = t.negatives[idx % batch.n_neg];
        const auto bu = users.row_signs(t.user);
        const double xi_x = state.x_cache[idx];
        const double xi_y = state.y_cache[idx];

        if (t.positive == i) {
            // positive role: e = d_i varies against fixed b_u and d_j
            const auto dj = items.row_signs(j);
            const double bu_dj = static_cast<double>(inner_product(users, t.user, items, j));

            // x(e) = -(b_u.e)/2d + b_u.d_j/2d
            for (std::size_t k = 0; k < d; ++k) g[k] = -static_cast<double>(bu[k]) * inv2d;
            add_bound_term(inst, g, bu_dj * inv2d, xi_x, 1.0);

            // y(e) = (2 g^2 d_j - (1+g^2) b_u).e + 2 g^2 b_u.d_j
            for (std::size_t k = 0; k < d; ++k) {
                g[k] = 2.0 * g2 * static_cast<double>(dj[k]) -
                       (1.0 + g2) * static_cast<double>(bu[k]);
            }
            add_bound_term(inst, g, 2.0 * g2 * bu_dj, xi_y, hp.lambda);
        } else {
            if (j != i) throw std::invalid_argument("triplet does not involve the item");
            // negative role: e = d_j varies against fixed b_u and d_i
            const auto di = items.row_signs(t.positive);
            const double bu_di =
                static_cast<double>(inner_product(users, t.user, items, t.positive));

            // x(e) = (b_u.e)/2d - b_u.d_i/2d
            for (std::size_t k = 0; k < d; ++k) g[k] = static_cast<double>(bu[k]) * inv2d;
            add_bound_term(inst, g, -bu_di * inv2d, xi_x, 1.0);

            // y(e) = 2 g^2 (b_u + d_i).e - (1+g^2) b_u.d_i
            for (std::size_t k = 0; k < d; ++k) {
                g[k] = 2.0 * g2 * static_cast<double>(bu[k] + di[k]);
            }
            add_bound_term(inst, g, -(1.0 + g2) * bu_di, xi_y, hp.lambda);
        }
    }
    return inst;
}

BqpInstance assemble_item_subproblem(std::uint32_t i, const BinaryCodeMatrix& users,
                                     const BinaryCodeMatrix& items,
                                     const VariationalState& state,
                                     const TripletBatch& batch, const Hyperparams& hp) {
    std::vector<std::size_t> triplets;
    std::size_t idx = 0;
    for (const auto& t : batch.tuples) {
        for (std::uint32_t j : t.negatives) {
            if (t.positive == i || j == i) triplets.push_back(idx);
            ++idx;
        }
    }
    return assemble_item_subproblem(i, users, items, state, batch, hp, triplets);
}

namespace {

// Maintains s_k = sum_{l != k} A_kl b_l so a single flip costs O(dim).
struct FlipFields {
    std::vector<double> s;

    void init(const BqpInstance& inst, std::span<const int> b) {
        const std::size_t d = inst.dim;
        s.assign(d, 0.0);
        for (std::size_t k = 0; k < d; ++k) {
            double acc = 0.0;
            const double* row = inst.a.data() + k * d;
            for (std::size_t l = 0; l < d; ++l) {
                if (l != k) acc += row[l] * static_cast<double>(b[l]);
            }
            s[k] = acc;
        }
    }

    double flip_delta(const BqpInstance& inst, std::span<const int> b, std::size_t k) const {
        return -2.0 * static_cast<double>(b[k]) * (2.0 * s[k] + inst.c[k]);
    }

    void apply_flip(const BqpInstance& inst, std::vector<int>& b, std::size_t k) {
        const std::size_t d = inst.dim;
        const double change = -2.0 * static_cast<double>(b[k]);
        for (std::size_t l = 0; l < d; ++l) {
            if (l != k) s[l] += inst.a[l * d + k] * change;
        }
        b[k] = -b[k];
    }
};

bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

BqpSolution solve_exhaustive(const BqpInstance& inst) {
    if (inst.dim > 16) {
        throw std::invalid_argument("exhaustive solver refuses dim > 16 (got " +
                                    std::to_string(inst.dim) + ")");
    }
    const std::size_t d = inst.dim;
    std::vector<int> b(d, -1);
    FlipFields fields;
    fields.init(inst, b);
    double running = inst.evaluate(b);

    std::vector<int> best = b;
    double best_value = running;

    const std::uint64_t total = std::uint64_t{1} << d;
    for (std::uint64_t g = 1; g < total; ++g) {
        // reflected Gray code: step g flips bit ctz(g)
        const auto k = static_cast<std::size_t>(std::countr_zero(g));
        running += fields.flip_delta(inst, b, k);
        fields.apply_flip(inst, b, k);
        if (running < best_value + kTieTol) {
            const double exact = inst.evaluate(b);  // resync against drift
            running = exact;
            if (exact < best_value - kTieTol) {
                best = b;
                best_value = exact;
            } else if (std::fabs(exact - best_value) <= kTieTol && lex_less(b, best)) {
                best = b;
                best_value = std::fmin(best_value, exact);
            }
        }
    }
    return {std::move(best), best_value};
}

BqpSolution solve_flip_descent(const BqpInstance& inst, std::span<const int> warm_start,
                               std::uint32_t restarts, std::uint64_t seed) {
    if (warm_start.size() != inst.dim) {
        throw std::invalid_argument("warm start dimension mismatch");
    }
    if (restarts < 1) restarts = 1;
    Rng rng(seed);

    BqpSolution best;
    bool have_best = false;

    std::vector<int> b(warm_start.begin(), warm_start.end());
    FlipFields fields;
    for (std::uint32_t trajectory = 0; trajectory < restarts; ++trajectory) {
        if (trajectory > 0) {
            for (int& v : b) v = rng.next_sign();
        }
        fields.init(inst, b);
        for (;;) {
            std::size_t best_k = inst.dim;
            double best_delta = -kImproveTol;
            for (std::size_t k = 0; k < inst.dim; ++k) {
                const double delta = fields.flip_delta(inst, b, k);
                if (delta < best_delta) {
                    best_delta = delta;
                    best_k = k;
                }
            }
            if (best_k == inst.dim) break;
            fields.apply_flip(inst, b, best_k);
        }
        const double value = inst.evaluate(b);
        if (!have_best || value < best.value) {
            best.signs = b;
            best.value = value;
            have_best = true;
        }
    }
    return best;
}

}  // namespace dsiml
