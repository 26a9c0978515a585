#include <stdexcept>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "dsiml/objective.hpp"
#include "dsiml/rng.hpp"

using namespace dsiml;

namespace {

std::vector<double> random_signs_d(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    for (auto& x : v) x = static_cast<double>(rng.next_sign());
    return v;
}

std::vector<double> random_vec(Rng& rng, std::size_t d, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.next_uniform(lo, hi);
    return v;
}

// elementwise evaluation of ||b-di||^2 - g^2 ||2dj - (b+di)||^2
double brute_argument(const std::vector<double>& b, const std::vector<double>& di,
                      const std::vector<double>& dj, double gamma) {
    double near = 0.0, far = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) {
        const double a = b[k] - di[k];
        const double c = 2.0 * dj[k] - (b[k] + di[k]);
        near += a * a;
        far += c * c;
    }
    return near - gamma * gamma * far;
}

BinaryCodeMatrix pack_rows(const std::vector<std::vector<double>>& rows) {
    BinaryCodeMatrix m(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t k = 0; k < rows[r].size(); ++k) {
            if (rows[r][k] > 0) m.set(r, k, 1);
        }
    }
    return m;
}

}  // namespace

TEST_CASE("hyperparameter validation") {
    Hyperparams hp;
    CHECK_NOTHROW(hp.validate());
    hp.gamma = 2.0;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
    hp.gamma = 1.7321;  // tan 60 deg boundary
    CHECK_NOTHROW(hp.validate());
    hp.gamma = 0.0;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
    hp.gamma = 1.0;
    hp.dim = 0;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);
    hp.dim = 20;
    hp.solver = BqpSolverKind::exhaustive;
    CHECK_THROWS_AS(hp.validate(), std::invalid_argument);  // 20 > 16
}

TEST_CASE("predicted rating endpoints and midpoint") {
    auto codes = pack_rows({{1, 1, 1, 1}, {1, 1, 1, 1}, {-1, -1, -1, -1}, {1, -1, 1, -1}});
    CHECK(predicted_rating(codes, 0, codes, 1) == doctest::Approx(1.0));
    CHECK(predicted_rating(codes, 0, codes, 2) == doctest::Approx(0.0));
    CHECK(predicted_rating(codes, 0, codes, 3) == doctest::Approx(0.5));
}

TEST_CASE("softplus values and bound property") {
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(std::abs(softplus(1000.0) - 1000.0) < 1e-9);
    CHECK(std::abs(softplus(-1000.0)) < 1e-9);
    Rng rng(1);
    for (int i = 0; i < 100000; ++i) {
        const double t = rng.next_uniform(-600.0, 600.0);
        const double s = softplus(t);
        CHECK(s >= std::fmax(0.0, t));
        CHECK(std::isfinite(s));
    }
}

TEST_CASE("scale hinge argument closed-form example") {
    // d=20, gamma=1, b = d_i, d_j = -b: (2-6)*20 - 2*2*20 + 4*(-20-20) = -320
    std::vector<std::vector<double>> rows(3, std::vector<double>(20, 1.0));
    for (auto& v : rows[2]) v = -1.0;
    auto codes = pack_rows(rows);
    CHECK(scale_hinge_argument(codes, 0, codes, 1, 2, 1.0) == doctest::Approx(-320.0));

    // identical user and positive item: hinge never activates
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        auto b = random_vec(rng, 8);
        auto dj = random_vec(rng, 8);
        const double arg = scale_hinge_argument(b, b, dj, 0.7);
        CHECK(arg <= 1e-12);
        CHECK(scale_hinge_loss(b, b, dj, 0.7) == 0.0);
    }
}

TEST_CASE("scale hinge argument matches the elementwise oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        const double gamma = rng.next_uniform(0.2, 1.7);
        auto b = random_signs_d(rng, 16);
        auto di = random_signs_d(rng, 16);
        auto dj = random_signs_d(rng, 16);
        const double oracle = brute_argument(b, di, dj, gamma);
        CHECK(scale_hinge_argument(b, di, dj, gamma) == doctest::Approx(oracle).epsilon(1e-12));

        auto packed = pack_rows({b, di, dj});
        CHECK(scale_hinge_argument(packed, 0, packed, 1, 2, gamma) ==
              doctest::Approx(oracle).epsilon(1e-12));
    }
    // continuous vectors too
    for (int trial = 0; trial < 200; ++trial) {
        const double gamma = rng.next_uniform(0.2, 1.7);
        auto b = random_vec(rng, 6);
        auto di = random_vec(rng, 6);
        auto dj = random_vec(rng, 6);
        CHECK(scale_hinge_argument(b, di, dj, gamma) ==
              doctest::Approx(brute_argument(b, di, dj, gamma)).epsilon(1e-10));
    }
}

TEST_CASE("scale hinge loss equals the triangle-geometry oracle") {
    Rng rng(4);
    for (int trial = 0; trial < 300; ++trial) {
        const double gamma = rng.next_uniform(0.2, 1.7);
        auto b = random_vec(rng, 5);
        auto di = random_vec(rng, 5);
        auto dj = random_vec(rng, 5);
        // midpoint o of the u-i chord; ||oi'|| = ||oi||, oj from the midpoint
        double oi2 = 0.0, oj2 = 0.0;
        for (std::size_t k = 0; k < b.size(); ++k) {
            const double o = 0.5 * (b[k] + di[k]);
            oi2 += (di[k] - o) * (di[k] - o);
            oj2 += (dj[k] - o) * (dj[k] - o);
        }
        const double oracle = std::fmax(0.0, oi2 - gamma * gamma * oj2);
        CHECK(scale_hinge_loss(b, di, dj, gamma) == doctest::Approx(oracle).epsilon(1e-9));
    }
}

TEST_CASE("scale hinge loss is 2-homogeneous under positive scaling") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const double gamma = rng.next_uniform(0.3, 1.5);
        auto b = random_vec(rng, 7);
        auto di = random_vec(rng, 7);
        auto dj = random_vec(rng, 7);
        const double base = scale_hinge_loss(b, di, dj, gamma);
        for (double c : {0.5, 2.0, 7.5}) {
            auto bs = b, dis = di, djs = dj;
            for (std::size_t k = 0; k < b.size(); ++k) {
                bs[k] *= c;
                dis[k] *= c;
                djs[k] *= c;
            }
            const double scaled = scale_hinge_loss(bs, dis, djs, gamma);
            CHECK(scaled == doctest::Approx(base * c * c).epsilon(1e-9));
            CHECK((scaled > 0.0) == (base > 0.0));  // activation is scale-invariant
        }
    }
}

TEST_CASE("triplet statistics closed-form example") {
    // d=20, gamma=1, b = d_i, d_j = -b: x = -1, y = -120
    std::vector<std::vector<double>> rows(3, std::vector<double>(20, 1.0));
    for (auto& v : rows[2]) v = -1.0;
    auto codes = pack_rows(rows);
    const auto s = triplet_statistics(codes, 0, codes, 1, 2, 1.0);
    CHECK(s.x == doctest::Approx(-1.0));
    CHECK(s.y == doctest::Approx(-120.0));
}

TEST_CASE("x vanishes when both items coincide") {
    Rng rng(6);
    auto b = random_signs_d(rng, 12);
    auto d = random_signs_d(rng, 12);
    const auto s = triplet_statistics(b, d, d, 0.9);
    CHECK(s.x == doctest::Approx(0.0));
}

TEST_CASE("y links back to the hinge expansion exactly") {
    Rng rng(7);
    for (double gamma : {0.5, 1.0, 1.5}) {
        for (int trial = 0; trial < 500; ++trial) {
            auto b = random_signs_d(rng, 20);
            auto di = random_signs_d(rng, 20);
            auto dj = random_signs_d(rng, 20);
            const auto s = triplet_statistics(b, di, dj, gamma);
            const double lhs = 2.0 * s.y + (2.0 - 6.0 * gamma * gamma) * 20.0;
            CHECK(lhs == doctest::Approx(brute_argument(b, di, dj, gamma)).epsilon(1e-12));
        }
    }
}

TEST_CASE("x equals the predicted-rating difference") {
    Rng rng(8);
    auto codes = BinaryCodeMatrix::random(10, 20, 99);
    for (int trial = 0; trial < 200; ++trial) {
        const auto u = rng.below(10), i = rng.below(10), j = rng.below(10);
        const auto s = triplet_statistics(codes, u, codes, i, j, 1.0);
        const double diff = predicted_rating(codes, u, codes, j) -
                            predicted_rating(codes, u, codes, i);
        CHECK(s.x == doctest::Approx(diff).epsilon(1e-12));
    }
}

TEST_CASE("dsiml objective composes the two losses") {
    auto users = BinaryCodeMatrix::random(3, 8, 1);
    auto items = BinaryCodeMatrix::random(6, 8, 2);
    Hyperparams hp;
    hp.dim = 8;
    hp.lambda = 0.7;

    TripletBatch empty;
    empty.n_neg = 1;
    CHECK(dsiml_objective(users, items, empty, hp) == 0.0);

    TripletBatch one;
    one.n_neg = 1;
    one.tuples.push_back({1, 2, {4}});
    const auto s = triplet_statistics(users, 1, items, 2, 4, hp.gamma);
    CHECK(dsiml_objective(users, items, one, hp) ==
          doctest::Approx(softplus(s.x) + hp.lambda * softplus(s.y)).epsilon(1e-15));
    CHECK(dsiml_objective(users, items, one, hp) > 0.0);

    Hyperparams no_scale = hp;
    no_scale.lambda = 0.0;
    CHECK(dsiml_objective(users, items, one, no_scale) ==
          doctest::Approx(softplus(s.x)).epsilon(1e-15));

    TripletBatch bad;
    bad.n_neg = 1;
    bad.tuples.push_back({1, 99, {4}});
    CHECK_THROWS_AS(dsiml_objective(users, items, bad, hp), std::out_of_range);
}

TEST_CASE("cml loss cases and oracle") {
    Rng rng(9);
    auto b = random_vec(rng, 6);
    auto d = random_vec(rng, 6);
    CHECK(cml_loss(b, d, d, 0.0) == 0.0);

    // boundary: far^2 - near^2 exactly m
    std::vector<double> u{0.0, 0.0}, di{1.0, 0.0}, dj{2.0, 0.0};
    // near = 1, far = 4, margin 3 puts the hinge exactly at zero
    CHECK(cml_loss(u, di, dj, 3.0) == doctest::Approx(0.0));

    for (int trial = 0; trial < 200; ++trial) {
        auto bu = random_vec(rng, 6);
        auto vi = random_vec(rng, 6);
        auto vj = random_vec(rng, 6);
        const double m = rng.next_uniform(0.0, 2.0);
        double near = 0.0, far = 0.0;
        for (std::size_t k = 0; k < bu.size(); ++k) {
            near += (bu[k] - vi[k]) * (bu[k] - vi[k]);
            far += (bu[k] - vj[k]) * (bu[k] - vj[k]);
        }
        CHECK(cml_loss(bu, vi, vj, m) ==
              doctest::Approx(std::fmax(0.0, near - far + m)).epsilon(1e-12));
    }
}

TEST_CASE("siml gradients match central finite differences") {
    Rng rng(10);
    const std::size_t n = 4, m = 7, d = 6;
    Hyperparams hp;
    hp.dim = d;
    hp.gamma = 0.8;
    hp.lambda = 1.3;

    auto users = EmbeddingMatrix::random_uniform(n, d, 31);
    auto items = EmbeddingMatrix::random_uniform(m, d, 32);
    TripletBatch batch;
    batch.n_neg = 2;
    for (int t = 0; t < 5; ++t) {
        const auto u = static_cast<std::uint32_t>(rng.below(n));
        const auto i = static_cast<std::uint32_t>(rng.below(m));
        auto j1 = static_cast<std::uint32_t>(rng.below(m));
        auto j2 = static_cast<std::uint32_t>(rng.below(m));
        batch.tuples.push_back({u, i, {j1, j2}});
    }
    auto [gu, gv] = siml_gradients(users, items, batch, hp);

    const double h = 1e-5;
    auto check_coord = [&](EmbeddingMatrix& mat, const EmbeddingMatrix& grad,
                           std::size_t r, std::size_t c) {
        const double saved = mat.row(r)[c];
        mat.row(r)[c] = saved + h;
        const double up = siml_objective(users, items, batch, hp);
        mat.row(r)[c] = saved - h;
        const double down = siml_objective(users, items, batch, hp);
        mat.row(r)[c] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = grad.row(r)[c];
        if (std::fabs(numeric) < 1e-12 && std::fabs(analytic) < 1e-12) return;
        CHECK(std::fabs(analytic - numeric) <=
              1e-4 * std::fmax(1e-6, std::fabs(numeric)));
    };
    for (const auto& t : batch.tuples) {
        for (std::size_t c = 0; c < d; ++c) {
            check_coord(users, gu, t.user, c);
            check_coord(items, gv, t.positive, c);
            check_coord(items, gv, t.negatives[0], c);
        }
    }
}

TEST_CASE("gradients vanish where both softplus terms saturate") {
    // user equal to the positive, negative antipodal: x and y strongly negative
    const std::size_t d = 8;
    Hyperparams hp;
    hp.dim = d;
    EmbeddingMatrix users(1, d), items(2, d);
    for (std::size_t k = 0; k < d; ++k) {
        users.row(0)[k] = 10.0;
        items.row(0)[k] = 10.0;
        items.row(1)[k] = -10.0;
    }
    TripletBatch batch;
    batch.n_neg = 1;
    batch.tuples.push_back({0, 0, {1}});
    auto [gu, gv] = siml_gradients(users, items, batch, hp);
    for (std::size_t k = 0; k < d; ++k) {
        CHECK(std::fabs(gu.row(0)[k]) < 1e-8);
        CHECK(std::fabs(gv.row(0)[k]) < 1e-8);
        CHECK(std::fabs(gv.row(1)[k]) < 1e-8);
    }
}

TEST_CASE("the lambda-weighted gradient term is linear in lambda") {
    auto users = EmbeddingMatrix::random_uniform(3, 5, 41);
    auto items = EmbeddingMatrix::random_uniform(5, 5, 42);
    TripletBatch batch;
    batch.n_neg = 1;
    batch.tuples.push_back({0, 1, {3}});
    batch.tuples.push_back({2, 0, {4}});

    Hyperparams hp;
    hp.dim = 5;
    auto grad_at = [&](double lambda) {
        Hyperparams h = hp;
        h.lambda = lambda;
        return siml_gradients(users, items, batch, h);
    };
    auto [g0u, g0v] = grad_at(0.0);
    auto [g1u, g1v] = grad_at(1.0);
    auto [g2u, g2v] = grad_at(2.0);
    for (std::size_t idx = 0; idx < g0u.values().size(); ++idx) {
        const double lhs = g2u.values()[idx] - g0u.values()[idx];
        const double rhs = 2.0 * (g1u.values()[idx] - g0u.values()[idx]);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
    for (std::size_t idx = 0; idx < g0v.values().size(); ++idx) {
        const double lhs = g2v.values()[idx] - g0v.values()[idx];
        const double rhs = 2.0 * (g1v.values()[idx] - g0v.values()[idx]);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
}
