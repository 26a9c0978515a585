#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include "dsiml/bqp.hpp"
#include "dsiml/error.hpp"
#include "dsiml/eval.hpp"
#include "dsiml/retrieval.hpp"
#include "dsiml/trainer.hpp"
#include "dsiml/varbound.hpp"

namespace py = pybind11;
using namespace dsiml;

namespace {

EmbeddingMatrix embedding_from_array(py::array_t<double, py::array::c_style> arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
    EmbeddingMatrix m(static_cast<std::size_t>(arr.shape(0)),
                      static_cast<std::size_t>(arr.shape(1)));
    std::memcpy(m.values().data(), arr.data(), sizeof(double) * m.values().size());
    return m;
}

py::array_t<double> embedding_to_array(const EmbeddingMatrix& m) {
    py::array_t<double> arr({m.rows(), m.dim()});
    std::memcpy(arr.mutable_data(), m.values().data(), sizeof(double) * m.values().size());
    return arr;
}

py::array_t<std::int8_t> codes_to_array(const BinaryCodeMatrix& m) {
    py::array_t<std::int8_t> arr({m.rows(), m.dim()});
    auto* out = arr.mutable_data();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t k = 0; k < m.dim(); ++k) {
            out[r * m.dim() + k] = static_cast<std::int8_t>(m.get(r, k));
        }
    }
    return arr;
}

BinaryCodeMatrix codes_from_array(py::array_t<std::int8_t, py::array::c_style> arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-d array of +-1");
    BinaryCodeMatrix m(static_cast<std::size_t>(arr.shape(0)),
                       static_cast<std::size_t>(arr.shape(1)));
    const auto* in = arr.data();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t k = 0; k < m.dim(); ++k) {
            m.set(r, k, in[r * m.dim() + k] > 0 ? 1 : -1);
        }
    }
    return m;
}

BqpInstance instance_from_arrays(py::array_t<double, py::array::c_style> a,
                                 py::array_t<double, py::array::c_style> c,
                                 double constant) {
    if (a.ndim() != 2 || a.shape(0) != a.shape(1)) {
        throw std::invalid_argument("A must be square");
    }
    if (c.ndim() != 1 || c.shape(0) != a.shape(0)) {
        throw std::invalid_argument("c must match A");
    }
    BqpInstance inst;
    inst.dim = static_cast<std::size_t>(a.shape(0));
    inst.a.assign(a.data(), a.data() + inst.dim * inst.dim);
    inst.c.assign(c.data(), c.data() + inst.dim);
    inst.constant = constant;
    return inst;
}

}  // namespace

PYBIND11_MODULE(_dsiml, m) {
    m.doc() = "discrete scale-invariant metric learning core";

    py::register_exception<DataError>(m, "DataError");
    py::register_exception<NumericalError>(m, "NumericalError");

    py::class_<Hyperparams>(m, "Hyperparams")
        .def(py::init<>())
        .def_readwrite("dim", &Hyperparams::dim)
        .def_readwrite("gamma", &Hyperparams::gamma)
        .def_readwrite("lambda_", &Hyperparams::lambda)
        .def_readwrite("cml_margin", &Hyperparams::cml_margin)
        .def_readwrite("n_neg", &Hyperparams::n_neg)
        .def_readwrite("learning_rate", &Hyperparams::learning_rate)
        .def_readwrite("epochs", &Hyperparams::epochs)
        .def_readwrite("batch_users", &Hyperparams::batch_users)
        .def_readwrite("bqp_restarts", &Hyperparams::bqp_restarts)
        .def_readwrite("max_outer_iters", &Hyperparams::max_outer_iters)
        .def_readwrite("tol", &Hyperparams::tol)
        .def_readwrite("clip_rows", &Hyperparams::clip_rows)
        .def_readwrite("resample_negatives", &Hyperparams::resample_negatives)
        .def_readwrite("threads", &Hyperparams::threads)
        .def_readwrite("seed", &Hyperparams::seed)
        .def("validate", &Hyperparams::validate);

    py::class_<TripletBatch::Tuple>(m, "Tuple")
        .def_readonly("user", &TripletBatch::Tuple::user)
        .def_readonly("positive", &TripletBatch::Tuple::positive)
        .def_readonly("negatives", &TripletBatch::Tuple::negatives);

    py::class_<TripletBatch>(m, "TripletBatch")
        .def_readonly("tuples", &TripletBatch::tuples)
        .def_readonly("n_neg", &TripletBatch::n_neg)
        .def("triplet_count", &TripletBatch::triplet_count);

    py::class_<InteractionSet>(m, "InteractionSet")
        .def_static(
            "from_lists",
            [](std::size_t n_users, std::size_t n_items,
               std::vector<std::vector<std::uint32_t>> train,
               std::vector<std::vector<std::uint32_t>> test) {
                return InteractionSet::from_lists(n_users, n_items, std::move(train),
                                                  std::move(test));
            },
            py::arg("n_users"), py::arg("n_items"), py::arg("train"), py::arg("test"))
        .def_property_readonly("n_users", &InteractionSet::n_users)
        .def_property_readonly("n_items", &InteractionSet::n_items)
        .def("train_items",
             [](const InteractionSet& s, std::size_t u) {
                 return std::vector<std::uint32_t>(s.train_items(u).begin(),
                                                   s.train_items(u).end());
             })
        .def("test_items",
             [](const InteractionSet& s, std::size_t u) {
                 return std::vector<std::uint32_t>(s.test_items(u).begin(),
                                                   s.test_items(u).end());
             })
        .def("is_positive", &InteractionSet::is_positive)
        .def("total_train", &InteractionSet::total_train)
        .def("total_test", &InteractionSet::total_test);

    m.def("load_interactions", &load_interactions, py::arg("path"),
          py::arg("separator") = '\t', py::arg("rating_threshold") = 1.0);
    m.def("filter_min_degree", &filter_min_degree);
    m.def("split_train_test", &split_train_test);
    m.def(
        "sample_npair_batch",
        [](const InteractionSet& s, std::vector<std::uint32_t> users, std::uint32_t n_neg,
           std::uint64_t seed) { return sample_npair_batch(s, users, n_neg, seed); },
        py::arg("set"), py::arg("user_ids"), py::arg("n_neg"), py::arg("seed"));

    py::class_<EmbeddingMatrix>(m, "EmbeddingMatrix")
        .def(py::init(&embedding_from_array))
        .def_static("random_uniform", &EmbeddingMatrix::random_uniform, py::arg("rows"),
                    py::arg("dim"), py::arg("seed"), py::arg("lo") = -1.0,
                    py::arg("hi") = 1.0)
        .def_property_readonly("rows", &EmbeddingMatrix::rows)
        .def_property_readonly("dim", &EmbeddingMatrix::dim)
        .def("to_numpy", &embedding_to_array)
        .def("checksum", &EmbeddingMatrix::checksum);

    py::class_<BinaryCodeMatrix>(m, "BinaryCodeMatrix")
        .def(py::init(&codes_from_array))
        .def_static("random", &BinaryCodeMatrix::random)
        .def_property_readonly("rows", &BinaryCodeMatrix::rows)
        .def_property_readonly("dim", &BinaryCodeMatrix::dim)
        .def("get", &BinaryCodeMatrix::get)
        .def("to_numpy", &codes_to_array)
        .def("checksum", &BinaryCodeMatrix::checksum);

    m.def("inner_product", &inner_product);
    m.def("hamming_distance", &hamming_distance);
    m.def("sign_quantize", &sign_quantize);
    m.def("save_codes", &save_codes);
    m.def("load_codes", &load_codes);
    m.def("save_embeddings", &save_embeddings);
    m.def("load_embeddings", &load_embeddings);

    m.def("softplus", &softplus);
    m.def("logistic", &logistic);
    m.def("pairwise_loss", &pairwise_loss);
    m.def("scale_loss", &scale_loss);
    m.def("predicted_rating", &predicted_rating);
    m.def("pi_curvature", &pi_curvature);
    m.def("jj_bound", &jj_bound);
    m.def(
        "triplet_statistics",
        [](const BinaryCodeMatrix& users, std::size_t u, const BinaryCodeMatrix& items,
           std::size_t i, std::size_t j, double gamma) {
            const auto s = triplet_statistics(users, u, items, i, j, gamma);
            return py::make_tuple(s.x, s.y);
        },
        py::arg("users"), py::arg("u"), py::arg("items"), py::arg("i"), py::arg("j"),
        py::arg("gamma"));
    m.def("dsiml_objective", &dsiml_objective);
    m.def("siml_objective", &siml_objective);

    py::class_<BqpInstance>(m, "BqpInstance")
        .def(py::init(&instance_from_arrays), py::arg("a"), py::arg("c"),
             py::arg("constant") = 0.0)
        .def_readonly("dim", &BqpInstance::dim)
        .def_readonly("constant", &BqpInstance::constant)
        .def("evaluate", [](const BqpInstance& inst, std::vector<int> b) {
            return inst.evaluate(b);
        });

    py::class_<BqpSolution>(m, "BqpSolution")
        .def_readonly("signs", &BqpSolution::signs)
        .def_readonly("value", &BqpSolution::value);

    m.def("solve_exhaustive", &solve_exhaustive);
    m.def(
        "solve_flip_descent",
        [](const BqpInstance& inst, std::vector<int> warm, std::uint32_t restarts,
           std::uint64_t seed) { return solve_flip_descent(inst, warm, restarts, seed); },
        py::arg("inst"), py::arg("warm_start"), py::arg("restarts") = 8,
        py::arg("seed") = 0);

    py::class_<TrainRecord>(m, "TrainRecord")
        .def_readonly("iteration", &TrainRecord::iteration)
        .def_readonly("phase", &TrainRecord::phase)
        .def_readonly("bound", &TrainRecord::bound)
        .def_readonly("objective", &TrainRecord::objective)
        .def_readonly("seconds", &TrainRecord::seconds);

    py::class_<TrainReport>(m, "TrainReport")
        .def_readonly("records", &TrainReport::records)
        .def_readonly("converged", &TrainReport::converged)
        .def_readonly("iterations", &TrainReport::iterations)
        .def_readonly("user_checksum", &TrainReport::user_checksum)
        .def_readonly("item_checksum", &TrainReport::item_checksum);

    py::class_<SimlModel>(m, "SimlModel")
        .def_readonly("user_factors", &SimlModel::user_factors)
        .def_readonly("item_factors", &SimlModel::item_factors)
        .def_readonly("report", &SimlModel::report);

    py::class_<DsimlModel>(m, "DsimlModel")
        .def_readonly("user_codes", &DsimlModel::user_codes)
        .def_readonly("item_codes", &DsimlModel::item_codes)
        .def_readonly("report", &DsimlModel::report);

    m.def("train_siml", &train_siml, py::call_guard<py::gil_scoped_release>());
    m.def("train_cml", &train_cml, py::call_guard<py::gil_scoped_release>());
    m.def("train_dsiml",
          py::overload_cast<const InteractionSet&, const Hyperparams&>(&train_dsiml),
          py::call_guard<py::gil_scoped_release>());
    m.def("train_dsiml_from",
          py::overload_cast<const InteractionSet&, const Hyperparams&,
                            const EmbeddingMatrix&, const EmbeddingMatrix&>(&train_dsiml),
          py::call_guard<py::gil_scoped_release>());

    py::class_<RetrievalIndex>(m, "RetrievalIndex")
        .def(py::init<BinaryCodeMatrix>())
        .def(py::init<BinaryCodeMatrix, std::vector<std::vector<std::uint32_t>>>())
        .def_property_readonly("n_items", &RetrievalIndex::n_items);

    m.def(
        "top_k",
        [](const RetrievalIndex& index, const BinaryCodeMatrix& users, std::size_t u,
           std::size_t k, std::optional<std::uint32_t> exclude_user) {
            const auto scored = top_k(index, users, u, k, exclude_user);
            std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
            out.reserve(scored.size());
            for (const auto& s : scored) out.emplace_back(s.item, s.distance);
            return out;
        },
        py::arg("index"), py::arg("users"), py::arg("user_row"), py::arg("k"),
        py::arg("exclude_user") = std::nullopt);

    py::class_<BenchmarkResult>(m, "BenchmarkResult")
        .def_readonly("m", &BenchmarkResult::m)
        .def_readonly("dim", &BenchmarkResult::dim)
        .def_readonly("hamming_qps", &BenchmarkResult::hamming_qps)
        .def_readonly("float_qps", &BenchmarkResult::float_qps)
        .def_readonly("speedup", &BenchmarkResult::speedup);
    m.def("benchmark_speedup", &benchmark_speedup, py::call_guard<py::gil_scoped_release>());

    m.def("ndcg_at_k", [](std::vector<std::uint32_t> ranked,
                          std::vector<std::uint32_t> positives, std::size_t k) {
        std::sort(positives.begin(), positives.end());
        return ndcg_at_k(ranked, positives, k);
    });
    m.def("hr_at_k", [](std::vector<std::uint32_t> ranked,
                        std::vector<std::uint32_t> positives, std::size_t k) {
        std::sort(positives.begin(), positives.end());
        return hr_at_k(ranked, positives, k);
    });

    py::class_<RankingMetrics::AtK>(m, "MetricsAtK")
        .def_readonly("k", &RankingMetrics::AtK::k)
        .def_readonly("ndcg", &RankingMetrics::AtK::ndcg)
        .def_readonly("hr", &RankingMetrics::AtK::hr);
    py::class_<RankingMetrics>(m, "RankingMetrics")
        .def_readonly("per_k", &RankingMetrics::per_k)
        .def_readonly("users_evaluated", &RankingMetrics::users_evaluated);

    m.def(
        "evaluate_codes",
        [](const BinaryCodeMatrix& users, const BinaryCodeMatrix& items,
           const InteractionSet& data, std::vector<std::size_t> ks, std::uint32_t threads) {
            return evaluate_codes(users, items, data, ks, threads);
        },
        py::arg("users"), py::arg("items"), py::arg("data"), py::arg("ks"),
        py::arg("threads") = 1);
    m.def(
        "evaluate_embeddings",
        [](const EmbeddingMatrix& users, const EmbeddingMatrix& items,
           const InteractionSet& data, std::vector<std::size_t> ks, std::uint32_t threads) {
            return evaluate_embeddings(users, items, data, ks, threads);
        },
        py::arg("users"), py::arg("items"), py::arg("data"), py::arg("ks"),
        py::arg("threads") = 1);

    py::class_<SyntheticGeometry>(m, "SyntheticGeometry")
        .def_readonly("latent_dim", &SyntheticGeometry::latent_dim)
        .def_readonly("n_major", &SyntheticGeometry::n_major)
        .def_readonly("n_minor", &SyntheticGeometry::n_minor)
        .def_readonly("threshold", &SyntheticGeometry::threshold)
        .def_readonly("user_points", &SyntheticGeometry::user_points)
        .def_readonly("item_points", &SyntheticGeometry::item_points);
    m.def("generate_imbalanced_synthetic", &generate_imbalanced_synthetic,
          py::arg("n_users"), py::arg("n_major"), py::arg("n_minor"),
          py::arg("spread_major"), py::arg("spread_minor"), py::arg("seed"));

    py::class_<Rq4Config>(m, "Rq4Config")
        .def(py::init<>())
        .def_readwrite("n_users", &Rq4Config::n_users)
        .def_readwrite("n_major", &Rq4Config::n_major)
        .def_readwrite("n_minor", &Rq4Config::n_minor)
        .def_readwrite("spread_major", &Rq4Config::spread_major)
        .def_readwrite("spread_minor", &Rq4Config::spread_minor)
        .def_readwrite("train_fraction", &Rq4Config::train_fraction)
        .def_readwrite("k", &Rq4Config::k);
    py::class_<Rq4Row>(m, "Rq4Row")
        .def_readonly("seed", &Rq4Row::seed)
        .def_readonly("siml_ndcg", &Rq4Row::siml_ndcg)
        .def_readonly("siml_hr", &Rq4Row::siml_hr)
        .def_readonly("cml_ndcg", &Rq4Row::cml_ndcg)
        .def_readonly("cml_hr", &Rq4Row::cml_hr);
    py::class_<Rq4Report>(m, "Rq4Report")
        .def_readonly("rows", &Rq4Report::rows)
        .def_readonly("siml_mean_ndcg", &Rq4Report::siml_mean_ndcg)
        .def_readonly("siml_mean_hr", &Rq4Report::siml_mean_hr)
        .def_readonly("cml_mean_ndcg", &Rq4Report::cml_mean_ndcg)
        .def_readonly("cml_mean_hr", &Rq4Report::cml_mean_hr);
    m.def(
        "run_rq4",
        [](std::vector<std::uint64_t> seeds, const Hyperparams& hp, const Rq4Config& cfg) {
            return run_rq4(seeds, hp, cfg);
        },
        py::arg("seeds"), py::arg("hp"), py::arg("config") = Rq4Config{},
        py::call_guard<py::gil_scoped_release>());
}
