#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pyramid/eval.hpp"
#include "pyramid/hnsw.hpp"
#include "pyramid/index.hpp"
#include "pyramid/vecio.hpp"

namespace py = pybind11;
using namespace pyramid;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Dataset to_dataset(const FloatArray& arr) {
    if (arr.ndim() != 2) throw DimensionError("expected a 2-d float array");
    Dataset ds;
    ds.count = std::size_t(arr.shape(0));
    ds.dim = std::size_t(arr.shape(1));
    ds.data.assign(arr.data(), arr.data() + ds.count * ds.dim);
    return ds;
}

std::vector<float> to_query(const FloatArray& arr) {
    if (arr.ndim() != 1) throw DimensionError("expected a 1-d float array");
    return {arr.data(), arr.data() + arr.shape(0)};
}

py::array from_dataset(const Dataset& ds) {
    FloatArray arr({py::ssize_t(ds.count), py::ssize_t(ds.dim)});
    std::copy(ds.data.begin(), ds.data.end(), arr.mutable_data());
    return std::move(arr);
}

py::list hits_to_list(const QueryResult& hits) {
    py::list out;
    for (const auto& h : hits) out.append(py::make_tuple(h.id, h.score));
    return out;
}

IndexParams params_from_kwargs(std::size_t n_prime, std::size_t m, std::size_t w,
                               double epsilon, int kmeans_iters, std::size_t r,
                               std::uint64_t seed, int M, int M0, int build_l, int assign_l) {
    IndexParams p;
    p.n_prime = n_prime;
    p.m = m;
    p.w = w;
    p.epsilon = epsilon;
    p.kmeans_iters = kmeans_iters;
    p.r = r;
    p.seed = seed;
    p.M = M;
    p.M0 = M0;
    p.build_l = build_l;
    p.assign_l = assign_l;
    return p;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
    mod.doc() = "two-level HNSW similarity search";

    py::register_exception<DimensionError>(mod, "DimensionError", PyExc_ValueError);
    py::register_exception<BalanceInfeasibleError>(mod, "BalanceInfeasibleError",
                                                   PyExc_RuntimeError);

    py::class_<HnswGraph>(mod, "Hnsw")
        .def_static(
            "build",
            [](const FloatArray& data, const std::string& metric, int M, int M0, int build_l,
               std::uint64_t seed) {
                const Dataset ds = to_dataset(data);
                std::vector<ItemId> ids(ds.count);
                std::iota(ids.begin(), ids.end(), ItemId(0));
                return HnswGraph::build(ids, ds.data, ds.dim, metric_from_string(metric), M,
                                        M0, build_l, seed);
            },
            py::arg("data"), py::arg("metric") = "euclidean", py::arg("M") = 16,
            py::arg("M0") = 32, py::arg("build_l") = 100, py::arg("seed") = 0)
        .def(
            "search",
            [](const HnswGraph& g, const FloatArray& q, int k, int l) {
                return hits_to_list(g.search(to_query(q), {l, k, 0}));
            },
            py::arg("q"), py::arg("k") = 10, py::arg("l") = 100)
        .def("__len__", &HnswGraph::size)
        .def_property_readonly("dim", &HnswGraph::dim)
        .def_property_readonly("max_layer", &HnswGraph::max_layer)
        .def("save",
             [](const HnswGraph& g, const std::filesystem::path& p) { g.save(p); })
        .def_static("load", [](const std::filesystem::path& p) { return HnswGraph::load(p); });

    py::class_<PyramidIndex>(mod, "Index")
        .def_property_readonly("w", &PyramidIndex::w)
        .def_property_readonly("dim", [](const PyramidIndex& i) { return i.dim; })
        .def_property_readonly("metric",
                               [](const PyramidIndex& i) { return to_string(i.metric); })
        .def(
            "route",
            [](const PyramidIndex& i, const FloatArray& q, std::size_t K) {
                return i.route(to_query(q), K);
            },
            py::arg("q"), py::arg("K") = 1)
        .def(
            "search",
            [](const PyramidIndex& i, const FloatArray& q, std::size_t K, int k, int l) {
                return hits_to_list(i.search(to_query(q), K, {l, k, 0}));
            },
            py::arg("q"), py::arg("K") = 1, py::arg("k") = 10, py::arg("l") = 100)
        .def("save", &PyramidIndex::save)
        .def_static("load", &PyramidIndex::load);

    mod.def(
        "build_index",
        [](const FloatArray& data, const std::string& metric, std::size_t n_prime,
           std::size_t m, std::size_t w, double epsilon, int kmeans_iters, std::size_t r,
           std::uint64_t seed, int M, int M0, int build_l, int assign_l) {
            const Dataset ds = to_dataset(data);
            const IndexParams p = params_from_kwargs(n_prime, m, w, epsilon, kmeans_iters, r,
                                                     seed, M, M0, build_l, assign_l);
            const MetricKind kind = metric_from_string(metric);
            if (kind == MetricKind::InnerProduct) return build_index_mips(ds, p);
            return build_index(ds, kind, p);
        },
        py::arg("data"), py::arg("metric"), py::arg("n_prime"), py::arg("m"), py::arg("w"),
        py::arg("epsilon") = 0.05, py::arg("kmeans_iters") = 25, py::arg("r") = 0,
        py::arg("seed") = 0, py::arg("M") = 16, py::arg("M0") = 32, py::arg("build_l") = 100,
        py::arg("assign_l") = 50);

    mod.def(
        "build_index_naive",
        [](const FloatArray& data, const std::string& metric, std::size_t w,
           std::uint64_t seed, int M, int M0, int build_l) {
            IndexParams p;
            p.w = w;
            p.seed = seed;
            p.M = M;
            p.M0 = M0;
            p.build_l = build_l;
            return build_index_naive(to_dataset(data), metric_from_string(metric), p);
        },
        py::arg("data"), py::arg("metric"), py::arg("w"), py::arg("seed") = 0,
        py::arg("M") = 16, py::arg("M0") = 32, py::arg("build_l") = 100);

    mod.def(
        "ground_truth",
        [](const FloatArray& data, const FloatArray& queries, std::size_t k,
           const std::string& metric) {
            const GroundTruth t = ground_truth(to_dataset(data), to_dataset(queries), k,
                                               metric_from_string(metric));
            py::list out;
            for (const auto& entry : t.entries) out.append(hits_to_list(entry));
            return out;
        },
        py::arg("data"), py::arg("queries"), py::arg("k"), py::arg("metric") = "euclidean");

    mod.def(
        "precision",
        [](const std::vector<std::pair<ItemId, double>>& result,
           const std::vector<std::pair<ItemId, double>>& truth, std::size_t k) {
            QueryResult r, t;
            for (auto& [id, s] : result) r.push_back({id, s});
            for (auto& [id, s] : truth) t.push_back({id, s});
            return precision(r, t, k);
        },
        py::arg("result"), py::arg("truth"), py::arg("k"));

    mod.def("gen_uniform",
            [](std::size_t n, std::size_t dim, std::uint64_t seed) {
                return from_dataset(gen_uniform(n, dim, seed));
            },
            py::arg("n"), py::arg("dim"), py::arg("seed") = 0);
    mod.def("gen_gaussian_mixture",
            [](std::size_t n, std::size_t dim, std::size_t clusters, double sigma,
               std::uint64_t seed) {
                return from_dataset(gen_gaussian_mixture(n, dim, clusters, sigma, seed));
            },
            py::arg("n"), py::arg("dim"), py::arg("clusters"), py::arg("sigma") = 0.5,
            py::arg("seed") = 0);
    mod.def("gen_lognormal_norm",
            [](std::size_t n, std::size_t dim, double log_sigma, std::uint64_t seed) {
                return from_dataset(gen_lognormal_norm(n, dim, log_sigma, seed));
            },
            py::arg("n"), py::arg("dim"), py::arg("log_sigma") = 1.0, py::arg("seed") = 0);
}
