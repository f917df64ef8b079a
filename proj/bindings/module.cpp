// Python bindings for the rib-cartilage registration core. Point clouds
// cross the boundary as (N,3) float64 arrays with optional integer labels.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ribreg/geometry.hpp"
#include "ribreg/io.hpp"
#include "ribreg/pipeline.hpp"
#include "ribreg/registration.hpp"
#include "ribreg/skeleton.hpp"
#include "ribreg/som.hpp"
#include "ribreg/synth.hpp"

namespace py = pybind11;
using namespace ribreg;

namespace {

PointCloud cloud_from_array(const py::array_t<double, py::array::c_style>& points,
                            const std::optional<py::array_t<int>>& labels = {}) {
    const auto buf = points.unchecked<2>();
    if (points.ndim() != 2 || points.shape(1) != 3)
        throw py::value_error("points must be an (N,3) array");
    PointCloud cloud;
    cloud.points.reserve(buf.shape(0));
    for (py::ssize_t i = 0; i < buf.shape(0); ++i)
        cloud.points.emplace_back(buf(i, 0), buf(i, 1), buf(i, 2));
    if (labels) {
        const auto lab = labels->unchecked<1>();
        if (lab.shape(0) != buf.shape(0))
            throw py::value_error("labels must have one entry per point");
        cloud.labels.reserve(lab.shape(0));
        for (py::ssize_t i = 0; i < lab.shape(0); ++i) cloud.labels.push_back(lab(i));
    }
    return cloud;
}

py::array_t<double> array_from_points(const std::vector<Point3>& points) {
    py::array_t<double> out({static_cast<py::ssize_t>(points.size()), py::ssize_t(3)});
    auto buf = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < points.size(); ++i)
        for (int j = 0; j < 3; ++j) buf(i, j) = points[i](j);
    return out;
}

py::array_t<int> array_from_labels(const PointCloud& cloud) {
    py::array_t<int> out(static_cast<py::ssize_t>(cloud.size()));
    auto buf = out.mutable_unchecked<1>();
    for (std::size_t i = 0; i < cloud.size(); ++i) buf(i) = cloud.label(i);
    return out;
}

io::RunConfig config_from_dict(const py::dict& overrides) {
    io::RunConfig cfg;
    for (const auto& item : overrides) {
        const std::string key = py::cast<std::string>(item.first);
        if (key == "som_stage1_rows") cfg.som_stage1_rows = py::cast<int>(item.second);
        else if (key == "som_stage1_cols") cfg.som_stage1_cols = py::cast<int>(item.second);
        else if (key == "som_stage2_rows") cfg.som_stage2_rows = py::cast<int>(item.second);
        else if (key == "som_stage2_cols") cfg.som_stage2_cols = py::cast<int>(item.second);
        else if (key == "som_learning_rate") cfg.som_learning_rate = py::cast<double>(item.second);
        else if (key == "som_stage1_epochs") cfg.som_stage1_epochs = py::cast<int>(item.second);
        else if (key == "som_stage2_epochs") cfg.som_stage2_epochs = py::cast<int>(item.second);
        else if (key == "seed") cfg.seed = py::cast<std::uint64_t>(item.second);
        else if (key == "t_theta_deg") cfg.t_theta_deg = py::cast<double>(item.second);
        else if (key == "rib_samples") cfg.rib_samples = py::cast<std::array<int, 4>>(item.second);
        else if (key == "n_r") cfg.n_r = py::cast<int>(item.second);
        else if (key == "downsample_count") cfg.downsample_count = py::cast<int>(item.second);
        else throw py::value_error("unknown config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

py::dict report_to_dict(const registration::RegistrationReport& report) {
    py::dict d;
    d["method"] = report.method;
    d["ed_mean_mm"] = report.ed_mean;
    d["ed_stddev_mm"] = report.ed_stddev;
    d["hausdorff_mm"] = report.hausdorff;
    d["distances_mm"] = py::array_t<double>(static_cast<py::ssize_t>(report.distances.size()),
                                            report.distances.data());
    return d;
}

resample::Correspondence correspondence_from_arrays(
    const py::array_t<double, py::array::c_style>& source_keys,
    const py::array_t<double, py::array::c_style>& target_keys) {
    const PointCloud src = cloud_from_array(source_keys);
    const PointCloud tgt = cloud_from_array(target_keys);
    if (src.size() != tgt.size()) throw py::value_error("key arrays must have equal length");
    resample::Correspondence corr;
    for (std::size_t i = 0; i < src.size(); ++i)
        corr.pairs.push_back({src.points[i], tgt.points[i], 0, static_cast<int>(i)});
    return corr;
}

}  // namespace

PYBIND11_MODULE(_ribreg, m) {
    m.doc() = "Skeleton-graph non-rigid registration of rib-cartilage point clouds";

    py::register_exception<ribreg::Error>(m, "RibregError");

    m.def(
        "apply_transform",
        [](const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation,
           const py::array_t<double, py::array::c_style>& points) {
            RigidTransform t;
            t.rotation = rotation;
            t.translation = translation;
            return array_from_points(geometry::apply_transform(t, cloud_from_array(points)).points);
        },
        py::arg("rotation"), py::arg("translation"), py::arg("points"));

    m.def(
        "kabsch_fit",
        [](const py::array_t<double, py::array::c_style>& source,
           const py::array_t<double, py::array::c_style>& target) {
            const RigidTransform t =
                geometry::kabsch_fit(cloud_from_array(source), cloud_from_array(target));
            return py::make_tuple(t.rotation, t.translation);
        },
        py::arg("source"), py::arg("target"),
        "Least-squares rigid alignment; returns (rotation, translation).");

    m.def(
        "nearest_neighbors",
        [](const Eigen::Vector3d& query, const py::array_t<double, py::array::c_style>& reference,
           int k) {
            const auto nn = geometry::nearest_neighbors(query, cloud_from_array(reference), k);
            py::array_t<int> idx(static_cast<py::ssize_t>(nn.size()));
            py::array_t<double> dist(static_cast<py::ssize_t>(nn.size()));
            auto ib = idx.mutable_unchecked<1>();
            auto db = dist.mutable_unchecked<1>();
            for (std::size_t i = 0; i < nn.size(); ++i) {
                ib(i) = nn[i].first;
                db(i) = nn[i].second;
            }
            return py::make_tuple(idx, dist);
        },
        py::arg("query"), py::arg("reference"), py::arg("k"));

    m.def(
        "mean_nn_distance",
        [](const py::array_t<double, py::array::c_style>& moved,
           const py::array_t<double, py::array::c_style>& target) {
            const auto stats =
                geometry::mean_nn_distance(cloud_from_array(moved), cloud_from_array(target));
            py::dict d;
            d["mean_mm"] = stats.mean;
            d["stddev_mm"] = stats.stddev;
            d["distances_mm"] = py::array_t<double>(
                static_cast<py::ssize_t>(stats.distances.size()), stats.distances.data());
            return d;
        },
        py::arg("moved"), py::arg("target"));

    m.def(
        "hausdorff_distance",
        [](const py::array_t<double, py::array::c_style>& a,
           const py::array_t<double, py::array::c_style>& b) {
            return geometry::hausdorff_distance(cloud_from_array(a), cloud_from_array(b));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "downsample",
        [](const py::array_t<double, py::array::c_style>& points, int count, std::uint64_t seed) {
            return array_from_points(geometry::downsample(cloud_from_array(points), count, seed)
                                         .points);
        },
        py::arg("points"), py::arg("count"), py::arg("seed") = 0,
        "Spatially uniform subsample (greedy dart throwing).");

    m.def(
        "som_key_points",
        [](const py::array_t<double, py::array::c_style>& points, int rows, int cols, int epochs,
           double learning_rate, std::uint64_t seed) {
            const PointCloud cloud = cloud_from_array(points);
            som::SomGrid grid = som::init_grid(cloud, rows, cols, seed);
            grid = som::train(grid, cloud,
                              som::SomParams::standard(rows, cols, epochs, cloud.size(),
                                                       learning_rate, seed));
            return array_from_points(som::extract_key_points(grid).points);
        },
        py::arg("points"), py::arg("rows"), py::arg("cols"), py::arg("epochs") = 200,
        py::arg("learning_rate") = 0.5, py::arg("seed") = 0,
        "Train a SOM on the cloud and return its node weights.");

    m.def(
        "build_mst",
        [](const py::array_t<double, py::array::c_style>& points) {
            const auto graph = skeleton::build_mst(cloud_from_array(points));
            py::array_t<double> edges(
                {static_cast<py::ssize_t>(graph.edges.size()), py::ssize_t(3)});
            auto buf = edges.mutable_unchecked<2>();
            for (std::size_t i = 0; i < graph.edges.size(); ++i) {
                buf(i, 0) = graph.edges[i].a;
                buf(i, 1) = graph.edges[i].b;
                buf(i, 2) = graph.edges[i].weight;
            }
            return edges;
        },
        py::arg("points"), "Minimum spanning tree edges as an (N-1, 3) array [i, j, weight].");

    m.def(
        "convex_hull_vertices",
        [](const py::array_t<double, py::array::c_style>& points) {
            return skeleton::convex_hull_vertices(cloud_from_array(points));
        },
        py::arg("points"));

    m.def(
        "continuity_filter",
        [](const py::array_t<double, py::array::c_style>& path, double t_theta_deg) {
            return array_from_points(
                skeleton::continuity_filter(cloud_from_array(path).points, t_theta_deg));
        },
        py::arg("path"), py::arg("t_theta_deg") = 60.0);

    m.def(
        "warp_nonrigid",
        [](const py::array_t<double, py::array::c_style>& source,
           const py::array_t<double, py::array::c_style>& source_keys,
           const py::array_t<double, py::array::c_style>& target_keys, int n_r) {
            const auto corr = correspondence_from_arrays(source_keys, target_keys);
            return array_from_points(
                registration::warp_nonrigid(cloud_from_array(source), corr, n_r).points);
        },
        py::arg("source"), py::arg("source_keys"), py::arg("target_keys"), py::arg("n_r") = 10,
        "Locally rigid warp over the n_r nearest key pairs per point.");

    m.def(
        "icp_rigid",
        [](const py::array_t<double, py::array::c_style>& source,
           const py::array_t<double, py::array::c_style>& target, int max_iter, double tol) {
            const auto [t, report] =
                registration::icp_rigid(cloud_from_array(source), cloud_from_array(target),
                                        max_iter, tol);
            return py::make_tuple(t.rotation, t.translation, report_to_dict(report));
        },
        py::arg("source"), py::arg("target"), py::arg("max_iter") = 100, py::arg("tol") = 1e-4);

    m.def(
        "evaluate",
        [](const py::array_t<double, py::array::c_style>& moved,
           const py::array_t<double, py::array::c_style>& target) {
            return report_to_dict(
                registration::evaluate(cloud_from_array(moved), cloud_from_array(target)));
        },
        py::arg("moved"), py::arg("target"));

    m.def(
        "generate_cage",
        [](std::uint64_t seed, double noise_sigma_mm, int points_per_rib) {
            synth::CageSpec spec;
            spec.seed = seed;
            spec.noise_sigma_mm = noise_sigma_mm;
            spec.points_per_rib = points_per_rib;
            const auto [cloud, truth] = synth::generate_cage(spec);
            py::dict d;
            d["points"] = array_from_points(cloud.points);
            d["labels"] = array_from_labels(cloud);
            std::vector<Point3> endpoint_positions;
            for (const auto& e : truth.endpoints.endpoints)
                endpoint_positions.push_back(e.position);
            d["endpoints"] = array_from_points(endpoint_positions);
            return d;
        },
        py::arg("seed") = 1, py::arg("noise_sigma_mm") = 0.0, py::arg("points_per_rib") = 350);

    m.def(
        "deform_cage",
        [](const py::array_t<double, py::array::c_style>& points, std::uint64_t seed,
           double max_scale_dev, double max_bend_amplitude_mm) {
            const PointCloud cloud = cloud_from_array(points);
            synth::GroundTruth truth;  // field acts on points only here
            truth.endpoints.endpoints.resize(8);
            for (int i = 0; i < 8; ++i) {
                truth.endpoints.endpoints[i].rib_level = 2 + i / 2;
                truth.endpoints.endpoints[i].side =
                    i % 2 ? geometry::Side::Right : geometry::Side::Left;
            }
            const auto spec = synth::sample_deformation(seed, max_scale_dev, max_bend_amplitude_mm);
            return array_from_points(synth::deform(cloud, truth, spec).cloud.points);
        },
        py::arg("points"), py::arg("seed") = 0, py::arg("max_scale_dev") = 0.1,
        py::arg("max_bend_amplitude_mm") = 10.0,
        "Apply a seeded smooth deformation (scale, bend, rigid offset).");

    m.def(
        "register_graph",
        [](const py::array_t<double, py::array::c_style>& source,
           const py::array_t<double, py::array::c_style>& target, const py::dict& config) {
            const io::RunConfig cfg = config_from_dict(config);
            const auto result =
                pipeline::register_graph(cloud_from_array(source), cloud_from_array(target), cfg,
                                         pipeline::default_template());
            py::dict d;
            d["warped"] = array_from_points(result.warped.points);
            d["report"] = report_to_dict(result.report);
            d["source_keys"] = array_from_points(result.correspondence.source_keys().points);
            d["target_keys"] = array_from_points(result.correspondence.target_keys().points);
            std::vector<Point3> wps;
            for (const auto& wp : result.source_waypoints) wps.push_back(wp.position);
            d["source_waypoints"] = array_from_points(wps);
            return d;
        },
        py::arg("source"), py::arg("target"), py::arg("config") = py::dict(),
        "Full skeleton-graph registration; config keys mirror the config file.");

    m.attr("__version__") = "0.1.0";
}
