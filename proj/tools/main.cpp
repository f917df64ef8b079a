#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ribreg/io.hpp"
#include "ribreg/pipeline.hpp"
#include "ribreg/registration.hpp"
#include "ribreg/synth.hpp"

namespace fs = std::filesystem;
using namespace ribreg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitPipeline = 3;

struct GlobalOpts {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

io::RunConfig load_config(const GlobalOpts& g) {
    io::RunConfig cfg;
    if (!g.config_path.empty()) {
        try {
            cfg = io::read_config(g.config_path);
        } catch (const IoError& e) {
            throw SchemaError(std::string(e.what()));
        }
    }
    if (g.seed) cfg.seed = *g.seed;
    return cfg;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

skeleton::EndpointTemplate load_template(const std::string& path) {
    if (path.empty()) return pipeline::default_template();
    return skeleton::read_endpoint_template_csv(path);
}

PointCloud load_cloud(const std::string& path) {
    try {
        return io::read_point_cloud(path);
    } catch (const IoError& e) {
        // Input problems are usage errors, not pipeline failures.
        throw SchemaError(std::string(e.what()));
    } catch (const EmptyFile& e) {
        throw SchemaError(std::string(e.what()));
    } catch (const ParseError& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

// Per-cloud skeleton artifacts, written into `dir` and recorded relative to
// the manifest root.
void write_skeleton_artifacts(const pipeline::SkeletonArtifacts& art, const std::string& root,
                              const std::string& subdir, pipeline::Manifest& manifest) {
    const std::string dir = subdir.empty() ? root : join(root, subdir);
    ensure_out_dir(dir);
    auto rel = [&](const std::string& name) {
        return subdir.empty() ? name : subdir + "/" + name;
    };

    io::write_point_cloud(art.stage1_cloud, join(dir, "som_stage1.ply"));
    manifest.record("som_stage1", rel("som_stage1.ply"), root);

    io::write_point_cloud(art.key_points, join(dir, "som_stage2.ply"));
    manifest.record("som_stage2", rel("som_stage2.ply"), root);

    skeleton::write_edge_list_csv(art.mst, join(dir, "mst_edges.csv"));
    manifest.record("mst_edges", rel("mst_edges.csv"), root);

    // Paired endpoints with their rib labels.
    {
        std::ostringstream out;
        out << "rib_level,side,vertex_index,x,y,z\n";
        char buf[160];
        for (int level = geometry::kRibLevelMin; level <= geometry::kRibLevelMax; ++level) {
            const auto& pair = art.endpoint_pairs.level(level);
            for (const auto& [side, idx] :
                 {std::pair{std::string("L"), pair.left}, std::pair{std::string("R"), pair.right}}) {
                const Point3& p = art.key_points.points[idx];
                std::snprintf(buf, sizeof(buf), "%d,%s,%d,%.6f,%.6f,%.6f\n", level, side.c_str(),
                              idx, p.x(), p.y(), p.z());
                out << buf;
            }
        }
        io::write_file_atomic(join(dir, "endpoints_paired.csv"), out.str());
        manifest.record("endpoints_paired", rel("endpoints_paired.csv"), root);
    }

    // Rib paths as labeled clouds; per level, point order follows the path.
    auto paths_cloud = [&](bool filtered) {
        PointCloud cloud;
        for (int level = geometry::kRibLevelMin; level <= geometry::kRibLevelMax; ++level) {
            const auto& path = filtered ? art.rib_paths.filtered_path(level)
                                        : art.rib_paths.raw_path(level);
            for (int idx : path) cloud.append(art.key_points.points[idx], level);
        }
        return cloud;
    };
    io::write_point_cloud(paths_cloud(false), join(dir, "rib_paths_raw.ply"));
    manifest.record("rib_paths_raw", rel("rib_paths_raw.ply"), root);
    io::write_point_cloud(paths_cloud(true), join(dir, "rib_paths_filtered.ply"));
    manifest.record("rib_paths_filtered", rel("rib_paths_filtered.ply"), root);

    PointCloud resampled;
    for (int level = geometry::kRibLevelMin; level <= geometry::kRibLevelMax; ++level)
        for (const Point3& p : art.resampled.rib(level)) resampled.append(p, level);
    io::write_point_cloud(resampled, join(dir, "resampled.ply"));
    manifest.record("resampled", rel("resampled.ply"), root);
}

pipeline::WarningSink stderr_warnings(const char* stage) {
    return [stage](const std::string& w) { std::cerr << "warning [" << stage << "]: " << w << "\n"; };
}

// ---------------------------------------------------------------------------

int cmd_synth(const GlobalOpts& g, const synth::CageSpec& cage_flags,
              const synth::DeformationSpec& deform_flags,
              std::optional<std::uint64_t> deform_sample_seed) {
    ensure_out_dir(g.out_dir);
    synth::CageSpec cage = cage_flags;
    if (g.seed) cage.seed = *g.seed;
    cage.validate();

    synth::DeformationSpec deformation = deform_flags;
    if (deform_sample_seed) deformation = synth::sample_deformation(*deform_sample_seed, 0.1, 10.0);
    deformation.validate();

    const auto [cloud, truth] = synth::generate_cage(cage);
    const synth::DeformResult deformed = synth::deform(cloud, truth, deformation);

    pipeline::Manifest manifest("synth");
    io::write_point_cloud(cloud, join(g.out_dir, "cage.ply"));
    manifest.record("cage", "cage.ply", g.out_dir);
    synth::write_centerlines_csv(truth, join(g.out_dir, "cage_centerlines.csv"));
    manifest.record("cage_centerlines", "cage_centerlines.csv", g.out_dir);
    skeleton::write_endpoint_template_csv(truth.endpoints, join(g.out_dir, "cage_endpoints.csv"));
    manifest.record("cage_endpoints", "cage_endpoints.csv", g.out_dir);

    io::write_point_cloud(deformed.cloud, join(g.out_dir, "deformed.ply"));
    manifest.record("deformed", "deformed.ply", g.out_dir);
    skeleton::write_endpoint_template_csv(deformed.truth.endpoints,
                                          join(g.out_dir, "deformed_endpoints.csv"));
    manifest.record("deformed_endpoints", "deformed_endpoints.csv", g.out_dir);
    synth::write_deformation_field_json(deformed.field, join(g.out_dir, "deform_field.json"));
    manifest.record("deform_field", "deform_field.json", g.out_dir);
    synth::write_truth_correspondence_csv(cloud, deformed.cloud,
                                          join(g.out_dir, "truth_correspondence.csv"));
    manifest.record("truth_correspondence", "truth_correspondence.csv", g.out_dir);

    manifest.write(join(g.out_dir, "manifest.json"));
    std::cout << "synth: wrote cage (" << cloud.size() << " points) and deformed cage to "
              << g.out_dir << "\n";
    return kExitOk;
}

int cmd_downsample(const GlobalOpts& g, const std::string& input, int count) {
    const io::RunConfig cfg = load_config(g);
    ensure_out_dir(g.out_dir);
    const PointCloud cloud = load_cloud(input);
    const int target = count > 0 ? count : cfg.downsample_count;
    const PointCloud out = geometry::downsample(cloud, std::min<int>(target, cloud.size()),
                                                cfg.seed);
    pipeline::Manifest manifest("downsample");
    io::write_point_cloud(out, join(g.out_dir, "downsampled.ply"));
    manifest.record("downsampled", "downsampled.ply", g.out_dir);
    manifest.write(join(g.out_dir, "manifest.json"));
    std::cout << "downsample: " << cloud.size() << " -> " << out.size() << " points\n";
    return kExitOk;
}

int cmd_skeleton(const GlobalOpts& g, const std::string& input, const std::string& template_path) {
    const io::RunConfig cfg = load_config(g);
    const skeleton::EndpointTemplate tmpl = load_template(template_path);
    const PointCloud cloud = load_cloud(input);
    ensure_out_dir(g.out_dir);

    const auto art = pipeline::skeletonize(cloud, cfg, tmpl, stderr_warnings("skeleton"));
    pipeline::Manifest manifest("skeleton");
    write_skeleton_artifacts(art, g.out_dir, "", manifest);
    manifest.write(join(g.out_dir, "manifest.json"));
    std::cout << "skeleton: " << art.stage1_cloud.size() << " unified points, "
              << art.key_points.size() << " key points, " << art.mst.edges.size() << " edges\n";
    return kExitOk;
}

int cmd_register(const GlobalOpts& g, const std::string& source_path,
                 const std::string& target_path, const std::string& method,
                 const std::string& template_path, bool plot_csv) {
    const io::RunConfig cfg = load_config(g);
    const PointCloud source = load_cloud(source_path);
    const PointCloud target = load_cloud(target_path);
    ensure_out_dir(g.out_dir);

    pipeline::Manifest manifest("register-" + method);
    registration::RegistrationReport report;

    if (method == "graph") {
        const skeleton::EndpointTemplate tmpl = load_template(template_path);
        const auto t0 = std::chrono::steady_clock::now();
        auto result = pipeline::register_graph(source, target, cfg, tmpl);
        result.report.runtime_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (const std::string& w : result.source_skeleton.warnings)
            std::cerr << "warning [skeleton/source]: " << w << "\n";
        for (const std::string& w : result.target_skeleton.warnings)
            std::cerr << "warning [skeleton/target]: " << w << "\n";

        write_skeleton_artifacts(result.source_skeleton, g.out_dir, "source_skeleton", manifest);
        write_skeleton_artifacts(result.target_skeleton, g.out_dir, "target_skeleton", manifest);
        registration::write_correspondence_csv(result.correspondence,
                                               join(g.out_dir, "correspondence.csv"));
        manifest.record("correspondence", "correspondence.csv", g.out_dir);
        registration::write_waypoints_csv(result.source_waypoints,
                                          join(g.out_dir, "waypoints_source.csv"));
        manifest.record("waypoints_source", "waypoints_source.csv", g.out_dir);
        io::write_point_cloud(result.warped, join(g.out_dir, "warped.ply"));
        manifest.record("warped", "warped.ply", g.out_dir);
        report = result.report;
    } else {
        const auto [transform, icp_report] = registration::icp_rigid(source, target);
        registration::write_transform_json(transform, join(g.out_dir, "transform.json"));
        manifest.record("transform", "transform.json", g.out_dir);
        const PointCloud warped = geometry::apply_transform(transform, source);
        io::write_point_cloud(warped, join(g.out_dir, "warped.ply"));
        manifest.record("warped", "warped.ply", g.out_dir);
        report = icp_report;
    }

    registration::write_report_json(report, join(g.out_dir, "report.json"));
    manifest.record("report", "report.json", g.out_dir);
    registration::write_distances_csv(report.distances, join(g.out_dir, "distances.csv"));
    manifest.record("distances", "distances.csv", g.out_dir);
    if (plot_csv) {
        std::ostringstream out;
        out << "method,distance_mm\n";
        char buf[64];
        for (double d : report.distances) {
            std::snprintf(buf, sizeof(buf), "%s,%.6f\n", report.method.c_str(), d);
            out << buf;
        }
        io::write_file_atomic(join(g.out_dir, "plot.csv"), out.str());
        manifest.record("plot", "plot.csv", g.out_dir);
    }
    manifest.write(join(g.out_dir, "manifest.json"));

    std::printf("register (%s): ED %.3f +- %.3f mm, HD %.3f mm (%.2f s)\n",
                report.method.c_str(), report.ed_mean, report.ed_stddev, report.hausdorff,
                report.runtime_seconds);
    return kExitOk;
}

int cmd_evaluate(const GlobalOpts& g, const std::string& moved_path,
                 const std::string& target_path) {
    ensure_out_dir(g.out_dir);
    const PointCloud moved = load_cloud(moved_path);
    const PointCloud target = load_cloud(target_path);
    registration::RegistrationReport report = registration::evaluate(moved, target);
    report.method = "evaluate";

    pipeline::Manifest manifest("evaluate");
    registration::write_report_json(report, join(g.out_dir, "report.json"));
    manifest.record("report", "report.json", g.out_dir);
    registration::write_distances_csv(report.distances, join(g.out_dir, "distances.csv"));
    manifest.record("distances", "distances.csv", g.out_dir);
    manifest.write(join(g.out_dir, "manifest.json"));

    std::printf("evaluate: ED %.3f +- %.3f mm, HD %.3f mm\n", report.ed_mean, report.ed_stddev,
                report.hausdorff);
    return kExitOk;
}

int cmd_transfer(const GlobalOpts& g, const std::string& waypoints_path,
                 const std::string& correspondence_path, const std::string& truth_field_path) {
    const io::RunConfig cfg = load_config(g);
    ensure_out_dir(g.out_dir);
    const auto waypoints = registration::read_waypoints_csv(waypoints_path);
    // A missing or unreadable correspondence is a pipeline failure here: the
    // file is the product of a prior graph registration.
    const auto corr = registration::read_correspondence_csv(correspondence_path);

    const auto transferred = registration::transfer_waypoints(waypoints, corr, cfg.n_r);
    pipeline::Manifest manifest("transfer");
    registration::write_waypoints_csv(transferred, join(g.out_dir, "waypoints_transferred.csv"));
    manifest.record("waypoints_transferred", "waypoints_transferred.csv", g.out_dir);

    if (!truth_field_path.empty()) {
        const synth::DeformationField field = synth::read_deformation_field_json(truth_field_path);
        std::ostringstream out;
        out << "index,gap,side,error_mm\n";
        char buf[96];
        double sum = 0.0;
        for (std::size_t i = 0; i < transferred.size(); ++i) {
            const Point3 expected = field.apply(waypoints[i].position);
            const double err = (transferred[i].position - expected).norm();
            sum += err;
            std::snprintf(buf, sizeof(buf), "%zu,%s,%s,%.6f\n", i,
                          registration::to_string(transferred[i].gap).c_str(),
                          registration::to_string(transferred[i].side).c_str(), err);
            out << buf;
        }
        io::write_file_atomic(join(g.out_dir, "waypoint_errors.csv"), out.str());
        manifest.record("waypoint_errors", "waypoint_errors.csv", g.out_dir);
        std::printf("transfer: mean waypoint error %.3f mm over %zu waypoints\n",
                    sum / transferred.size(), transferred.size());
    } else {
        std::cout << "transfer: moved " << transferred.size() << " waypoints\n";
    }
    manifest.write(join(g.out_dir, "manifest.json"));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Skeleton-graph non-rigid registration of rib-cartilage point clouds"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Override the RNG seed");
    app.add_option("--config", g.config_path, "Run configuration file");
    app.add_option("--out", g.out_dir, "Output directory")->required();

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic rib cage pair");
    synth::CageSpec cage;
    synth::DeformationSpec deformation;
    std::optional<std::uint64_t> deform_sample_seed;
    std::uint64_t deform_seed_value = 0;
    synth_cmd->add_option("--points-per-rib", cage.points_per_rib, "Points per rib band");
    synth_cmd->add_option("--sternum-points", cage.sternum_points, "Points in the sternum band");
    synth_cmd->add_option("--tube-radius", cage.tube_radius_mm, "Surface scatter radius (mm)");
    synth_cmd->add_option("--noise", cage.noise_sigma_mm, "Gaussian noise sigma (mm)");
    synth_cmd->add_option("--scale-x", deformation.scale(0), "Deformation scale factor x");
    synth_cmd->add_option("--scale-y", deformation.scale(1), "Deformation scale factor y");
    synth_cmd->add_option("--scale-z", deformation.scale(2), "Deformation scale factor z");
    synth_cmd->add_option("--bend-amplitude", deformation.bend_amplitude_mm,
                          "Sinusoidal bend amplitude (mm)");
    synth_cmd->add_option("--bend-wavelength", deformation.bend_wavelength_mm,
                          "Sinusoidal bend wavelength (mm)");
    synth_cmd->add_option("--offset-x", deformation.rigid.translation(0), "Rigid offset x (mm)");
    synth_cmd->add_option("--offset-y", deformation.rigid.translation(1), "Rigid offset y (mm)");
    synth_cmd->add_option("--offset-z", deformation.rigid.translation(2), "Rigid offset z (mm)");
    auto* dseed = synth_cmd->add_option("--deform-seed", deform_seed_value,
                                        "Draw the deformation from this seed instead");

    // downsample
    auto* down_cmd = app.add_subcommand("downsample", "Spatially uniform subsampling");
    std::string down_in;
    int down_count = 0;
    down_cmd->add_option("--in", down_in, "Input point cloud")->required();
    down_cmd->add_option("--count", down_count, "Target point count (default from config)");

    // skeleton
    auto* skel_cmd = app.add_subcommand("skeleton", "Extract the rib skeleton of one cloud");
    std::string skel_in, skel_template;
    skel_cmd->add_option("--in", skel_in, "Input point cloud")->required();
    skel_cmd->add_option("--template", skel_template, "Labeled endpoint template CSV");

    // register
    auto* reg_cmd = app.add_subcommand("register", "Register a source cloud onto a target");
    std::string reg_source, reg_target, reg_method = "graph", reg_template;
    bool reg_plot = false;
    reg_cmd->add_option("--source", reg_source, "Source point cloud")->required();
    reg_cmd->add_option("--target", reg_target, "Target point cloud")->required();
    reg_cmd->add_option("--method", reg_method, "Registration method")
        ->check(CLI::IsMember({"graph", "icp"}));
    reg_cmd->add_option("--template", reg_template, "Labeled endpoint template CSV");
    reg_cmd->add_flag("--plot-csv", reg_plot, "Also write long-format (method,distance) CSV");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Distance metrics between two clouds");
    std::string eval_moved, eval_target;
    eval_cmd->add_option("--moved", eval_moved, "Realigned cloud")->required();
    eval_cmd->add_option("--target", eval_target, "Reference cloud")->required();

    // transfer
    auto* transfer_cmd = app.add_subcommand("transfer", "Warp waypoints with a correspondence");
    std::string tr_waypoints, tr_corr, tr_truth;
    transfer_cmd->add_option("--waypoints", tr_waypoints, "Waypoint CSV")->required();
    transfer_cmd->add_option("--correspondence", tr_corr, "Correspondence CSV from register")
        ->required();
    transfer_cmd->add_option("--truth-field", tr_truth,
                             "Deformation field JSON for error reporting");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    if (*seed_opt) g.seed = seed_value;
    if (*dseed) deform_sample_seed = deform_seed_value;

    try {
        if (*synth_cmd) return cmd_synth(g, cage, deformation, deform_sample_seed);
        if (*down_cmd) return cmd_downsample(g, down_in, down_count);
        if (*skel_cmd) return cmd_skeleton(g, skel_in, skel_template);
        if (*reg_cmd) return cmd_register(g, reg_source, reg_target, reg_method, reg_template,
                                          reg_plot);
        if (*eval_cmd) return cmd_evaluate(g, eval_moved, eval_target);
        if (*transfer_cmd) return cmd_transfer(g, tr_waypoints, tr_corr, tr_truth);
    } catch (const SchemaError& e) {
        std::cerr << "error [config]: " << e.what() << "\n";
        return kExitUsage;
    } catch (const InvalidSpec& e) {
        std::cerr << "error [spec]: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ribreg::Error& e) {
        std::cerr << "error [pipeline]: " << e.what() << "\n";
        return kExitPipeline;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPipeline;
    }
    return kExitUsage;
}
