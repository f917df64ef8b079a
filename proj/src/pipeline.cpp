#include "ribreg/pipeline.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ribreg/synth.hpp"

namespace ribreg::pipeline {

using json = nlohmann::ordered_json;

skeleton::EndpointTemplate default_template() {
    // The template must live in skeleton key-point space (SOM nodes contract
    // away from the true rib tips), so bootstrap it once: skeletonize the
    // default cage and label the key point nearest each true endpoint.
    static const skeleton::EndpointTemplate cached = [] {
        const auto [cloud, truth] = synth::generate_cage(synth::CageSpec{});

        const io::RunConfig defaults;
        som::SomGrid stage1 = som::init_grid(cloud, defaults.som_stage1_rows,
                                             defaults.som_stage1_cols, defaults.seed);
        stage1 = som::train(stage1, cloud,
                            som::SomParams::standard(defaults.som_stage1_rows,
                                                     defaults.som_stage1_cols,
                                                     defaults.som_stage1_epochs, cloud.size(),
                                                     defaults.som_learning_rate, defaults.seed));
        const PointCloud unified = som::extract_key_points(stage1);
        som::SomGrid stage2 = som::init_grid(unified, defaults.som_stage2_rows,
                                             defaults.som_stage2_cols, defaults.seed + 1);
        stage2 = som::train(stage2, unified,
                            som::SomParams::standard(defaults.som_stage2_rows,
                                                     defaults.som_stage2_cols,
                                                     defaults.som_stage2_epochs, unified.size(),
                                                     defaults.som_learning_rate,
                                                     defaults.seed + 1));
        const PointCloud keys = som::extract_key_points(stage2);

        // Greedy 1:1 assignment of true endpoints to distinct key points.
        struct Cand {
            double dist;
            int endpoint;
            int key;
        };
        std::vector<Cand> cands;
        for (std::size_t e = 0; e < truth.endpoints.endpoints.size(); ++e)
            for (std::size_t k = 0; k < keys.size(); ++k)
                cands.push_back(
                    {(truth.endpoints.endpoints[e].position - keys.points[k]).norm(),
                     static_cast<int>(e), static_cast<int>(k)});
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.dist != b.dist) return a.dist < b.dist;
            if (a.endpoint != b.endpoint) return a.endpoint < b.endpoint;
            return a.key < b.key;
        });
        std::vector<char> endpoint_done(8, 0);
        std::vector<char> key_done(keys.size(), 0);
        skeleton::EndpointTemplate tmpl;
        tmpl.endpoints.resize(8);
        int assigned = 0;
        for (const Cand& c : cands) {
            if (assigned == 8) break;
            if (endpoint_done[c.endpoint] || key_done[c.key]) continue;
            endpoint_done[c.endpoint] = 1;
            key_done[c.key] = 1;
            const auto& e = truth.endpoints.endpoints[c.endpoint];
            tmpl.endpoints[c.endpoint] = {keys.points[c.key], e.rib_level, e.side};
            ++assigned;
        }
        tmpl.validate();
        return tmpl;
    }();
    return cached;
}

namespace {

struct WarningLog {
    std::vector<std::string>& collected;
    const WarningSink& sink;

    void operator()(const std::string& message) const {
        collected.push_back(message);
        if (sink) sink(message);
    }
};

// Shrink a grid so its node count does not exceed the cloud size.
std::pair<int, int> cap_grid(int rows, int cols, std::size_t cloud_size, const WarningLog& warn,
                             const char* stage) {
    if (static_cast<std::size_t>(rows) * cols <= cloud_size) return {rows, cols};
    const double f = std::sqrt(static_cast<double>(cloud_size) /
                               (static_cast<double>(rows) * static_cast<double>(cols)));
    const int r = std::max(1, static_cast<int>(std::floor(rows * f)));
    const int c = std::max(1, static_cast<int>(std::floor(cols * f)));
    warn(std::string(stage) + ": grid " + std::to_string(rows) + "x" + std::to_string(cols) +
         " exceeds cloud size " + std::to_string(cloud_size) + ", capped to " + std::to_string(r) +
         "x" + std::to_string(c));
    return {r, c};
}

}  // namespace

SkeletonArtifacts skeletonize(const PointCloud& cloud, const io::RunConfig& config,
                              const skeleton::EndpointTemplate& tmpl, const WarningSink& sink,
                              const std::optional<RigidTransform>& pairing_init,
                              const std::vector<int>& banned_endpoints) {
    config.validate();
    if (cloud.empty()) throw EmptyCloud("skeletonize: empty cloud");

    SkeletonArtifacts art;
    const WarningLog warn{art.warnings, sink};

    // Stage 1: unify the cloud on a dense grid.
    auto [r1, c1] = cap_grid(config.som_stage1_rows, config.som_stage1_cols, cloud.size(), warn,
                             "som stage 1");
    art.stage1 = som::init_grid(cloud, r1, c1, config.seed);
    art.stage1 = som::train(art.stage1, cloud,
                            som::SomParams::standard(r1, c1, config.som_stage1_epochs,
                                                     cloud.size(), config.som_learning_rate,
                                                     config.seed));
    art.stage1_cloud = som::extract_key_points(art.stage1);

    // Stage 2: skeleton key points from the unified cloud.
    auto [r2, c2] = cap_grid(config.som_stage2_rows, config.som_stage2_cols,
                             art.stage1_cloud.size(), warn, "som stage 2");
    art.stage2 = som::init_grid(art.stage1_cloud, r2, c2, config.seed + 1);
    art.stage2 = som::train(art.stage2, art.stage1_cloud,
                            som::SomParams::standard(r2, c2, config.som_stage2_epochs,
                                                     art.stage1_cloud.size(),
                                                     config.som_learning_rate, config.seed + 1));
    art.key_points = som::extract_key_points(art.stage2);

    art.mst = skeleton::build_mst(art.key_points);
    art.hull = skeleton::convex_hull_vertices(art.key_points);

    // Endpoint candidates: hull vertices plus keys within 2% of the cloud
    // diagonal of the hull boundary, so rib tips that miss the hull by a
    // hair stay eligible.
    Point3 lo = art.key_points.points.front(), hi = lo;
    for (const Point3& p : art.key_points.points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    std::vector<int> candidates =
        skeleton::near_hull_indices(art.key_points, 0.02 * (hi - lo).norm());

    // Rib endpoints are lateral extremes; keeping only the outer band of
    // candidates pins the template alignment the way an eight-vertex hull
    // would, instead of letting it slide one rib level off.
    {
        const Point3 centroid = art.key_points.centroid();
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (const Point3& p : art.key_points.points) {
            const Point3 d = p - centroid;
            cov += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
        const Eigen::Vector3d lateral = eig.eigenvectors().col(2);
        double max_reach = 0.0;
        std::vector<double> reach(art.key_points.size(), 0.0);
        for (std::size_t i = 0; i < art.key_points.size(); ++i) {
            reach[i] = std::abs(lateral.dot(art.key_points.points[i] - centroid));
            max_reach = std::max(max_reach, reach[i]);
        }
        std::vector<int> outer;
        for (int idx : candidates)
            if (reach[idx] >= 0.55 * max_reach) outer.push_back(idx);
        if (outer.size() >= 8) candidates = std::move(outer);
    }

    for (int idx : banned_endpoints)
        candidates.erase(std::remove(candidates.begin(), candidates.end(), idx),
                         candidates.end());

    // A mislabeled endpoint shows up as a collapsed rib path: the filter
    // locks onto the bad first hop and drops everything after it. Recover
    // by banning the suspect vertex and pairing again.
    const int max_attempts = 5;
    for (int attempt = 0;; ++attempt) {
        art.endpoint_pairs = skeleton::pair_endpoints(art.key_points, candidates, tmpl, pairing_init);
        art.rib_paths =
            skeleton::extract_rib_paths(art.mst, art.endpoint_pairs, config.t_theta_deg);

        // Rib order check: per side, endpoint labels must run monotonically
        // along the cloud's vertical axis, in the same direction on both
        // sides. A violated order means the label transfer slid off by a
        // level, which local geometry checks cannot detect.
        {
            const Point3 centroid = art.key_points.centroid();
            Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
            for (const Point3& p : art.key_points.points) {
                const Point3 d = p - centroid;
                cov += d * d.transpose();
            }
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
            const Eigen::Vector3d vertical = eig.eigenvectors().col(1);
            int direction = 0;
            int violating_a = -1, violating_b = -1;
            for (bool left : {true, false}) {
                for (int level = geometry::kRibLevelMin; level < geometry::kRibLevelMax; ++level) {
                    const auto& a = art.endpoint_pairs.level(level);
                    const auto& b = art.endpoint_pairs.level(level + 1);
                    const int va_idx = left ? a.left : a.right;
                    const int vb_idx = left ? b.left : b.right;
                    const double va = vertical.dot(art.key_points.points[va_idx]);
                    const double vb = vertical.dot(art.key_points.points[vb_idx]);
                    const int step = vb > va ? 1 : -1;
                    if (direction == 0) direction = step;
                    if (step != direction && violating_a < 0) {
                        violating_a = va_idx;
                        violating_b = vb_idx;
                    }
                }
            }
            if (violating_a >= 0) {
                if (attempt + 1 >= max_attempts)
                    throw AmbiguousPairing(
                        "skeletonize: transferred endpoint labels keep violating the rib order");
                warn("endpoint labels out of rib order, excluding vertices " +
                     std::to_string(violating_a) + " and " + std::to_string(violating_b) +
                     " and pairing again");
                for (int idx : {violating_a, violating_b})
                    candidates.erase(std::remove(candidates.begin(), candidates.end(), idx),
                                     candidates.end());
                if (candidates.size() < 8)
                    throw TooFewPoints("skeletonize: not enough endpoint candidates left");
                continue;
            }
        }

        int bad_level = 0;
        for (int level = geometry::kRibLevelMin; level <= geometry::kRibLevelMax; ++level) {
            if (art.rib_paths.filtered_path(level).size() < 5) {
                bad_level = level;
                break;
            }
        }
        if (bad_level == 0) break;
        if (attempt + 1 >= max_attempts)
            throw TooFewPoints("skeletonize: rib " + std::to_string(bad_level) +
                               " path keeps collapsing after endpoint retries");

        // The endpoint on the side where the filter dies sooner is the
        // suspect: refilter the reversed path and compare.
        const auto& pair = art.endpoint_pairs.level(bad_level);
        const auto& raw = art.rib_paths.raw_path(bad_level);
        std::vector<Point3> forward;
        for (int idx : raw) forward.push_back(art.key_points.points[idx]);
        std::vector<Point3> reversed(forward.rbegin(), forward.rend());
        const std::size_t kept_forward =
            skeleton::continuity_filter(forward, config.t_theta_deg).size();
        const std::size_t kept_reverse =
            skeleton::continuity_filter(reversed, config.t_theta_deg).size();
        const int suspect = kept_forward < kept_reverse ? pair.left : pair.right;
        warn("rib " + std::to_string(bad_level) + ": path collapsed, excluding endpoint vertex " +
             std::to_string(suspect) + " and pairing again");
        candidates.erase(std::remove(candidates.begin(), candidates.end(), suspect),
                         candidates.end());
        if (candidates.size() < 8)
            throw TooFewPoints("skeletonize: not enough endpoint candidates left");
    }

    for (int level = geometry::kRibLevelMin; level <= geometry::kRibLevelMax; ++level) {
        const int slot = level - geometry::kRibLevelMin;
        if (art.rib_paths.heavy_filter_warning[slot])
            warn("rib " + std::to_string(level) +
                 ": continuity filter dropped more than half of the path");
        std::vector<Point3> path;
        for (int idx : art.rib_paths.filtered[slot]) path.push_back(art.key_points.points[idx]);
        const resample::RibCurve curve = resample::fit_rib_curve(path, level);
        art.resampled.rib(level) = resample::resample_curve(curve, config.rib_sample_count(level));
    }
    return art;
}

GraphRegistrationResult register_graph(const PointCloud& source, const PointCloud& target,
                                       const io::RunConfig& config,
                                       const skeleton::EndpointTemplate& tmpl) {
    GraphRegistrationResult result;
    result.source_skeleton = skeletonize(source, config, tmpl);
    // Rib order transfers from the labeled source skeleton onto the target,
    // so the two endpoint sets being matched come from the same kind of
    // geometry (skeleton key points). A coarse rigid alignment of the raw
    // clouds seeds that match so it cannot lock one rib level off.
    const skeleton::EndpointTemplate source_template = skeleton::template_from_pairs(
        result.source_skeleton.key_points, result.source_skeleton.endpoint_pairs);
    const auto [coarse_alignment, coarse_report] =
        registration::icp_rigid(source, target, 50, 1e-3);

    // The deformation between the two anatomies is smooth, so per-rib mean
    // key displacements must agree across ribs. A rib whose displacement
    // stands apart had its endpoints transferred onto the wrong structure;
    // ban those endpoint vertices on the target side and pair again.
    std::vector<int> banned;
    for (int attempt = 0;; ++attempt) {
        result.target_skeleton =
            skeletonize(target, config, source_template, {}, coarse_alignment, banned);
        result.correspondence = resample::build_correspondence(
            result.source_skeleton.resampled, result.target_skeleton.resampled);

        std::array<Point3, 4> rib_disp{Point3::Zero(), Point3::Zero(), Point3::Zero(),
                                       Point3::Zero()};
        std::array<int, 4> rib_n{};
        for (const auto& p : result.correspondence.pairs) {
            rib_disp[p.rib_level - geometry::kRibLevelMin] += p.target - p.source;
            rib_n[p.rib_level - geometry::kRibLevelMin] += 1;
        }
        Point3 median = Point3::Zero();
        for (int axis = 0; axis < 3; ++axis) {
            std::array<double, 4> vals;
            for (int r = 0; r < 4; ++r) vals[r] = rib_disp[r](axis) / rib_n[r];
            std::sort(vals.begin(), vals.end());
            median(axis) = 0.5 * (vals[1] + vals[2]);
        }
        int bad_level = 0;
        double worst = 0.0;
        for (int r = 0; r < 4; ++r) {
            const double off = (rib_disp[r] / rib_n[r] - median).norm();
            if (off > 12.0 && off > worst) {
                worst = off;
                bad_level = geometry::kRibLevelMin + r;
            }
        }
        if (bad_level == 0) break;
        if (attempt + 1 >= 4)
            throw AmbiguousPairing("register_graph: rib " + std::to_string(bad_level) +
                                   " key displacement stays inconsistent with its neighbors");
        const auto& pair = result.target_skeleton.endpoint_pairs.level(bad_level);
        banned.push_back(pair.left);
        banned.push_back(pair.right);
    }
    result.source_waypoints = registration::plan_waypoints(result.source_skeleton.resampled);
    result.warped = registration::warp_nonrigid(source, result.correspondence, config.n_r);
    result.report = registration::evaluate(result.warped, target);
    result.report.method = "graph";
    return result;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void Manifest::record(const std::string& name, const std::string& relative_path,
                      const std::string& directory) {
    const std::string full = (std::filesystem::path(directory) / relative_path).string();
    const std::string bytes = io::read_file(full);
    entries_.push_back({name, relative_path, bytes.size(), fnv1a_hex(bytes)});
}

void Manifest::write(const std::string& path) const {
    json j;
    j["command"] = command_;
    j["artifacts"] = json::array();
    for (const Entry& e : entries_) {
        json a;
        a["name"] = e.name;
        a["path"] = e.path;
        a["bytes"] = e.bytes;
        a["fnv1a64"] = e.checksum;
        j["artifacts"].push_back(a);
    }
    io::write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace ribreg::pipeline
