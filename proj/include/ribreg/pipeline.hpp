#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ribreg/io.hpp"
#include "ribreg/registration.hpp"
#include "ribreg/resample.hpp"
#include "ribreg/skeleton.hpp"
#include "ribreg/som.hpp"

namespace ribreg::pipeline {

/// Everything produced while turning one cloud into a resampled skeleton:
/// two SOM stages, the spanning tree, endpoint pairing and per-rib curves.
struct SkeletonArtifacts {
    som::SomGrid stage1;
    som::SomGrid stage2;
    PointCloud stage1_cloud;  // unified cloud (stage-1 node weights)
    PointCloud key_points;    // stage-2 node weights
    skeleton::SkeletonGraph mst;
    std::vector<int> hull;
    skeleton::EndpointPairs endpoint_pairs;
    skeleton::RibPathSet rib_paths;
    resample::ResampledSkeleton resampled;
    std::vector<std::string> warnings;
};

/// Labeled endpoints of the default synthetic cage; used to transfer rib
/// order when no explicit template is supplied.
skeleton::EndpointTemplate default_template();

using WarningSink = std::function<void(const std::string&)>;

/// Full skeleton chain: SOM (twice), MST, hull, endpoint pairing, per-rib
/// path extraction and continuity filtering, cubic fit and resampling.
/// Warnings are collected on the result and also streamed to `warn` as they
/// occur (so they survive a failure in a later stage). `pairing_init`,
/// when given, seeds the endpoint-template alignment (used when the
/// template comes from another cloud whose pose is already known).
SkeletonArtifacts skeletonize(const PointCloud& cloud, const io::RunConfig& config,
                              const skeleton::EndpointTemplate& tmpl,
                              const WarningSink& warn = {},
                              const std::optional<RigidTransform>& pairing_init = {},
                              const std::vector<int>& banned_endpoints = {});

struct GraphRegistrationResult {
    SkeletonArtifacts source_skeleton;
    SkeletonArtifacts target_skeleton;
    resample::Correspondence correspondence;
    std::vector<registration::Waypoint> source_waypoints;
    PointCloud warped;
    registration::RegistrationReport report;
};

/// Skeleton-graph registration of source onto target: skeletonize both
/// clouds, pair resampled key points per rib, warp with locally rigid
/// transforms, and evaluate.
GraphRegistrationResult register_graph(const PointCloud& source, const PointCloud& target,
                                       const io::RunConfig& config,
                                       const skeleton::EndpointTemplate& tmpl);

/// Artifact list for a pipeline run; checksummed for reproducibility checks.
class Manifest {
public:
    explicit Manifest(std::string command) : command_(std::move(command)) {}

    /// Record an artifact that already exists on disk (path stored relative
    /// to the output directory).
    void record(const std::string& name, const std::string& relative_path,
                const std::string& directory);

    void write(const std::string& path) const;

private:
    struct Entry {
        std::string name;
        std::string path;
        std::uint64_t bytes;
        std::string checksum;
    };
    std::string command_;
    std::vector<Entry> entries_;
};

/// FNV-1a 64-bit checksum, hex encoded.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace ribreg::pipeline
