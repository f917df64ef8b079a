#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ribreg/geometry.hpp"

namespace ribreg::skeleton {

/// Spanning tree over key points; edge weights are Euclidean distances.
struct SkeletonGraph {
    struct Edge {
        int a = 0;
        int b = 0;
        double weight = 0.0;
    };

    PointCloud vertices;
    std::vector<Edge> edges;
    std::vector<std::vector<int>> adjacency;

    double total_weight() const;
};

/// One labeled rib endpoint of a template cage.
struct LabeledEndpoint {
    Point3 position = Point3::Zero();
    int rib_level = 0;
    geometry::Side side = geometry::Side::Left;
};

/// The eight labeled endpoints (levels 2..5, both sides) used to transfer
/// rib order onto a candidate hull.
struct EndpointTemplate {
    std::vector<LabeledEndpoint> endpoints;

    void validate() const;  // throws InvalidSpec
    const LabeledEndpoint& find(int rib_level, geometry::Side side) const;
    double min_pairwise_distance() const;
    /// Shortest left-to-right endpoint distance over the four ribs.
    double min_rib_length() const;
};

/// Per rib level, the vertex indices of its two endpoints.
struct EndpointPairs {
    struct Pair {
        int left = -1;
        int right = -1;
    };
    std::array<Pair, 4> by_level{};  // rib levels 2..5

    Pair& level(int rib_level) { return by_level[rib_level - geometry::kRibLevelMin]; }
    const Pair& level(int rib_level) const { return by_level[rib_level - geometry::kRibLevelMin]; }
};

/// Raw and continuity-filtered tree paths per rib, as vertex indices.
struct RibPathSet {
    std::array<std::vector<int>, 4> raw;
    std::array<std::vector<int>, 4> filtered;
    std::array<bool, 4> heavy_filter_warning{};  // path lost > 50% of vertices

    const std::vector<int>& raw_path(int level) const { return raw[level - geometry::kRibLevelMin]; }
    const std::vector<int>& filtered_path(int level) const {
        return filtered[level - geometry::kRibLevelMin];
    }
};

/// Minimum spanning tree (Prim from vertex 0, ties to the lowest candidate
/// index). Throws TooFewPoints for fewer than 2 points.
SkeletonGraph build_mst(const PointCloud& points);

/// Indices of the strict convex hull vertices (ascending). Gift wrapping
/// with coplanar-face handling; near-planar clouds fall back to a 2D wrap
/// in the best-fit plane. Throws DegenerateInput when all points are
/// collinear.
std::vector<int> convex_hull_vertices(const PointCloud& points);

/// Hull vertices plus every point within `tolerance_mm` of the hull
/// boundary (ascending indices). Key points that miss the hull by a hair
/// still make valid endpoint candidates.
std::vector<int> near_hull_indices(const PointCloud& points, double tolerance_mm);

/// Transfer the template's rib/side labels onto candidate hull vertices:
/// rigid ICP aligns the eight template endpoints to the hull vertex set,
/// then labels transfer greedily by ascending match distance without vertex
/// reuse. `init`, when given, seeds the alignment (otherwise principal-axes
/// pre-alignments are tried). Throws AmbiguousPairing when a match lands
/// farther than half the shortest template rib.
EndpointPairs pair_endpoints(const PointCloud& vertices, const std::vector<int>& hull,
                             const EndpointTemplate& tmpl,
                             const std::optional<RigidTransform>& init = {});
EndpointPairs pair_endpoints(const PointCloud& candidate_hull, const EndpointTemplate& tmpl);

/// Labeled endpoint template taken from a skeleton's own paired endpoints;
/// used to carry rib order from one skeleton to another.
EndpointTemplate template_from_pairs(const PointCloud& vertices, const EndpointPairs& pairs);

/// Unique tree path from a to b, inclusive.
std::vector<int> tree_path(const SkeletonGraph& graph, int a, int b);

/// Continuity filter: keep the first two points, then append a point only
/// when the turn from the last kept segment stays within t_theta degrees.
std::vector<Point3> continuity_filter(const std::vector<Point3>& path, double t_theta_deg);

/// Per rib: tree path from the left endpoint to the right one, then the
/// continuity filter. Flags any rib whose filter drops more than half of
/// the path.
RibPathSet extract_rib_paths(const SkeletonGraph& graph, const EndpointPairs& pairs,
                             double t_theta_deg);

// --- artifact serialization ---

void write_edge_list_csv(const SkeletonGraph& graph, const std::string& path);
void write_endpoint_template_csv(const EndpointTemplate& tmpl, const std::string& path);
EndpointTemplate read_endpoint_template_csv(const std::string& path);

}  // namespace ribreg::skeleton
