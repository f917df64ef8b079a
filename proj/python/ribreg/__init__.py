"""Skeleton-graph non-rigid registration of rib-cartilage point clouds."""

from ._ribreg import (
    RibregError,
    apply_transform,
    build_mst,
    continuity_filter,
    convex_hull_vertices,
    deform_cage,
    downsample,
    evaluate,
    generate_cage,
    hausdorff_distance,
    icp_rigid,
    kabsch_fit,
    mean_nn_distance,
    nearest_neighbors,
    register_graph,
    som_key_points,
    warp_nonrigid,
    __version__,
)

__all__ = [
    "RibregError",
    "apply_transform",
    "build_mst",
    "continuity_filter",
    "convex_hull_vertices",
    "deform_cage",
    "downsample",
    "evaluate",
    "generate_cage",
    "hausdorff_distance",
    "icp_rigid",
    "kabsch_fit",
    "mean_nn_distance",
    "nearest_neighbors",
    "register_graph",
    "som_key_points",
    "warp_nonrigid",
    "__version__",
]
