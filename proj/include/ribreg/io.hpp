#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "ribreg/geometry.hpp"

namespace ribreg::io {

enum class CloudFormat { XyzCsv, AsciiPly };

/// Pick a format from the file extension (.csv/.xyz -> CSV, .ply -> PLY).
CloudFormat format_from_path(const std::string& path);

/// Read a point cloud. CSV rows are `x,y,z[,label]`; PLY must be ascii 1.0
/// with a vertex element carrying x y z and an optional uchar label.
PointCloud read_point_cloud(const std::string& path, CloudFormat format);
PointCloud read_point_cloud(const std::string& path);

/// Write a point cloud with 6 decimal places. The write is atomic
/// (temp file + rename).
void write_point_cloud(const PointCloud& cloud, const std::string& path, CloudFormat format);
void write_point_cloud(const PointCloud& cloud, const std::string& path);

/// Pipeline hyperparameters. Defaults follow the published configuration:
/// 20x20 then 5x8 SOM grids, 60 degree continuity threshold, per-rib sample
/// counts {6,6,8,10} and 10 local registration neighbors.
struct RunConfig {
    int som_stage1_rows = 20;
    int som_stage1_cols = 20;
    int som_stage2_rows = 5;
    int som_stage2_cols = 8;
    double som_learning_rate = 0.5;
    int som_stage1_epochs = 200;
    int som_stage2_epochs = 500;
    std::uint64_t seed = 1;
    double t_theta_deg = 60.0;
    std::array<int, 4> rib_samples{6, 6, 8, 10};  // rib levels 2..5
    int n_r = 10;
    int downsample_count = 2000;

    bool operator==(const RunConfig&) const = default;

    int rib_sample_count(int level) const { return rib_samples[level - geometry::kRibLevelMin]; }
    int total_rib_samples() const;

    /// Throws SchemaError when a field violates its range.
    void validate() const;
};

/// Read a `key = value` config file. Missing keys take the defaults above;
/// unknown keys and out-of-range values raise SchemaError.
RunConfig read_config(const std::string& path);
void write_config(const RunConfig& config, const std::string& path);

/// Atomically replace `path` with `content` (write temp, then rename).
void write_file_atomic(const std::string& path, const std::string& content);

/// Entire file as a string; throws IoError when unreadable.
std::string read_file(const std::string& path);

}  // namespace ribreg::io
