#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ribreg/geometry.hpp"

namespace ribreg::som {

/// Rectangular self-organizing map: one 3D weight vector per lattice node.
struct SomGrid {
    int rows = 0;
    int cols = 0;
    std::vector<Point3> weights;  // row-major, rows*cols entries
    int epochs_trained = 0;

    int node_count() const { return rows * cols; }
    int index(int r, int c) const { return r * cols + c; }
    Point3& at(int r, int c) { return weights[index(r, c)]; }
    const Point3& at(int r, int c) const { return weights[index(r, c)]; }
};

/// Training schedule. Learning rate and neighborhood radius decay as
/// exp(-i/tau) with i the global sample iteration.
struct SomParams {
    double initial_learning_rate = 0.5;
    double learning_rate_tau = 1.0;
    double initial_radius = 1.0;  // in lattice units
    double radius_tau = 1.0;
    int epochs = 1;
    std::uint64_t seed = 0;

    /// Standard schedule: radius from max(rows, cols)/2 down to ~0.5 by the
    /// final iteration, learning rate down to 2% of its initial value.
    static SomParams standard(int rows, int cols, int epochs, std::size_t cloud_size,
                              double initial_learning_rate, std::uint64_t seed);
};

/// Lay the lattice out on the cloud's two dominant principal axes, spanning
/// +-2 standard deviations. Throws DegenerateCloud when the required axes
/// carry no variance. Deterministic; `seed` is kept for interface stability.
SomGrid init_grid(const PointCloud& cloud, int rows, int cols, std::uint64_t seed);

using EpochObserver = std::function<void(int epoch, const SomGrid& grid)>;

/// Competitive training: per sample, move every weight toward the sample by
/// lr * exp(-g^2 / (2 sigma^2)) with g the lattice distance to the best
/// matching unit (ties to the lowest row-major index). One seeded shuffle of
/// the cloud per epoch; bitwise deterministic for fixed inputs.
SomGrid train(SomGrid grid, const PointCloud& cloud, const SomParams& params,
              const EpochObserver& on_epoch = {});

/// All node weights as a cloud, row-major order.
PointCloud extract_key_points(const SomGrid& grid);

/// Mean distance from each cloud point to its best matching unit.
double quantization_error(const SomGrid& grid, const PointCloud& cloud);

}  // namespace ribreg::som
