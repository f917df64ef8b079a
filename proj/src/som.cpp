#include "ribreg/som.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ribreg/kdtree.hpp"
#include "ribreg/rng.hpp"

namespace ribreg::som {

namespace {

// Principal axes of a cloud, eigenvalues descending, signs canonicalized so
// the largest-magnitude component of each axis is positive.
struct Pca {
    Point3 centroid;
    Eigen::Matrix3d axes;       // columns, descending variance
    Eigen::Vector3d stddevs;
};

Pca principal_axes(const PointCloud& cloud) {
    Pca out;
    out.centroid = cloud.centroid();
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const Point3& p : cloud.points) {
        const Point3 d = p - out.centroid;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(std::max<std::size_t>(cloud.size(), 1));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    for (int i = 0; i < 3; ++i) {
        const int src = 2 - i;  // solver sorts ascending
        Eigen::Vector3d axis = eig.eigenvectors().col(src);
        int max_idx = 0;
        axis.cwiseAbs().maxCoeff(&max_idx);
        if (axis(max_idx) < 0.0) axis = -axis;
        out.axes.col(i) = axis;
        out.stddevs(i) = std::sqrt(std::max(eig.eigenvalues()(src), 0.0));
    }
    return out;
}

}  // namespace

SomParams SomParams::standard(int rows, int cols, int epochs, std::size_t cloud_size,
                              double initial_learning_rate, std::uint64_t seed) {
    SomParams p;
    p.initial_learning_rate = initial_learning_rate;
    p.epochs = epochs;
    p.seed = seed;
    // The lattice starts PCA-aligned, so the neighborhood only needs to
    // refine it. Radii near max(rows, cols)/2 re-self-organize the map into
    // an arbitrary orientation, which breaks endpoint label transfer between
    // skeletons.
    p.initial_radius = std::min(std::max(rows, cols) / 2.0, 2.0);
    const double total = static_cast<double>(epochs) * static_cast<double>(std::max<std::size_t>(cloud_size, 1));
    p.learning_rate_tau = total / std::log(50.0);
    p.radius_tau = p.initial_radius > 0.5
                       ? total / std::log(p.initial_radius / 0.5)
                       : std::numeric_limits<double>::infinity();
    return p;
}

SomGrid init_grid(const PointCloud& cloud, int rows, int cols, std::uint64_t seed) {
    (void)seed;
    if (cloud.empty()) throw EmptyCloud("init_grid: empty cloud");
    if (rows < 1 || cols < 1) throw InvalidSpec("init_grid: grid dimensions must be >= 1");

    const Pca pca = principal_axes(cloud);
    if (cols > 1 && pca.stddevs(0) <= 1e-9)
        throw DegenerateCloud("init_grid: no variance along the first principal axis");
    if (rows > 1 && pca.stddevs(1) <= 1e-9)
        throw DegenerateCloud("init_grid: no variance along the second principal axis");

    SomGrid grid;
    grid.rows = rows;
    grid.cols = cols;
    grid.weights.resize(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        const double ur = rows > 1 ? 2.0 * r / (rows - 1) - 1.0 : 0.0;
        for (int c = 0; c < cols; ++c) {
            const double uc = cols > 1 ? 2.0 * c / (cols - 1) - 1.0 : 0.0;
            grid.at(r, c) = pca.centroid + pca.axes.col(0) * (2.0 * pca.stddevs(0) * uc) +
                            pca.axes.col(1) * (2.0 * pca.stddevs(1) * ur);
        }
    }
    return grid;
}

SomGrid train(SomGrid grid, const PointCloud& cloud, const SomParams& params,
              const EpochObserver& on_epoch) {
    if (cloud.empty()) throw EmptyCloud("train: empty cloud");
    if (grid.node_count() == 0) throw InvalidSpec("train: empty grid");

    const int rows = grid.rows, cols = grid.cols;
    const int nodes = grid.node_count();
    const int g2_max = (rows - 1) * (rows - 1) + (cols - 1) * (cols - 1);
    std::vector<double> theta(g2_max + 1, 0.0);

    std::vector<int> order(cloud.size());
    std::iota(order.begin(), order.end(), 0);
    auto eng = rng::make_engine(params.seed);

    long long iter = 0;
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        rng::shuffle(order, eng);
        for (int sample_idx : order) {
            const Point3& sample = cloud.points[sample_idx];
            const double lr =
                params.initial_learning_rate * std::exp(-static_cast<double>(iter) / params.learning_rate_tau);
            const double sigma =
                std::max(params.initial_radius * std::exp(-static_cast<double>(iter) / params.radius_tau), 1e-6);

            // Neighborhood factor by squared lattice distance; base^g2 decays
            // fast enough that the tail can be zero-filled.
            const double base = std::exp(-1.0 / (2.0 * sigma * sigma));
            theta[0] = 1.0;
            int filled = g2_max;
            for (int j = 1; j <= g2_max; ++j) {
                theta[j] = theta[j - 1] * base;
                if (theta[j] < 1e-16) {
                    filled = j;
                    break;
                }
            }
            for (int j = filled + 1; j <= g2_max; ++j) theta[j] = 0.0;

            int bmu = 0;
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < nodes; ++i) {
                const double d2 = (grid.weights[i] - sample).squaredNorm();
                if (d2 < best) {
                    best = d2;
                    bmu = i;
                }
            }
            const int br = bmu / cols, bc = bmu % cols;

            for (int r = 0; r < rows; ++r) {
                const int dr2 = (r - br) * (r - br);
                Point3* wrow = &grid.weights[static_cast<std::size_t>(r) * cols];
                for (int c = 0; c < cols; ++c) {
                    const double th = theta[dr2 + (c - bc) * (c - bc)];
                    if (th == 0.0) continue;
                    const double step = th * lr;
                    wrow[c] += step * (sample - wrow[c]);
                }
            }
            ++iter;
        }
        grid.epochs_trained += 1;
        if (on_epoch) on_epoch(epoch, grid);
    }
    return grid;
}

PointCloud extract_key_points(const SomGrid& grid) {
    PointCloud out;
    out.points = grid.weights;
    return out;
}

double quantization_error(const SomGrid& grid, const PointCloud& cloud) {
    if (cloud.empty() || grid.weights.empty()) throw EmptyCloud("quantization_error: empty input");
    geometry::KdTree3 tree(grid.weights);
    double sum = 0.0;
    for (const Point3& p : cloud.points) sum += tree.nearest(p).second;
    return sum / static_cast<double>(cloud.size());
}

}  // namespace ribreg::som
