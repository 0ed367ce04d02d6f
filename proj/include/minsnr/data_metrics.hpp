#pragma once

#include <cstdint>
#include <string>

#include "minsnr/common.hpp"

namespace minsnr {

enum class DatasetKind { GaussianMixture8, SwissRoll, Checkerboard };

/// A 2-D point cloud standardized to zero mean and unit per-axis variance.
struct ToyDataset {
    DatasetKind kind = DatasetKind::GaussianMixture8;
    Matrix points;
    std::uint64_t seed = 0;
};

ToyDataset make_dataset(DatasetKind kind, Index n, std::uint64_t seed);

/// Per-axis standardization (population variance).
Matrix standardize(const Matrix& points);

/// Monte-Carlo sliced 1-Wasserstein distance.
///
/// In two dimensions the projection angles are stratified: one uniform draw in
/// each of n_projections equal slices of [0, pi). Higher dimensions draw
/// normalized Gaussian directions.
double sliced_wasserstein(const Matrix& a, const Matrix& b, int n_projections = 128,
                          std::uint64_t seed = 0);

/// Exact 1-D Wasserstein-1 distance between two empirical distributions.
double wasserstein_1d(Vector a, Vector b);

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& text);

/// CSV with a header row `x0,x1,...`; one row per point.
void write_points_csv(const std::string& path, const Matrix& points);
Matrix read_points_csv(const std::string& path);

}  // namespace minsnr
