#include "minsnr/data_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace minsnr {

namespace {

constexpr double kPi = std::numbers::pi;

Matrix raw_points(DatasetKind kind, Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Matrix p(n, 2);
    switch (kind) {
        case DatasetKind::GaussianMixture8: {
            std::uniform_int_distribution<int> mode(0, 7);
            for (Index i = 0; i < n; ++i) {
                const double angle = 2.0 * kPi * mode(rng) / 8.0;
                p(i, 0) = 4.0 * std::cos(angle) + 0.3 * normal(rng);
                p(i, 1) = 4.0 * std::sin(angle) + 0.3 * normal(rng);
            }
            break;
        }
        case DatasetKind::SwissRoll: {
            for (Index i = 0; i < n; ++i) {
                const double r = 1.5 * kPi * (1.0 + 2.0 * uniform(rng));
                p(i, 0) = r * std::cos(r) + 0.5 * normal(rng);
                p(i, 1) = r * std::sin(r) + 0.5 * normal(rng);
            }
            break;
        }
        case DatasetKind::Checkerboard: {
            // 4 x 4 board on [-2, 2)^2, points only in the dark squares.
            std::uniform_int_distribution<int> column(0, 3);
            std::uniform_int_distribution<int> pair(0, 1);
            for (Index i = 0; i < n; ++i) {
                const int cx = column(rng);
                const int cy = 2 * pair(rng) + cx % 2;
                p(i, 0) = cx + uniform(rng) - 2.0;
                p(i, 1) = cy + uniform(rng) - 2.0;
            }
            break;
        }
    }
    return p;
}

}  // namespace

Matrix standardize(const Matrix& points) {
    const Eigen::RowVectorXd mean = points.colwise().mean();
    Matrix centered = points.rowwise() - mean;
    const Eigen::RowVectorXd sd =
        (centered.colwise().squaredNorm() / static_cast<double>(points.rows())).cwiseSqrt();
    for (Index j = 0; j < centered.cols(); ++j) {
        if (sd[j] > 0.0) centered.col(j) /= sd[j];
    }
    return centered;
}

ToyDataset make_dataset(DatasetKind kind, Index n, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("dataset needs at least 2 points");
    std::mt19937_64 rng(derive_seed(seed, "dataset"));
    return {kind, standardize(raw_points(kind, n, rng)), seed};
}

double wasserstein_1d(Vector a, Vector b) {
    if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a.size() == b.size()) return (a - b).cwiseAbs().mean();

    // Integrate |F_a - F_b| over the merged support.
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    Index i = 0, j = 0;
    double fa = 0.0, fb = 0.0, total = 0.0;
    double x = std::min(a[0], b[0]);
    while (i < a.size() || j < b.size()) {
        const double next = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
        total += std::abs(fa - fb) * (next - x);
        x = next;
        while (i < a.size() && a[i] == x) {
            fa += 1.0 / na;
            ++i;
        }
        while (j < b.size() && b[j] == x) {
            fb += 1.0 / nb;
            ++j;
        }
    }
    return total;
}

double sliced_wasserstein(const Matrix& a, const Matrix& b, int n_projections, std::uint64_t seed) {
    if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("empty point set");
    if (a.cols() != b.cols()) throw std::invalid_argument("point sets differ in dimension");
    if (n_projections < 1) throw std::invalid_argument("need at least one projection");
    const Index d = a.cols();
    std::mt19937_64 rng(derive_seed(seed, "projections"));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    double total = 0.0;
    Vector dir(d);
    for (int k = 0; k < n_projections; ++k) {
        if (d == 1) {
            dir[0] = 1.0;
        } else if (d == 2) {
            const double angle = kPi * (k + uniform(rng)) / n_projections;
            dir << std::cos(angle), std::sin(angle);
        } else {
            do {
                for (Index j = 0; j < d; ++j) dir[j] = normal(rng);
            } while (dir.norm() == 0.0);
            dir.normalize();
        }
        total += wasserstein_1d(a * dir, b * dir);
    }
    return total / n_projections;
}

std::string to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::GaussianMixture8: return "gmm8";
        case DatasetKind::SwissRoll: return "swissroll";
        case DatasetKind::Checkerboard: return "checkerboard";
    }
    return "?";
}

DatasetKind parse_dataset_kind(const std::string& text) {
    if (text == "gmm8" || text == "eight-gaussians") return DatasetKind::GaussianMixture8;
    if (text == "swissroll") return DatasetKind::SwissRoll;
    if (text == "checkerboard") return DatasetKind::Checkerboard;
    throw std::invalid_argument("unknown dataset '" + text + "' (expected gmm8|swissroll|checkerboard)");
}

void write_points_csv(const std::string& path, const Matrix& points) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (Index j = 0; j < points.cols(); ++j) out << (j ? "," : "") << 'x' << j;
    out << '\n' << std::setprecision(17);
    for (Index i = 0; i < points.rows(); ++i) {
        for (Index j = 0; j < points.cols(); ++j) out << (j ? "," : "") << points(i, j);
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

Matrix read_points_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    std::getline(in, line);
    const auto cols = static_cast<Index>(std::count(line.begin(), line.end(), ',') + 1);
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        Index c = 0;
        while (std::getline(row, cell, ',')) {
            values.push_back(std::stod(cell));
            ++c;
        }
        if (c != cols) throw std::runtime_error(path + ": ragged row '" + line + "'");
    }
    const Index rows = static_cast<Index>(values.size()) / cols;
    Matrix out(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) out(i, j) = values[static_cast<std::size_t>(i * cols + j)];
    return out;
}

}  // namespace minsnr
