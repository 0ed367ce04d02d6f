#include "minsnr/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace minsnr {

GradientBundle make_bundle(const Matrix& grads) {
    GradientBundle b;
    b.grads = grads;
    b.counts.assign(grads.cols(), 1);
    b.bin_edges.resize(grads.cols() + 1);
    for (Index i = 0; i <= grads.cols(); ++i) b.bin_edges[i] = static_cast<int>(i + 1);
    return b;
}

void check(const GradientBundle& b) {
    if (b.bins() < 1) throw std::invalid_argument("gradient bundle has no bins");
    if (static_cast<Index>(b.counts.size()) != b.bins())
        throw std::invalid_argument("bundle counts do not match bin count");
    if (std::any_of(b.counts.begin(), b.counts.end(), [](long c) { return c <= 0; }))
        throw std::invalid_argument("bundle counts must be positive");
    if (static_cast<Index>(b.bin_edges.size()) != b.bins() + 1)
        throw std::invalid_argument("bundle needs bins + 1 edges");
    for (std::size_t i = 1; i < b.bin_edges.size(); ++i) {
        if (b.bin_edges[i] <= b.bin_edges[i - 1])
            throw std::invalid_argument("bundle edges must be strictly increasing");
    }
    if (!b.grads.allFinite()) throw std::invalid_argument("bundle gradients are not finite");
}

GradientBundle normalized(const GradientBundle& bundle) {
    GradientBundle out = bundle;
    const double mean_sq = bundle.grads.colwise().squaredNorm().mean();
    if (mean_sq > 0.0) out.grads /= std::sqrt(mean_sq);
    return out;
}

SimplexWeights::SimplexWeights(Vector w) : w_(std::move(w)) {
    if (w_.size() < 1) throw std::invalid_argument("simplex weights must be nonempty");
    if (!w_.allFinite() || (w_.array() < 0.0).any())
        throw std::invalid_argument("simplex weights must be finite and nonnegative");
    if (std::abs(w_.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("simplex weights must sum to 1");
}

SimplexWeights SimplexWeights::project(const Vector& raw) {
    Vector w = raw.cwiseMax(0.0);
    const double total = w.sum();
    if (!(total > 0.0) || !std::isfinite(total))
        throw std::invalid_argument("cannot normalize weights without positive mass");
    return SimplexWeights(w / total);
}

SimplexWeights SimplexWeights::uniform(Index n) {
    return SimplexWeights(Vector::Constant(n, 1.0 / static_cast<double>(n)));
}

Matrix regularized_gram(const GradientBundle& bundle, double lambda) {
    Matrix gram = bundle.grads.transpose() * bundle.grads;
    gram.diagonal().array() += lambda;
    return gram;
}

double quadratic_objective(const Matrix& gram, const Vector& w) {
    return w.dot(gram * w);
}

Vector combined_gradient(const GradientBundle& bundle, const SimplexWeights& w) {
    if (w.size() != bundle.bins())
        throw std::invalid_argument("weight count does not match bundle bins");
    return bundle.grads * w.values();
}

double regularized_objective(const GradientBundle& bundle, const SimplexWeights& w, double lambda) {
    return combined_gradient(bundle, w).squaredNorm() + lambda * w.values().squaredNorm();
}

FrankWolfeResult min_norm_frank_wolfe(const GradientBundle& bundle, double lambda, double tol,
                                      int max_iter) {
    check(bundle);
    if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    const Matrix gram = regularized_gram(bundle, lambda);
    const Index B = gram.rows();

    // Start from the best vertex.
    Index start = 0;
    gram.diagonal().minCoeff(&start);
    Vector w = Vector::Zero(B);
    w[start] = 1.0;
    Vector mw = gram.col(start);
    double value = w.dot(mw);

    FrankWolfeResult result{SimplexWeights(w), value, 0.0, 0, false, {value}};
    for (int it = 0; it < max_iter; ++it) {
        // Gradient is 2 M w; the linear minimizer over the simplex is a vertex.
        Index j = 0;
        mw.minCoeff(&j);
        const double gap = 2.0 * (value - mw[j]);
        result.gap = gap;
        result.iterations = it;
        if (gap <= tol) {
            result.converged = true;
            break;
        }
        // Exact line search along d = e_j - w.
        const double d_mw = mw[j] - value;
        const double d_md = gram(j, j) - 2.0 * mw[j] + value;
        double step = d_md > 0.0 ? std::clamp(-d_mw / d_md, 0.0, 1.0) : 1.0;
        if (step <= 0.0) {
            result.converged = true;
            break;
        }
        w *= 1.0 - step;
        w[j] += step;
        mw = (1.0 - step) * mw + step * gram.col(j);
        const double next = w.dot(mw);
        // Line search is exact; guard against rounding drift.
        value = std::min(next, value);
        result.trace.push_back(value);
        result.iterations = it + 1;
    }
    if (!result.converged) {
        Index j = 0;
        mw.minCoeff(&j);
        result.gap = 2.0 * (value - mw[j]);
        result.converged = result.gap <= tol;
    }
    result.weights = SimplexWeights::project(w);
    result.objective = quadratic_objective(gram, result.weights.values());
    return result;
}

SimplexWeights min_norm_two_task(const Vector& g1, const Vector& g2) {
    if (g1.size() != g2.size()) throw std::invalid_argument("gradient dimensions differ");
    const Vector diff = g1 - g2;
    const double denom = diff.squaredNorm();
    if (denom == 0.0) return SimplexWeights::uniform(2);
    const double w2 = std::clamp(diff.dot(g1) / denom, 0.0, 1.0);
    Vector w(2);
    w << 1.0 - w2, w2;
    return SimplexWeights(w);
}

namespace {

Vector softmax(const Vector& beta) {
    const Vector e = (beta.array() - beta.maxCoeff()).exp();
    return e / e.sum();
}

}  // namespace

SimplexWeights ugd_solve(const GradientBundle& bundle, const UgdState& state) {
    check(bundle);
    if (!(state.lambda >= 0.0) || !(state.lr > 0.0) || state.iters < 1)
        throw std::invalid_argument("invalid UGD state (need lambda >= 0, lr > 0, iters >= 1)");
    const Matrix gram = regularized_gram(bundle, state.lambda);
    Vector beta = state.beta.size() == 0 ? Vector::Zero(bundle.bins()) : state.beta;
    if (beta.size() != bundle.bins()) throw std::invalid_argument("UGD logits do not match bins");

    for (int it = 0; it < state.iters; ++it) {
        const Vector w = softmax(beta);
        const Vector grad_w = 2.0 * (gram * w);
        const double value = w.dot(grad_w) / 2.0;
        if (!std::isfinite(value)) {
            throw std::runtime_error("UGD objective became non-finite at iteration " +
                                     std::to_string(it));
        }
        // Softmax Jacobian: dw_i/dbeta_k = w_i (delta_ik - w_k).
        const Vector grad_beta = (w.array() * (grad_w.array() - w.dot(grad_w))).matrix();
        beta -= state.lr * grad_beta;
        if (!beta.allFinite())
            throw std::runtime_error("UGD logits became non-finite at iteration " + std::to_string(it));
    }
    return SimplexWeights::project(softmax(beta));
}

SimplexWeights brute_force_min_norm(const GradientBundle& bundle, double lambda, double grid_step) {
    check(bundle);
    const Index B = bundle.bins();
    if (B > 4) throw std::invalid_argument("brute-force grid search supports at most 4 bins");
    if (!(grid_step > 0.0 && grid_step <= 1.0)) throw std::invalid_argument("grid step must be in (0, 1]");
    if (B == 1) return SimplexWeights(Vector::Ones(1));

    const Matrix gram = regularized_gram(bundle, lambda);
    const auto n = static_cast<long>(std::llround(1.0 / grid_step));
    Vector best = Vector::Zero(B);
    double best_value = std::numeric_limits<double>::infinity();
    Vector w(B);
    std::vector<long> k(B - 1, 0);

    // Enumerate nonnegative integer compositions k_0 + ... + k_{B-2} <= n.
    while (true) {
        long used = 0;
        for (Index i = 0; i + 1 < B; ++i) {
            w[i] = static_cast<double>(k[i]) / n;
            used += k[i];
        }
        w[B - 1] = static_cast<double>(n - used) / n;
        const double value = quadratic_objective(gram, w);
        if (value < best_value) {
            best_value = value;
            best = w;
        }
        Index pos = B - 2;
        while (pos >= 0) {
            ++k[pos];
            long sum = 0;
            for (long v : k) sum += v;
            if (sum <= n) break;
            k[pos] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    return SimplexWeights::project(best);
}

bool stationarity_check(const GradientBundle& bundle, const SimplexWeights& w, double tol) {
    return combined_gradient(bundle, w).norm() <= tol;
}

void write_weights_csv(const std::string& path, const SimplexWeights& w,
                       const std::vector<int>& bin_edges) {
    if (static_cast<Index>(bin_edges.size()) != w.size() + 1)
        throw std::invalid_argument("weights CSV needs bins + 1 edges");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "bin_index,low_t,high_t,weight\n" << std::setprecision(17);
    for (Index b = 0; b < w.size(); ++b) {
        out << b << ',' << bin_edges[b] << ',' << bin_edges[b + 1] - 1 << ',' << w[b] << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

BinWeights read_weights_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read weights file " + path);
    std::string line;
    std::getline(in, line);
    if (line.rfind("bin_index,low_t,high_t,weight", 0) != 0)
        throw std::runtime_error(path + ": expected header bin_index,low_t,high_t,weight");
    BinWeights out;
    int expected = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() != 4) throw std::runtime_error(path + ": malformed row '" + line + "'");
        if (std::stoi(cells[0]) != expected++)
            throw std::runtime_error(path + ": bin indices must be consecutive from 0");
        const int low = std::stoi(cells[1]);
        const int high = std::stoi(cells[2]);
        if (!out.edges.empty() && out.edges.back() != low)
            throw std::runtime_error(path + ": bins must be contiguous");
        if (out.edges.empty()) out.edges.push_back(low);
        out.edges.push_back(high + 1);
        out.weights.push_back(std::stod(cells[3]));
    }
    if (out.weights.empty()) throw std::runtime_error(path + ": no bins");
    return out;
}

}  // namespace minsnr
