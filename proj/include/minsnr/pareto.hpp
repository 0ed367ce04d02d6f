#pragma once

#include <string>
#include <vector>

#include "minsnr/common.hpp"

namespace minsnr {

/// Per-bin parameter gradients of the multi-task diffusion objective.
struct GradientBundle {
    /// D x B; column b is the bin-averaged gradient of bin b.
    Matrix grads;
    std::vector<long> counts;
    /// B+1 step boundaries; bin b covers [bin_edges[b], bin_edges[b+1]).
    std::vector<int> bin_edges;

    Index bins() const { return grads.cols(); }
    Index dim() const { return grads.rows(); }
};

/// Bundle from explicit gradient columns, unit counts and edges 1..B+1.
GradientBundle make_bundle(const Matrix& grads);

/// Throws std::invalid_argument when shapes, counts or edges are inconsistent.
void check(const GradientBundle& bundle);

/// Rescales the gradients so the mean squared column norm is 1.
/// Leaves the argmin of the min-norm problem unchanged; lambda becomes relative.
GradientBundle normalized(const GradientBundle& bundle);

/// Nonnegative weights that sum to one.
class SimplexWeights {
public:
    /// Validates: entries >= 0 and |sum - 1| <= 1e-9.
    explicit SimplexWeights(Vector w);

    const Vector& values() const { return w_; }
    Index size() const { return w_.size(); }
    double operator[](Index i) const { return w_[i]; }

    /// Clips negatives to zero and rescales. Throws if nothing positive remains.
    static SimplexWeights project(const Vector& raw);
    static SimplexWeights uniform(Index n);

private:
    Vector w_;
};

/// || sum_b w_b g_b ||^2 + lambda * sum_b w_b^2
double regularized_objective(const GradientBundle& bundle, const SimplexWeights& w, double lambda);

/// Same objective on raw weights through the Gram form w^T (G^T G + lambda I) w.
double quadratic_objective(const Matrix& gram, const Vector& w);

/// G^T G + lambda I.
Matrix regularized_gram(const GradientBundle& bundle, double lambda);

struct FrankWolfeResult {
    SimplexWeights weights;
    double objective = 0.0;
    double gap = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Objective after every iterate, starting with the initial vertex.
    std::vector<double> trace;
};

inline constexpr double kFrankWolfeTol = 1e-8;
inline constexpr int kFrankWolfeMaxIter = 10000;

/// Frank-Wolfe with exact line search; stops once the Wolfe duality gap is <= tol.
/// A result is returned either way; `converged` flags whether the gap criterion was met.
FrankWolfeResult min_norm_frank_wolfe(const GradientBundle& bundle, double lambda,
                                      double tol = kFrankWolfeTol,
                                      int max_iter = kFrankWolfeMaxIter);

/// Closed-form unregularized minimizer for two tasks.
SimplexWeights min_norm_two_task(const Vector& g1, const Vector& g2);

struct UgdState {
    /// Initial logits; empty means zeros (uniform weights).
    Vector beta;
    double lambda = 1e-2;
    double lr = 0.1;
    int iters = 500;
};

/// Gradient descent on softmax logits of the regularized min-norm objective.
SimplexWeights ugd_solve(const GradientBundle& bundle, const UgdState& state);

/// Best point of a simplex grid. Refuses more than 4 bins.
SimplexWeights brute_force_min_norm(const GradientBundle& bundle, double lambda,
                                    double grid_step);

/// True iff || sum_b w_b g_b || <= tol.
bool stationarity_check(const GradientBundle& bundle, const SimplexWeights& w, double tol);

/// sum_b w_b g_b
Vector combined_gradient(const GradientBundle& bundle, const SimplexWeights& w);

/// CSV `bin_index,low_t,high_t,weight`; high_t is inclusive.
void write_weights_csv(const std::string& path, const SimplexWeights& w,
                       const std::vector<int>& bin_edges);

struct BinWeights {
    std::vector<double> weights;
    std::vector<int> edges;
};
BinWeights read_weights_csv(const std::string& path);

}  // namespace minsnr
