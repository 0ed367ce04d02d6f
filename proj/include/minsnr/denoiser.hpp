#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "minsnr/common.hpp"
#include "minsnr/schedule.hpp"
#include "minsnr/weighting.hpp"

namespace minsnr {

/// Fully-connected denoiser parameters.
///
/// layer_dims runs from the data dimension through the hidden widths back to
/// the data dimension, e.g. {2, 128, 128, 128, 2}. The first layer also sees
/// the timestep embedding, so its fan-in is layer_dims[0] + embed_dim.
/// theta stores each layer as a row-major (out x in) weight block followed by
/// its bias.
struct DenoiserParams {
    Vector theta;
    std::vector<int> layer_dims;
    int embed_dim = 16;
    int data_dim = 2;
    std::uint64_t seed = 0;

    /// Offset and length of the last layer's block (weights and bias).
    std::pair<Index, Index> final_layer_block() const;
};

std::size_t parameter_count(std::span<const int> layer_dims, int embed_dim);

/// Seeded init: hidden weights ~ N(0, 1/fan_in), biases zero, final layer zero.
DenoiserParams init_params(std::vector<int> layer_dims, int embed_dim, int data_dim,
                           std::uint64_t seed);

/// Throws std::invalid_argument when theta does not fit the layout or holds non-finite values.
void check(const DenoiserParams& params);

/// Sinusoidal features of t/T with geometrically spaced frequencies in [1, 256].
Vector time_embedding(Step t, int T, int embed_dim);

struct Prediction {
    Matrix values;
    PredictionTarget target = PredictionTarget::X0;
};

/// Network output for a batch, interpreted as `target`.
Prediction forward(const DenoiserParams& params, const Matrix& x_t, std::span<const Step> t, int T,
                   PredictionTarget target);

struct LossAndGrad {
    double loss = 0.0;
    Vector grad;
};

/// mean_i w_i ||y_i - f(x_i, t_i)||^2 and its exact gradient with respect to theta.
LossAndGrad regression_loss_and_grad(const DenoiserParams& params, const Matrix& x_t,
                                     std::span<const Step> t, int T, const Matrix& y_true,
                                     const Vector& sample_weights);

/// Regression target for the given prediction space: x0, eps or alpha*eps - sigma*x0.
Matrix regression_target(const Matrix& x0, const Matrix& noise, std::span<const Step> t,
                         const Schedule& schedule, PredictionTarget target);

/// x_t = alpha_t x0 + sigma_t eps, row by row.
Matrix sample_forward(const Matrix& x0, std::span<const Step> t, const Matrix& noise,
                      const Schedule& schedule);

/// Weighted diffusion loss for one batch: mean over samples of w(t) ||target - prediction||^2.
LossAndGrad loss_and_grad(const DenoiserParams& params, const Matrix& x0, std::span<const Step> t,
                          const Matrix& noise, const Schedule& schedule,
                          const WeightStrategy& strategy, PredictionTarget target);

/// Re-expresses a prediction in another target space (routes through x0).
Prediction convert_prediction(const Prediction& pred, PredictionTarget to, const Matrix& x_t,
                              std::span<const Step> t, const Schedule& schedule);

/// Checkpoint: one line of JSON header, then theta as little-endian float64.
void write_checkpoint(const std::string& path, const DenoiserParams& params, long iteration);

struct Checkpoint {
    DenoiserParams params;
    long iteration = 0;
};
Checkpoint read_checkpoint(const std::string& path);

}  // namespace minsnr
