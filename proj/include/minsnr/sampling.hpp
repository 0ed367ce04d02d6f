#pragma once

#include <cstdint>
#include <vector>

#include "minsnr/common.hpp"
#include "minsnr/denoiser.hpp"
#include "minsnr/schedule.hpp"

namespace minsnr {

enum class SamplerKind { Ancestral, Deterministic };

struct SamplerConfig {
    SamplerKind kind = SamplerKind::Deterministic;
    int steps = 100;
    std::uint64_t seed = 0;
};

/// One reverse update from t to t_prev given a clean-data estimate.
///
/// Deterministic: x_prev = alpha_prev x0_hat + sigma_prev eps_hat, eps_hat implied by (x_t, x0_hat).
/// Ancestral: Gaussian posterior q(x_prev | x_t, x0_hat) sampled with `noise`.
/// t_prev = 0 returns x0_hat.
Matrix reverse_step(const Matrix& pred_x0, const Matrix& x_t, Step t, Step t_prev,
                    const Schedule& schedule, SamplerKind kind, const Matrix& noise);

/// Interpolates between the two rules: eta = 0 is deterministic, eta = 1 ancestral.
Matrix reverse_step_eta(const Matrix& pred_x0, const Matrix& x_t, Step t, Step t_prev,
                        const Schedule& schedule, double eta, const Matrix& noise);

/// Standard deviation of the reverse posterior q(x_prev | x_t, x0).
double posterior_stddev(const Schedule& schedule, Step t, Step t_prev);

/// Uniform strictly decreasing step subsequence starting at `first`.
std::vector<Step> sampling_steps(Step first, int steps);

/// Runs the reverse process from seeded N(0, I) noise. Epsilon-target models
/// start at the last step with alpha > 0, where x0 is recoverable.
Matrix generate(const DenoiserParams& params, const Schedule& schedule, const SamplerConfig& sampler,
                Index n, PredictionTarget target);

SamplerKind parse_sampler_kind(const std::string& text);

}  // namespace minsnr
