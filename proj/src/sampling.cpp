#include "minsnr/sampling.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace minsnr {

double posterior_stddev(const Schedule& schedule, Step t, Step t_prev) {
    if (t_prev == 0) return 0.0;
    const double a_t = schedule.alpha(t), s_t = schedule.sigma(t);
    const double a_s = schedule.alpha(t_prev), s_s = schedule.sigma(t_prev);
    const double a_ts = a_t / a_s;
    const double var_ts = std::max(0.0, s_t * s_t - a_ts * a_ts * s_s * s_s);
    return std::sqrt(var_ts * s_s * s_s / (s_t * s_t));
}

Matrix reverse_step_eta(const Matrix& pred_x0, const Matrix& x_t, Step t, Step t_prev,
                        const Schedule& schedule, double eta, const Matrix& noise) {
    if (!(t > t_prev && t_prev >= 0)) throw std::invalid_argument("reverse step needs t > t_prev >= 0");
    if (pred_x0.rows() != x_t.rows() || pred_x0.cols() != x_t.cols())
        throw std::invalid_argument("reverse step shape mismatch");
    if (t_prev == 0) return pred_x0;
    const double a_t = schedule.alpha(t), s_t = schedule.sigma(t);
    if (s_t == 0.0) throw std::domain_error("implied noise undefined at sigma_t = 0");
    const double a_s = schedule.alpha(t_prev), s_s = schedule.sigma(t_prev);
    const Matrix eps = (x_t - a_t * pred_x0) / s_t;
    const double c = eta * posterior_stddev(schedule, t, t_prev);
    Matrix out = a_s * pred_x0 + std::sqrt(std::max(0.0, s_s * s_s - c * c)) * eps;
    if (c > 0.0) {
        if (noise.rows() != x_t.rows() || noise.cols() != x_t.cols())
            throw std::invalid_argument("reverse step noise shape mismatch");
        out += c * noise;
    }
    return out;
}

Matrix reverse_step(const Matrix& pred_x0, const Matrix& x_t, Step t, Step t_prev,
                    const Schedule& schedule, SamplerKind kind, const Matrix& noise) {
    return reverse_step_eta(pred_x0, x_t, t, t_prev, schedule,
                            kind == SamplerKind::Ancestral ? 1.0 : 0.0, noise);
}

std::vector<Step> sampling_steps(Step first, int steps) {
    if (steps < 1) throw std::invalid_argument("need at least one sampling step");
    if (steps > first) throw std::invalid_argument("more sampling steps than timesteps");
    std::vector<Step> out(steps);
    for (int k = 0; k < steps; ++k) {
        out[k] = first - static_cast<Step>((static_cast<long long>(k) * first) / steps);
    }
    return out;
}

Matrix generate(const DenoiserParams& params, const Schedule& schedule, const SamplerConfig& sampler,
                Index n, PredictionTarget target) {
    if (n < 1) throw std::invalid_argument("need at least one sample");
    Step first = schedule.T;
    if (target == PredictionTarget::Epsilon) {
        while (first > 1 && schedule.alpha(first) == 0.0) --first;
    }
    const auto steps = sampling_steps(first, sampler.steps);
    std::mt19937_64 rng(derive_seed(sampler.seed, "sampler"));
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto draw = [&] {
        Matrix z(n, params.data_dim);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < z.cols(); ++j) z(i, j) = normal(rng);
        return z;
    };

    Matrix x = draw();
    const Matrix none;
    std::vector<Step> t_batch(static_cast<std::size_t>(n));
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const Step t = steps[k];
        const Step t_prev = k + 1 < steps.size() ? steps[k + 1] : 0;
        std::fill(t_batch.begin(), t_batch.end(), t);
        const auto pred = forward(params, x, t_batch, schedule.T, target);
        const auto x0 = convert_prediction(pred, PredictionTarget::X0, x, t_batch, schedule);
        const bool noisy = sampler.kind == SamplerKind::Ancestral && t_prev > 0;
        x = reverse_step(x0.values, x, t, t_prev, schedule, sampler.kind, noisy ? draw() : none);
        if (!x.allFinite())
            throw std::runtime_error("sampling diverged at step " + std::to_string(t));
    }
    return x;
}

SamplerKind parse_sampler_kind(const std::string& text) {
    if (text == "ancestral") return SamplerKind::Ancestral;
    if (text == "deterministic" || text == "ddim") return SamplerKind::Deterministic;
    throw std::invalid_argument("unknown sampler '" + text + "' (expected ancestral|deterministic)");
}

}  // namespace minsnr
