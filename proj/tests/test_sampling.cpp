#include <doctest.h>

#include <random>

#include "minsnr/data_metrics.hpp"
#include "minsnr/sampling.hpp"

using namespace minsnr;

namespace {

Matrix random_matrix(Index r, Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = normal(rng);
    return m;
}

/// DDPM posterior q(x_s | x_t, x0) written from the forward-process marginals.
Matrix posterior_sample(const Matrix& x0, const Matrix& x_t, Step t, Step s, const Schedule& sch,
                        const Matrix& noise) {
    const double a_t = sch.alpha(t), s_t = sch.sigma(t), a_s = sch.alpha(s), s_s = sch.sigma(s);
    const double a_ts = a_t / a_s;
    const double v_ts = s_t * s_t - a_ts * a_ts * s_s * s_s;
    const Matrix mean = (a_ts * s_s * s_s / (s_t * s_t)) * x_t + (a_s * v_ts / (s_t * s_t)) * x0;
    return mean + std::sqrt(v_ts * s_s * s_s / (s_t * s_t)) * noise;
}

}  // namespace

TEST_CASE("deterministic step with a perfect x0 estimate") {
    std::mt19937_64 rng(1);
    const auto sch = build_cosine_schedule(1000);
    const Matrix x0 = random_matrix(6, 2, rng);
    const Matrix eps = random_matrix(6, 2, rng);
    for (auto [t, s] : {std::pair{1000, 900}, std::pair{500, 499}, std::pair{300, 10}}) {
        const std::vector<Step> tt(6, t), ss(6, s);
        const Matrix x_t = sample_forward(x0, tt, eps, sch);
        const Matrix next = reverse_step(x0, x_t, t, s, sch, SamplerKind::Deterministic, Matrix());
        // At t = T the implied noise equals x_t itself.
        const Matrix implied = (x_t - sch.alpha(t) * x0) / sch.sigma(t);
        CHECK((next - sample_forward(x0, ss, implied, sch)).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("t_prev = 0 returns the estimate") {
    std::mt19937_64 rng(2);
    const auto sch = build_cosine_schedule(100);
    const Matrix x0 = random_matrix(3, 2, rng);
    const Matrix x_t = random_matrix(3, 2, rng);
    CHECK(reverse_step(x0, x_t, 50, 0, sch, SamplerKind::Ancestral, random_matrix(3, 2, rng)) == x0);
    CHECK(reverse_step(x0, x_t, 50, 0, sch, SamplerKind::Deterministic, Matrix()) == x0);
    CHECK_THROWS(reverse_step(x0, x_t, 50, 50, sch, SamplerKind::Deterministic, Matrix()));
}

TEST_CASE("ancestral step is the DDPM posterior; removing its variance gives the deterministic step") {
    std::mt19937_64 rng(3);
    const auto sch = build_cosine_schedule(1000);
    std::uniform_int_distribution<Step> pick(2, 1000);
    for (int trial = 0; trial < 200; ++trial) {
        const Step t = pick(rng);
        const Step s = std::uniform_int_distribution<Step>(1, t - 1)(rng);
        const Matrix x0 = random_matrix(4, 2, rng);
        const Matrix x_t = random_matrix(4, 2, rng);
        const Matrix z = random_matrix(4, 2, rng);
        const Matrix ours = reverse_step(x0, x_t, t, s, sch, SamplerKind::Ancestral, z);
        REQUIRE((ours - posterior_sample(x0, x_t, t, s, sch, z)).cwiseAbs().maxCoeff() <= 1e-9);
        const Matrix no_var = reverse_step_eta(x0, x_t, t, s, sch, 0.0, z);
        REQUIRE(no_var == reverse_step(x0, x_t, t, s, sch, SamplerKind::Deterministic, Matrix()));
    }
}

TEST_CASE("deterministic trajectory with an oracle denoiser recovers x0") {
    std::mt19937_64 rng(4);
    const auto sch = build_cosine_schedule(1000);
    const Matrix x0 = random_matrix(5, 2, rng);
    const std::vector<Step> start(5, 700);
    Matrix x = sample_forward(x0, start, random_matrix(5, 2, rng), sch);
    const auto steps = sampling_steps(700, 35);
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const Step prev = k + 1 < steps.size() ? steps[k + 1] : 0;
        x = reverse_step(x0, x, steps[k], prev, sch, SamplerKind::Deterministic, Matrix());
    }
    CHECK((x - x0).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("step subsequences") {
    CHECK(sampling_steps(1000, 1) == std::vector<Step>{1000});
    CHECK(sampling_steps(10, 10) == std::vector<Step>{10, 9, 8, 7, 6, 5, 4, 3, 2, 1});
    const auto s = sampling_steps(1000, 100);
    CHECK(s.front() == 1000);
    CHECK(s.back() == 10);
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] < s[i - 1]);
    CHECK_THROWS(sampling_steps(10, 0));
    CHECK_THROWS(sampling_steps(10, 11));
}

TEST_CASE("generation is seeded and single-step generation is one network call") {
    const auto sch = build_cosine_schedule(1000);
    auto p = init_params({2, 16, 16, 2}, 8, 2, 7);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> normal(0.0, 0.1);
    for (Index i = 0; i < p.theta.size(); ++i) p.theta[i] += normal(rng);

    for (auto kind : {SamplerKind::Deterministic, SamplerKind::Ancestral}) {
        const SamplerConfig cfg{kind, 20, 5};
        const auto a = generate(p, sch, cfg, 64, PredictionTarget::X0);
        CHECK(a == generate(p, sch, cfg, 64, PredictionTarget::X0));
        CHECK(a.allFinite());
        CHECK(a != generate(p, sch, {kind, 20, 6}, 64, PredictionTarget::X0));
    }

    const SamplerConfig one{SamplerKind::Deterministic, 1, 3};
    const auto out = generate(p, sch, one, 16, PredictionTarget::X0);
    // Reproduce the seeded x_T and call the network once.
    std::mt19937_64 noise_rng(derive_seed(3, "sampler"));
    std::normal_distribution<double> unit(0.0, 1.0);
    Matrix x_T(16, 2);
    for (Index i = 0; i < 16; ++i)
        for (Index j = 0; j < 2; ++j) x_T(i, j) = unit(noise_rng);
    const std::vector<Step> tT(16, 1000);
    CHECK(out == forward(p, x_T, tT, 1000, PredictionTarget::X0).values);

    // Epsilon-target models skip the alpha = 0 endpoint.
    CHECK(generate(p, sch, {SamplerKind::Ancestral, 10, 1}, 8, PredictionTarget::Epsilon).allFinite());
    CHECK(generate(p, sch, {SamplerKind::Deterministic, 10, 1}, 8, PredictionTarget::Velocity).allFinite());
}
