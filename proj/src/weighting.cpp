#include "minsnr/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace minsnr {

WeightStrategy WeightStrategy::max_snr(double gamma) {
    WeightStrategy s{WeightKind::MaxSnrGamma, gamma, {}, {}};
    check(s);
    return s;
}

WeightStrategy WeightStrategy::min_snr(double gamma) {
    WeightStrategy s{WeightKind::MinSnrGamma, gamma, {}, {}};
    check(s);
    return s;
}

WeightStrategy WeightStrategy::external(std::vector<double> weights, std::vector<int> edges) {
    WeightStrategy s{WeightKind::External, kDefaultGamma, std::move(weights), std::move(edges)};
    check(s);
    return s;
}

void check(const WeightStrategy& s) {
    if ((s.kind == WeightKind::MaxSnrGamma || s.kind == WeightKind::MinSnrGamma) &&
        !(s.gamma > 0.0 && std::isfinite(s.gamma))) {
        throw std::invalid_argument("gamma must be positive, got " + std::to_string(s.gamma));
    }
    if (s.kind == WeightKind::External) {
        if (s.external_weights.empty())
            throw std::invalid_argument("external strategy without weights");
        for (double w : s.external_weights) {
            if (!(w >= 0.0) || !std::isfinite(w))
                throw std::invalid_argument("external weights must be finite and nonnegative");
        }
        if (!s.external_edges.empty()) {
            if (s.external_edges.size() != s.external_weights.size() + 1)
                throw std::invalid_argument("external edges must number bins + 1");
            if (std::adjacent_find(s.external_edges.begin(), s.external_edges.end(),
                                   std::greater_equal<>{}) != s.external_edges.end())
                throw std::invalid_argument("external edges must be strictly increasing");
        }
    }
}

double weight_x0(const WeightStrategy& s, double snr_t) {
    if (!(snr_t >= 0.0)) throw std::invalid_argument("SNR must be nonnegative");
    switch (s.kind) {
        case WeightKind::Constant: return 1.0;
        case WeightKind::Snr: return snr_t;
        case WeightKind::MaxSnrGamma: return std::max(snr_t, s.gamma);
        case WeightKind::MinSnrGamma: return std::min(snr_t, s.gamma);
        case WeightKind::External: break;
    }
    throw std::invalid_argument("external weights are supplied per bin, not computed from SNR");
}

double weight_for_target(const WeightStrategy& s, PredictionTarget target, double snr_t) {
    const double w = weight_x0(s, snr_t);
    switch (target) {
        case PredictionTarget::X0: return w;
        case PredictionTarget::Epsilon:
            if (snr_t == 0.0)
                throw std::domain_error("epsilon-target weight divides by SNR = 0");
            return w / snr_t;
        case PredictionTarget::Velocity: return w / (snr_t + 1.0);
    }
    return w;
}

Vector weights_table(const WeightStrategy& s, PredictionTarget target, const Schedule& schedule) {
    Vector out(schedule.T);
    for (Step t = 1; t <= schedule.T; ++t) out[t - 1] = weight_for_target(s, target, snr(schedule, t));
    return out;
}

double external_weight_at(const WeightStrategy& s, Step t, int T) {
    const auto B = static_cast<int>(s.external_weights.size());
    const auto& edges = s.external_edges.empty() ? uniform_bin_edges(T, B) : s.external_edges;
    return s.external_weights[bin_of(edges, t)];
}

double loss_weight(const WeightStrategy& s, PredictionTarget target, const Schedule& schedule,
                   Step t) {
    if (s.kind == WeightKind::External) return external_weight_at(s, t, schedule.T);
    const double r = snr(schedule, t);
    if (target == PredictionTarget::Epsilon && r == 0.0) {
        if (s.kind == WeightKind::Snr || s.kind == WeightKind::MinSnrGamma) return 1.0;
        throw std::domain_error(describe(s) +
                                " weighting is unbounded at SNR = 0 under the epsilon target");
    }
    return weight_for_target(s, target, r);
}

std::string to_string(WeightKind kind) {
    switch (kind) {
        case WeightKind::Constant: return "const";
        case WeightKind::Snr: return "snr";
        case WeightKind::MaxSnrGamma: return "max-snr";
        case WeightKind::MinSnrGamma: return "min-snr";
        case WeightKind::External: return "external";
    }
    return "?";
}

std::string to_string(PredictionTarget target) {
    switch (target) {
        case PredictionTarget::X0: return "x0";
        case PredictionTarget::Epsilon: return "eps";
        case PredictionTarget::Velocity: return "v";
    }
    return "?";
}

std::string describe(const WeightStrategy& s) {
    std::ostringstream out;
    out << to_string(s.kind);
    if (s.kind == WeightKind::MaxSnrGamma || s.kind == WeightKind::MinSnrGamma) out << ':' << s.gamma;
    if (s.kind == WeightKind::External) out << '[' << s.external_weights.size() << " bins]";
    return out.str();
}

PredictionTarget parse_target(const std::string& text) {
    if (text == "x0") return PredictionTarget::X0;
    if (text == "eps" || text == "epsilon") return PredictionTarget::Epsilon;
    if (text == "v" || text == "velocity") return PredictionTarget::Velocity;
    throw std::invalid_argument("unknown target '" + text + "' (expected x0|eps|v)");
}

}  // namespace minsnr
