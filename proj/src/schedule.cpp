#include "minsnr/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace minsnr {

namespace {

void check_step(const Schedule& s, Step t) {
    if (t < 1 || t > s.T) {
        throw std::out_of_range("step " + std::to_string(t) + " outside [1, " +
                                std::to_string(s.T) + "]");
    }
}

Schedule from_alpha_bar(ScheduleKind kind, const Vector& alpha_bar, double offset_s,
                        double snr_cap) {
    Schedule s;
    s.kind = kind;
    s.T = static_cast<int>(alpha_bar.size());
    s.offset_s = offset_s;
    s.snr_cap = snr_cap;
    s.alphas.resize(s.T);
    s.sigmas.resize(s.T);
    s.snrs.resize(s.T);
    for (int i = 0; i < s.T; ++i) {
        const double ab = std::clamp(alpha_bar[i], 0.0, 1.0);
        s.alphas[i] = std::sqrt(ab);
        s.sigmas[i] = std::sqrt(1.0 - ab);
        s.snrs[i] = snr_from(s.alphas[i], s.sigmas[i], snr_cap);
    }
    return s;
}

}  // namespace

double Schedule::alpha(Step t) const {
    check_step(*this, t);
    return alphas[t - 1];
}

double Schedule::sigma(Step t) const {
    check_step(*this, t);
    return sigmas[t - 1];
}

Schedule build_cosine_schedule(int T, double offset_s, double snr_cap) {
    if (T < 2) throw std::invalid_argument("cosine schedule needs T >= 2");
    if (!(offset_s > 0.0 && offset_s < 1.0))
        throw std::invalid_argument("cosine offset must lie in (0, 1)");
    if (!(snr_cap > 1.0)) throw std::invalid_argument("snr_cap must exceed 1");

    const auto f = [offset_s](double u) {
        const double c = std::cos((u + offset_s) / (1.0 + offset_s) * std::numbers::pi / 2.0);
        return c * c;
    };
    const double f0 = f(0.0);
    Vector alpha_bar(T);
    for (int t = 1; t <= T; ++t) {
        alpha_bar[t - 1] = f(static_cast<double>(t) / T) / f0;
    }
    // cos(pi/2) is not exactly zero in floating point.
    alpha_bar[T - 1] = 0.0;
    return from_alpha_bar(ScheduleKind::Cosine, alpha_bar, offset_s, snr_cap);
}

Schedule build_linear_schedule(int T, double snr_cap) {
    if (T < 2) throw std::invalid_argument("linear schedule needs T >= 2");
    if (!(snr_cap > 1.0)) throw std::invalid_argument("snr_cap must exceed 1");
    const double scale = 1000.0 / T;
    const double beta_start = std::min(scale * 1e-4, 0.999);
    const double beta_end = std::min(scale * 0.02, 0.999);
    Vector alpha_bar(T);
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        const double beta = beta_start + (beta_end - beta_start) * i / (T - 1);
        prod *= 1.0 - beta;
        alpha_bar[i] = prod;
    }
    return from_alpha_bar(ScheduleKind::Linear, alpha_bar, kDefaultOffset, snr_cap);
}

double snr_from(double alpha, double sigma, double snr_cap) {
    const double a2 = alpha * alpha;
    const double s2 = sigma * sigma;
    if (s2 * (1.0 + snr_cap) < 1.0 || a2 >= snr_cap * s2) return snr_cap;
    return a2 / s2;
}

double snr(const Schedule& schedule, Step t) {
    check_step(schedule, t);
    return schedule.snrs[t - 1];
}

std::vector<std::string> validate(const Schedule& s) {
    std::vector<std::string> out;
    if (s.T < 1 || s.alphas.size() != s.T || s.sigmas.size() != s.T) {
        out.push_back("table length does not match T");
        return out;
    }
    Index bad_vp = -1;
    for (Index i = 0; i < s.T; ++i) {
        const double a = s.alphas[i], g = s.sigmas[i];
        if (!std::isfinite(a) || !std::isfinite(g) || std::abs(a * a + g * g - 1.0) > 1e-12) {
            bad_vp = i;
            break;
        }
    }
    if (bad_vp >= 0) {
        std::ostringstream msg;
        msg << "variance preservation alpha^2 + sigma^2 = 1 violated at t=" << bad_vp + 1;
        out.push_back(msg.str());
    }
    for (Index i = 0; i < s.T; ++i) {
        if (s.sigmas[i] < 0.0 || s.sigmas[i] > 1.0) {
            out.push_back("sigma outside [0, 1] at t=" + std::to_string(i + 1));
            break;
        }
    }
    for (Index i = 1; i < s.T; ++i) {
        if (s.sigmas[i] < s.sigmas[i - 1]) {
            out.push_back("sigma monotonicity violated between t=" + std::to_string(i) +
                          " and t=" + std::to_string(i + 1));
            break;
        }
    }
    for (Index i = 1; i < s.T; ++i) {
        const double prev = snr_from(s.alphas[i - 1], s.sigmas[i - 1], s.snr_cap);
        const double cur = snr_from(s.alphas[i], s.sigmas[i], s.snr_cap);
        if (cur > prev) {
            out.push_back("SNR monotonicity violated between t=" + std::to_string(i) +
                          " and t=" + std::to_string(i + 1));
            break;
        }
    }
    return out;
}

std::vector<int> uniform_bin_edges(int T, int bins) {
    if (bins < 1 || bins > T) throw std::invalid_argument("bin count must lie in [1, T]");
    std::vector<int> edges(bins + 1);
    for (int b = 0; b <= bins; ++b) {
        edges[b] = 1 + static_cast<int>((static_cast<long long>(b) * T) / bins);
    }
    return edges;
}

int bin_of(const std::vector<int>& edges, Step t) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), t);
    const int bin = static_cast<int>(it - edges.begin()) - 1;
    return std::clamp(bin, 0, static_cast<int>(edges.size()) - 2);
}

std::string to_string(ScheduleKind kind) {
    return kind == ScheduleKind::Cosine ? "cosine" : "linear";
}

ScheduleKind parse_schedule_kind(const std::string& text) {
    if (text == "cosine") return ScheduleKind::Cosine;
    if (text == "linear") return ScheduleKind::Linear;
    throw std::invalid_argument("unknown schedule '" + text + "' (expected cosine|linear)");
}

nlohmann::json to_json(const Schedule& s) {
    return {{"T", s.T}, {"offset_s", s.offset_s}, {"snr_cap", s.snr_cap}, {"kind", to_string(s.kind)}};
}

Schedule schedule_from_json(const nlohmann::json& j) {
    const int T = j.at("T").get<int>();
    const double cap = j.value("snr_cap", kDefaultSnrCap);
    const auto kind = parse_schedule_kind(j.value("kind", std::string("cosine")));
    if (kind == ScheduleKind::Linear) return build_linear_schedule(T, cap);
    return build_cosine_schedule(T, j.value("offset_s", kDefaultOffset), cap);
}

}  // namespace minsnr
