#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "minsnr/common.hpp"

namespace minsnr {

enum class ScheduleKind { Cosine, Linear };

/// Precomputed variance-preserving noise schedule.
///
/// Tables are stored 0-based (entry t-1 holds step t); use the accessors for
/// 1-based lookup. Builders are the only intended producers; fields are public
/// so that validation can be exercised on hand-modified copies.
struct Schedule {
    ScheduleKind kind = ScheduleKind::Cosine;
    int T = 0;
    double offset_s = 0.008;
    double snr_cap = 1e8;
    Vector alphas;
    Vector sigmas;
    Vector snrs;

    double alpha(Step t) const;
    double sigma(Step t) const;
};

inline constexpr double kDefaultOffset = 0.008;
inline constexpr double kDefaultSnrCap = 1e8;

/// Cosine schedule: alpha_bar(t) = f(t/T) / f(0), f(u) = cos^2(((u + s) / (1 + s)) * pi / 2).
/// alpha_bar(T) is pinned to exactly zero.
Schedule build_cosine_schedule(int T, double offset_s = kDefaultOffset,
                               double snr_cap = kDefaultSnrCap);

/// Linear-beta schedule (betas 1e-4 .. 0.02, rescaled to T steps).
Schedule build_linear_schedule(int T, double snr_cap = kDefaultSnrCap);

/// Clamped alpha_t^2 / sigma_t^2.
double snr(const Schedule& schedule, Step t);

/// Clamped SNR of a single (alpha, sigma) pair.
double snr_from(double alpha, double sigma, double snr_cap = kDefaultSnrCap);

/// Lists every violated schedule invariant. Empty means valid. Never throws.
std::vector<std::string> validate(const Schedule& schedule);

/// B+1 boundaries splitting [1, T] into B near-equal bins; bin b covers
/// [edges[b], edges[b+1]). Edges start at 1 and end at T + 1.
std::vector<int> uniform_bin_edges(int T, int bins);

/// Bin containing step t under `edges`; steps outside map to the nearest bin.
int bin_of(const std::vector<int>& edges, Step t);

nlohmann::json to_json(const Schedule& schedule);
/// Rebuilds the tables from the stored parameters.
Schedule schedule_from_json(const nlohmann::json& j);

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& text);

}  // namespace minsnr
