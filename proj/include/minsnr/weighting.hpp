#pragma once

#include <optional>
#include <string>
#include <vector>

#include "minsnr/common.hpp"
#include "minsnr/schedule.hpp"

namespace minsnr {

enum class WeightKind { Constant, Snr, MaxSnrGamma, MinSnrGamma, External };

enum class PredictionTarget { X0, Epsilon, Velocity };

inline constexpr double kDefaultGamma = 5.0;

/// A loss-weighting rule.
///
/// External strategies carry per-bin weights produced elsewhere (a min-norm
/// solve, say). Those weights are used verbatim in the target's own space;
/// they are never converted between targets.
struct WeightStrategy {
    WeightKind kind = WeightKind::Constant;
    double gamma = kDefaultGamma;
    std::vector<double> external_weights;
    /// B+1 step boundaries for external_weights; bin b covers [edges[b], edges[b+1]).
    /// Empty means uniform bins over [1, T].
    std::vector<int> external_edges;

    static WeightStrategy constant() { return {WeightKind::Constant, kDefaultGamma, {}, {}}; }
    static WeightStrategy snr() { return {WeightKind::Snr, kDefaultGamma, {}, {}}; }
    static WeightStrategy max_snr(double gamma);
    static WeightStrategy min_snr(double gamma);
    static WeightStrategy external(std::vector<double> weights, std::vector<int> edges = {});
};

/// Throws std::invalid_argument when the strategy's invariants do not hold.
void check(const WeightStrategy& strategy);

/// x0-space weight: 1, SNR, max(SNR, gamma) or min(SNR, gamma).
double weight_x0(const WeightStrategy& strategy, double snr_t);

/// weight_x0 divided by SNR (epsilon) or SNR + 1 (velocity).
double weight_for_target(const WeightStrategy& strategy, PredictionTarget target, double snr_t);

/// Element t-1 is weight_for_target at SNR(t).
Vector weights_table(const WeightStrategy& strategy, PredictionTarget target,
                     const Schedule& schedule);

/// Weight applied to a training sample at step t.
///
/// Differs from weight_for_target only at SNR = 0 under the epsilon target,
/// where the finite limit is used for the rules that have one (SNR gives 1,
/// Min-SNR gives 1). External strategies look up their bin weight.
double loss_weight(const WeightStrategy& strategy, PredictionTarget target,
                   const Schedule& schedule, Step t);

/// Bin weight of an External strategy at step t (nearest bin outside the edges).
double external_weight_at(const WeightStrategy& strategy, Step t, int T);

std::string to_string(WeightKind kind);
std::string to_string(PredictionTarget target);
std::string describe(const WeightStrategy& strategy);
PredictionTarget parse_target(const std::string& text);

}  // namespace minsnr
