#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stagerm/trajectory.hpp"

namespace stagerm {

// Dataset-level subtask duration priors for one annotation scheme.
//
//   alpha[k-1]    = mean over trajectories of L_k / T   (stage k's share)
//   cumulative[k] = alpha[0] + ... + alpha[k-1],  cumulative[0] = 0
//
// cumulative.back() is pinned to exactly 1 so composed progress tops out at 1
// regardless of rounding in the prefix sums.
struct PriorProfile {
    std::string scheme_id;
    std::vector<double> alpha;      // K entries, each > 0
    std::vector<double> cumulative; // K + 1 entries
    int64_t trajectory_count = 0;   // M

    int stage_count() const { return static_cast<int>(alpha.size()); }
    void validate() const;
};

struct ProgressLabel {
    int64_t t = 0;
    int stage = 1;    // 1-based stage index k
    double tau = 0.0; // within-stage completion in [0, 1]
    double y = 0.0;   // global progress in [0, 1]
};

// Maps (stage, tau) to global progress: y = P_{k-1} + alpha_k * tau, with the
// tau = 1 endpoint pinned to P_k exactly so stage boundaries line up bit-for-bit.
// Result is clamped to [0, 1].
double compose_progress(const PriorProfile& priors, int stage, double tau);

// Averages per-trajectory stage shares. Contributions are accumulated in
// trajectory-id order, which makes the result invariant to input permutation
// down to the last bit. All annotations must be structurally sound, share one
// scheme, and resolve to a trajectory.
PriorProfile compute_priors(const std::vector<TrajectoryAnnotation>& annotations,
                            const std::vector<Trajectory>& trajectories);

// Per-frame progress labels for one annotated trajectory:
//   tau_t = (t - s_k) / (e_k - s_k)   within segment k (inclusive bounds)
//   y_t   = compose_progress(priors, k, tau_t)
// The label curve starts at 0, ends at 1, and is nondecreasing everywhere,
// strictly increasing inside each segment.
std::vector<ProgressLabel> label_trajectory(const TrajectoryAnnotation& annotation,
                                            const Trajectory& trajectory,
                                            const PriorProfile& priors);

struct LabelSummary {
    std::vector<int64_t> frames_per_stage; // K entries
    int64_t total_frames = 0;
    int64_t trajectory_count = 0;
};

struct DatasetLabels {
    std::map<std::string, std::vector<ProgressLabel>> by_trajectory;
    LabelSummary summary;
};

// Labels every annotated trajectory. Any structurally invalid annotation is a
// hard error naming the offending trajectory.
DatasetLabels label_dataset(const std::vector<TrajectoryAnnotation>& annotations,
                            const std::vector<Trajectory>& trajectories,
                            const PriorProfile& priors);

} // namespace stagerm
