#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stagerm/labeling.hpp"
#include "stagerm/predictor.hpp"
#include "stagerm/trajectory.hpp"

namespace stagerm {

enum class RolloutClass { SE, PSE, FE };

std::string to_string(RolloutClass c);
RolloutClass rollout_class_from_string(const std::string& s);

struct RolloutTrace {
    std::string rollout_id;
    std::vector<double> progress; // P_t, one entry per frame
    std::optional<RolloutClass> truth;
};

struct PerClassCount {
    int correct = 0;
    int total = 0;
};

struct EvalReport {
    // predicted label per rollout, input order
    std::vector<std::pair<std::string, RolloutClass>> predicted;
    // median of mean progress over non-successful rollouts; absent when every
    // rollout is classified SE
    std::optional<double> xi;
    // filled only when every input trace carries a ground-truth class
    std::optional<double> rho;
    std::map<std::string, PerClassCount> per_class;
};

// Three-way outcome classification:
//   SE  iff final progress > 0.8 and mean progress over the last third > 0.6
//       (last third = frames ceil(2T/3) .. T-1)
//   among the rest, xi = median of per-trace mean progress (even count:
//   midpoint of the two middle values); PSE iff mean >= xi, FE otherwise.
// SE membership is decided before xi is formed, so SE traces never enter the
// median. When truth is attached to every trace the report also carries rho
// and the per-class breakdown.
EvalReport classify_rollouts(const std::vector<RolloutTrace>& traces);

// rho = (#correct - #wrong) / total; lengths must match and be nonzero.
double score_rho(const std::vector<RolloutClass>& predicted,
                 const std::vector<RolloutClass>& truth);

// Mean squared error between predicted and labeled progress over every frame
// that can terminate a full sampling window, i.e. t in [(N-1)G, T-1] per
// trajectory (equivalently: one evaluation per admissible anchor, stride 1).
double demo_mse(const ProgressPredictor& predictor,
                const std::vector<Trajectory>& trajectories,
                const std::map<std::string, std::vector<ProgressLabel>>& labels,
                int window_length, int window_gap);

} // namespace stagerm
