#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "stagerm/trajectory.hpp"

namespace stagerm {

// Anything that can turn a trajectory into a per-frame progress estimate.
// Implementations must return one value per frame; predict_progress() clamps
// them into [0, 1] and checks for non-finite output, so downstream code can
// rely on both.
class ProgressPredictor {
public:
    virtual ~ProgressPredictor() = default;

    virtual std::string id() const = 0;

    // One progress value per frame, same length as the trajectory.
    virtual std::vector<double> predict(const Trajectory& trajectory) const = 0;

    // Progress at a single frame. The default evaluates the whole trajectory;
    // implementations with cheaper point access override it.
    virtual double predict_at(const Trajectory& trajectory, int64_t t) const;
};

// Validated, clamped entry point used by evaluation and weighting code.
std::vector<double> predict_progress(const ProgressPredictor& predictor,
                                     const Trajectory& trajectory);

// Serves stored ground-truth progress curves, keyed by trajectory id.
class OraclePredictor : public ProgressPredictor {
public:
    void add(const std::string& trajectory_id, std::vector<double> y_true);

    std::string id() const override { return "oracle"; }
    std::vector<double> predict(const Trajectory& trajectory) const override;
    double predict_at(const Trajectory& trajectory, int64_t t) const override;

private:
    std::map<std::string, std::vector<double>> truth_;
};

} // namespace stagerm
