#include "stagerm/predictor.hpp"

#include <algorithm>
#include <cmath>

#include "stagerm/errors.hpp"

namespace stagerm {

double ProgressPredictor::predict_at(const Trajectory& trajectory, int64_t t) const {
    if (t < 0 || t >= trajectory.length())
        throw ValidationError("predict_at: frame " + std::to_string(t) + " outside [0, " +
                              std::to_string(trajectory.length() - 1) + "]");
    return predict(trajectory)[static_cast<size_t>(t)];
}

std::vector<double> predict_progress(const ProgressPredictor& predictor,
                                     const Trajectory& trajectory) {
    std::vector<double> p = predictor.predict(trajectory);
    if (static_cast<int64_t>(p.size()) != trajectory.length())
        throw ValidationError("predictor '" + predictor.id() + "' returned " +
                              std::to_string(p.size()) + " values for " +
                              std::to_string(trajectory.length()) + " frames");
    for (double& v : p) {
        if (!std::isfinite(v))
            throw NumericalError("predictor '" + predictor.id() + "' produced a non-finite value");
        v = std::clamp(v, 0.0, 1.0);
    }
    return p;
}

void OraclePredictor::add(const std::string& trajectory_id, std::vector<double> y_true) {
    truth_[trajectory_id] = std::move(y_true);
}

std::vector<double> OraclePredictor::predict(const Trajectory& trajectory) const {
    auto it = truth_.find(trajectory.id);
    if (it == truth_.end())
        throw ValidationError("oracle has no ground truth for trajectory '" + trajectory.id + "'");
    if (static_cast<int64_t>(it->second.size()) != trajectory.length())
        throw ValidationError("oracle truth for '" + trajectory.id + "' covers " +
                              std::to_string(it->second.size()) + " frames, trajectory has " +
                              std::to_string(trajectory.length()));
    return it->second;
}

double OraclePredictor::predict_at(const Trajectory& trajectory, int64_t t) const {
    auto it = truth_.find(trajectory.id);
    if (it == truth_.end())
        throw ValidationError("oracle has no ground truth for trajectory '" + trajectory.id + "'");
    if (t < 0 || t >= static_cast<int64_t>(it->second.size()))
        throw ValidationError("predict_at: frame " + std::to_string(t) + " out of range");
    return it->second[static_cast<size_t>(t)];
}

} // namespace stagerm
