#include "stagerm/rollout_eval.hpp"

#include <algorithm>
#include <cmath>

#include "stagerm/errors.hpp"

namespace stagerm {

std::string to_string(RolloutClass c) {
    switch (c) {
    case RolloutClass::SE: return "SE";
    case RolloutClass::PSE: return "PSE";
    case RolloutClass::FE: return "FE";
    }
    return "?";
}

RolloutClass rollout_class_from_string(const std::string& s) {
    if (s == "SE") return RolloutClass::SE;
    if (s == "PSE") return RolloutClass::PSE;
    if (s == "FE") return RolloutClass::FE;
    throw ValidationError("unknown rollout class '" + s + "'");
}

namespace {

double mean_of(const std::vector<double>& v, size_t from) {
    double sum = 0.0;
    for (size_t i = from; i < v.size(); ++i) sum += v[i];
    return sum / static_cast<double>(v.size() - from);
}

bool satisfies_se_rule(const std::vector<double>& p) {
    // last third starts at ceil(2T/3); clamped so degenerate one- or two-frame
    // traces still contribute their final frame
    const size_t t = p.size();
    const size_t start = std::min((2 * t + 2) / 3, t - 1);
    return p.back() > 0.8 && mean_of(p, start) > 0.6;
}

} // namespace

EvalReport classify_rollouts(const std::vector<RolloutTrace>& traces) {
    if (traces.empty()) throw ValidationError("classify_rollouts: no traces");
    for (const RolloutTrace& t : traces) {
        if (t.progress.empty())
            throw ValidationError("rollout '" + t.rollout_id + "' has an empty trace");
        for (double p : t.progress) {
            if (!std::isfinite(p))
                throw NumericalError("rollout '" + t.rollout_id + "' has a non-finite value");
            if (p < 0.0 || p > 1.0)
                throw ValidationError("rollout '" + t.rollout_id +
                                      "' has progress outside [0, 1]");
        }
    }

    EvalReport report;
    std::vector<bool> is_se(traces.size(), false);
    std::vector<double> means(traces.size(), 0.0);
    std::vector<double> non_se_means;
    for (size_t i = 0; i < traces.size(); ++i) {
        is_se[i] = satisfies_se_rule(traces[i].progress);
        means[i] = mean_of(traces[i].progress, 0);
        if (!is_se[i]) non_se_means.push_back(means[i]);
    }

    if (!non_se_means.empty()) {
        std::sort(non_se_means.begin(), non_se_means.end());
        const size_t n = non_se_means.size();
        report.xi = (n % 2 == 1) ? non_se_means[n / 2]
                                 : 0.5 * (non_se_means[n / 2 - 1] + non_se_means[n / 2]);
    }

    std::vector<RolloutClass> predicted(traces.size());
    for (size_t i = 0; i < traces.size(); ++i) {
        if (is_se[i])
            predicted[i] = RolloutClass::SE;
        else
            predicted[i] = means[i] >= *report.xi ? RolloutClass::PSE : RolloutClass::FE;
        report.predicted.emplace_back(traces[i].rollout_id, predicted[i]);
    }

    bool have_truth = std::all_of(traces.begin(), traces.end(),
                                  [](const RolloutTrace& t) { return t.truth.has_value(); });
    if (have_truth) {
        std::vector<RolloutClass> truth;
        truth.reserve(traces.size());
        for (const RolloutTrace& t : traces) truth.push_back(*t.truth);
        report.rho = score_rho(predicted, truth);
        for (const char* name : {"SE", "PSE", "FE"}) report.per_class[name] = {};
        for (size_t i = 0; i < traces.size(); ++i) {
            PerClassCount& c = report.per_class[to_string(truth[i])];
            c.total += 1;
            if (predicted[i] == truth[i]) c.correct += 1;
        }
    }
    return report;
}

double score_rho(const std::vector<RolloutClass>& predicted,
                 const std::vector<RolloutClass>& truth) {
    if (predicted.size() != truth.size())
        throw ValidationError("score_rho: " + std::to_string(predicted.size()) +
                              " predictions vs " + std::to_string(truth.size()) + " truths");
    if (predicted.empty()) throw ValidationError("score_rho: empty input");
    int64_t correct = 0;
    for (size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] == truth[i]) ++correct;
    int64_t wrong = static_cast<int64_t>(predicted.size()) - correct;
    return static_cast<double>(correct - wrong) / static_cast<double>(predicted.size());
}

double demo_mse(const ProgressPredictor& predictor,
                const std::vector<Trajectory>& trajectories,
                const std::map<std::string, std::vector<ProgressLabel>>& labels,
                int window_length, int window_gap) {
    if (window_length < 2 || window_gap < 1)
        throw ValidationError("demo_mse: bad window geometry");
    double sum = 0.0;
    int64_t count = 0;
    const int64_t first =
        static_cast<int64_t>(window_length - 1) * static_cast<int64_t>(window_gap);
    for (const Trajectory& traj : trajectories) {
        auto it = labels.find(traj.id);
        if (it == labels.end())
            throw ValidationError("demo_mse: no labels for trajectory '" + traj.id + "'");
        if (static_cast<int64_t>(it->second.size()) != traj.length())
            throw ValidationError("demo_mse: label count mismatch for '" + traj.id + "'");
        if (first > traj.length() - 1) continue; // no admissible anchor in this trajectory
        std::vector<double> p = predict_progress(predictor, traj);
        for (int64_t t = first; t <= traj.length() - 1; ++t) {
            double err = p[static_cast<size_t>(t)] - it->second[static_cast<size_t>(t)].y;
            sum += err * err;
            ++count;
        }
    }
    if (count == 0)
        throw ValidationError("demo_mse: no trajectory admits a full sampling window");
    return sum / static_cast<double>(count);
}

} // namespace stagerm
