#include "stagerm/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "stagerm/errors.hpp"

namespace stagerm {

namespace {

// Structural checks shared by compute_priors and label_trajectory. Protocol
// label matching is the filter's job; here we only need segments that tile the
// trajectory and are long enough that tau is well defined.
void require_structurally_sound(const TrajectoryAnnotation& a, const Trajectory& t) {
    if (a.trajectory_id != t.id)
        throw ValidationError("annotation '" + a.trajectory_id +
                              "' applied to trajectory '" + t.id + "'");
    if (a.segments.empty())
        throw ValidationError("annotation '" + a.trajectory_id + "' has no segments");
    const int64_t last = t.length() - 1;
    int64_t expect = 0;
    for (size_t k = 0; k < a.segments.size(); ++k) {
        const Segment& s = a.segments[k];
        if (s.start != expect)
            throw ValidationError("annotation '" + a.trajectory_id + "': segment " +
                                  std::to_string(k + 1) + " starts at " +
                                  std::to_string(s.start) + ", expected " +
                                  std::to_string(expect));
        if (s.end <= s.start)
            throw ValidationError("annotation '" + a.trajectory_id + "': segment " +
                                  std::to_string(k + 1) + " spans fewer than two frames");
        expect = s.end + 1;
    }
    if (a.segments.back().end != last)
        throw ValidationError("annotation '" + a.trajectory_id + "': segments end at " +
                              std::to_string(a.segments.back().end) +
                              ", trajectory ends at " + std::to_string(last));
}

} // namespace

void PriorProfile::validate() const {
    if (alpha.empty()) throw ValidationError("prior profile has no stages");
    if (cumulative.size() != alpha.size() + 1)
        throw ValidationError("prior profile: cumulative must have K+1 entries");
    if (cumulative.front() != 0.0)
        throw ValidationError("prior profile: cumulative[0] must be 0");
    if (cumulative.back() != 1.0)
        throw ValidationError("prior profile: cumulative[K] must be 1");
    double sum = 0.0;
    for (double a : alpha) {
        if (!(a > 0.0)) throw ValidationError("prior profile: alpha entries must be positive");
        sum += a;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw ValidationError("prior profile: alpha does not sum to 1");
    for (size_t k = 1; k < cumulative.size(); ++k)
        if (cumulative[k] < cumulative[k - 1])
            throw ValidationError("prior profile: cumulative not nondecreasing");
}

double compose_progress(const PriorProfile& priors, int stage, double tau) {
    const int K = priors.stage_count();
    if (stage < 1 || stage > K)
        throw ValidationError("compose_progress: stage " + std::to_string(stage) +
                              " outside [1, " + std::to_string(K) + "]");
    if (!(tau >= 0.0 && tau <= 1.0))
        throw ValidationError("compose_progress: tau outside [0, 1]");
    double y = tau >= 1.0 ? priors.cumulative[stage]
                          : priors.cumulative[stage - 1] + priors.alpha[stage - 1] * tau;
    return std::clamp(y, 0.0, 1.0);
}

PriorProfile compute_priors(const std::vector<TrajectoryAnnotation>& annotations,
                            const std::vector<Trajectory>& trajectories) {
    if (annotations.empty()) throw ValidationError("compute_priors: no annotations");

    std::unordered_map<std::string, const Trajectory*> by_id;
    for (const Trajectory& t : trajectories) by_id.emplace(t.id, &t);

    // Sort by trajectory id before accumulating so summation order (and hence
    // the rounded result) does not depend on caller ordering.
    std::vector<const TrajectoryAnnotation*> sorted;
    sorted.reserve(annotations.size());
    for (const TrajectoryAnnotation& a : annotations) sorted.push_back(&a);
    std::sort(sorted.begin(), sorted.end(),
              [](const TrajectoryAnnotation* a, const TrajectoryAnnotation* b) {
                  return a->trajectory_id < b->trajectory_id;
              });
    for (size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i]->trajectory_id == sorted[i - 1]->trajectory_id)
            throw ValidationError("compute_priors: duplicate annotation for '" +
                                  sorted[i]->trajectory_id + "'");

    const std::string& scheme = sorted.front()->scheme_id;
    const size_t K = sorted.front()->segments.size();

    PriorProfile priors;
    priors.scheme_id = scheme;
    priors.alpha.assign(K, 0.0);
    priors.trajectory_count = static_cast<int64_t>(sorted.size());

    for (const TrajectoryAnnotation* a : sorted) {
        if (a->scheme_id != scheme)
            throw ValidationError("compute_priors: mixed schemes ('" + scheme + "' vs '" +
                                  a->scheme_id + "' on '" + a->trajectory_id + "')");
        if (a->segments.size() != K)
            throw ValidationError("compute_priors: '" + a->trajectory_id + "' has " +
                                  std::to_string(a->segments.size()) + " segments, expected " +
                                  std::to_string(K));
        auto it = by_id.find(a->trajectory_id);
        if (it == by_id.end())
            throw ValidationError("compute_priors: unknown trajectory '" + a->trajectory_id + "'");
        require_structurally_sound(*a, *it->second);
        const double T = static_cast<double>(it->second->length());
        for (size_t k = 0; k < K; ++k)
            priors.alpha[k] += static_cast<double>(a->segments[k].length()) / T;
    }
    for (double& a : priors.alpha) a /= static_cast<double>(priors.trajectory_count);

    priors.cumulative.assign(K + 1, 0.0);
    for (size_t k = 0; k < K; ++k)
        priors.cumulative[k + 1] = std::min(priors.cumulative[k] + priors.alpha[k], 1.0);
    priors.cumulative[K] = 1.0; // absorb prefix-sum rounding at the top end

    priors.validate();
    return priors;
}

std::vector<ProgressLabel> label_trajectory(const TrajectoryAnnotation& annotation,
                                            const Trajectory& trajectory,
                                            const PriorProfile& priors) {
    priors.validate();
    require_structurally_sound(annotation, trajectory);
    if (annotation.scheme_id != priors.scheme_id)
        throw ValidationError("labeling '" + annotation.trajectory_id + "' with scheme '" +
                              annotation.scheme_id + "' against priors for '" +
                              priors.scheme_id + "'");
    if (static_cast<int>(annotation.segments.size()) != priors.stage_count())
        throw ValidationError("annotation '" + annotation.trajectory_id + "' has " +
                              std::to_string(annotation.segments.size()) +
                              " segments, priors describe " +
                              std::to_string(priors.stage_count()) + " stages");

    std::vector<ProgressLabel> labels;
    labels.reserve(trajectory.frames.size());
    for (size_t k = 0; k < annotation.segments.size(); ++k) {
        const Segment& s = annotation.segments[k];
        const double span = static_cast<double>(s.end - s.start);
        for (int64_t t = s.start; t <= s.end; ++t) {
            ProgressLabel lab;
            lab.t = t;
            lab.stage = static_cast<int>(k) + 1;
            lab.tau = static_cast<double>(t - s.start) / span;
            lab.y = compose_progress(priors, lab.stage, lab.tau);
            labels.push_back(lab);
        }
    }
    return labels;
}

DatasetLabels label_dataset(const std::vector<TrajectoryAnnotation>& annotations,
                            const std::vector<Trajectory>& trajectories,
                            const PriorProfile& priors) {
    std::unordered_map<std::string, const Trajectory*> by_id;
    for (const Trajectory& t : trajectories) by_id.emplace(t.id, &t);

    DatasetLabels out;
    out.summary.frames_per_stage.assign(priors.stage_count(), 0);
    for (const TrajectoryAnnotation& a : annotations) {
        auto it = by_id.find(a.trajectory_id);
        if (it == by_id.end())
            throw ValidationError("label_dataset: unknown trajectory '" + a.trajectory_id + "'");
        std::vector<ProgressLabel> labels;
        try {
            labels = label_trajectory(a, *it->second, priors);
        } catch (const Error& e) {
            throw ValidationError("label_dataset: trajectory '" + a.trajectory_id +
                                  "': " + e.what());
        }
        for (const ProgressLabel& lab : labels)
            out.summary.frames_per_stage[lab.stage - 1] += 1;
        out.summary.total_frames += static_cast<int64_t>(labels.size());
        out.by_trajectory.emplace(a.trajectory_id, std::move(labels));
    }
    out.summary.trajectory_count = static_cast<int64_t>(out.by_trajectory.size());
    return out;
}

} // namespace stagerm
