#include "stagerm/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "stagerm/errors.hpp"
#include "stagerm/rng.hpp"

namespace stagerm {

void Trajectory::validate() const {
    if (id.empty()) throw ValidationError("trajectory has empty id");
    if (fps <= 0) throw ValidationError("trajectory " + id + ": fps must be positive");
    if (frames.size() < 2)
        throw ValidationError("trajectory " + id + ": needs at least 2 frames");
    size_t fdim = frames.front().features.size();
    size_t jdim = frames.front().joint_state.size();
    size_t adim = frames.front().action.size();
    for (size_t i = 0; i < frames.size(); ++i) {
        const Frame& f = frames[i];
        if (f.index != static_cast<int64_t>(i))
            throw ValidationError("trajectory " + id + ": frame indices not contiguous at " +
                                  std::to_string(i));
        if (f.features.size() != fdim || f.joint_state.size() != jdim ||
            f.action.size() != adim)
            throw ValidationError("trajectory " + id + ": inconsistent vector dims at frame " +
                                  std::to_string(i));
    }
}

void AnnotationProtocol::validate() const {
    if (scheme_id.empty()) throw ValidationError("protocol has empty scheme id");
    if (subtasks.empty()) throw ValidationError("protocol " + scheme_id + ": no subtasks");
    std::set<std::string> seen(subtasks.begin(), subtasks.end());
    if (seen.size() != subtasks.size())
        throw ValidationError("protocol " + scheme_id + ": duplicate subtask labels");
}

ValidationResult validate_annotation(const TrajectoryAnnotation& annotation,
                                     const AnnotationProtocol& protocol,
                                     const Trajectory& trajectory) {
    protocol.validate();
    if (annotation.trajectory_id != trajectory.id)
        throw ValidationError("annotation for '" + annotation.trajectory_id +
                              "' checked against trajectory '" + trajectory.id + "'");
    if (annotation.scheme_id != protocol.scheme_id)
        throw ValidationError("annotation scheme '" + annotation.scheme_id +
                              "' does not match protocol '" + protocol.scheme_id + "'");

    ValidationResult result;
    auto& reasons = result.reasons;
    const int64_t last = trajectory.length() - 1;

    if (annotation.segments.size() != protocol.subtasks.size()) {
        reasons.push_back("incomplete sequence: " + std::to_string(annotation.segments.size()) +
                          " segments for " + std::to_string(protocol.subtasks.size()) +
                          " protocol subtasks");
    } else {
        for (size_t k = 0; k < annotation.segments.size(); ++k) {
            if (annotation.segments[k].label != protocol.subtasks[k]) {
                reasons.push_back("segment " + std::to_string(k + 1) + " labeled '" +
                                  annotation.segments[k].label + "', protocol expects '" +
                                  protocol.subtasks[k] + "'");
                break;
            }
        }
    }

    for (size_t k = 0; k < annotation.segments.size(); ++k) {
        const Segment& s = annotation.segments[k];
        if (s.start < 0 || s.end > last) {
            reasons.push_back("segment " + std::to_string(k + 1) + " [" +
                              std::to_string(s.start) + ", " + std::to_string(s.end) +
                              "] outside frame range [0, " + std::to_string(last) + "]");
            continue;
        }
        if (s.end <= s.start)
            reasons.push_back("segment " + std::to_string(k + 1) +
                              " spans fewer than two frames");
    }

    if (!annotation.segments.empty()) {
        if (annotation.segments.front().start != 0)
            reasons.push_back("coverage gap: first segment starts at " +
                              std::to_string(annotation.segments.front().start));
        if (annotation.segments.back().end != last)
            reasons.push_back("coverage gap: last segment ends at " +
                              std::to_string(annotation.segments.back().end) + ", trajectory ends at " +
                              std::to_string(last));
        for (size_t k = 1; k < annotation.segments.size(); ++k) {
            int64_t prev_end = annotation.segments[k - 1].end;
            int64_t next_start = annotation.segments[k].start;
            if (next_start != prev_end + 1)
                reasons.push_back(next_start <= prev_end
                                      ? "segments " + std::to_string(k) + " and " +
                                            std::to_string(k + 1) + " overlap"
                                      : "coverage gap between segments " + std::to_string(k) +
                                            " and " + std::to_string(k + 1));
        }
    }

    if (!annotation.mistakes.empty())
        reasons.push_back("contains " + std::to_string(annotation.mistakes.size()) +
                          " recorded mistake(s)");

    result.valid = reasons.empty();
    return result;
}

FilterReport filter_dataset(const std::vector<TrajectoryAnnotation>& annotations,
                            const AnnotationProtocol& protocol,
                            const std::vector<Trajectory>& trajectories) {
    std::unordered_map<std::string, const Trajectory*> by_id;
    for (const Trajectory& t : trajectories) {
        if (!by_id.emplace(t.id, &t).second)
            throw ValidationError("duplicate trajectory id '" + t.id + "'");
    }
    std::unordered_set<std::string> seen;
    FilterReport report;
    for (const TrajectoryAnnotation& a : annotations) {
        if (!seen.insert(a.trajectory_id).second)
            throw ValidationError("duplicate annotation for trajectory '" + a.trajectory_id + "'");
        auto it = by_id.find(a.trajectory_id);
        if (it == by_id.end())
            throw ValidationError("annotation references unknown trajectory '" +
                                  a.trajectory_id + "'");
        ValidationResult v = validate_annotation(a, protocol, *it->second);
        if (v.valid)
            report.kept.push_back(a.trajectory_id);
        else
            report.rejected.emplace_back(a.trajectory_id, v.reasons.front());
    }
    return report;
}

DatasetSplit split_dataset(const std::vector<std::string>& ids,
                           double holdout_fraction,
                           uint64_t seed) {
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
        throw ValidationError("holdout fraction must lie in [0, 1)");
    {
        std::unordered_set<std::string> seen(ids.begin(), ids.end());
        if (seen.size() != ids.size()) throw ValidationError("split_dataset: duplicate ids");
    }
    auto n_test = static_cast<size_t>(
        std::llround(holdout_fraction * static_cast<double>(ids.size())));

    std::vector<size_t> order(ids.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = derive_stream(seed, "dataset-split");
    rng.shuffle(order);

    std::vector<bool> is_test(ids.size(), false);
    for (size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;

    DatasetSplit split;
    for (size_t i = 0; i < ids.size(); ++i)
        (is_test[i] ? split.test : split.train).push_back(ids[i]);
    return split;
}

} // namespace stagerm
