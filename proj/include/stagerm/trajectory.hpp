#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace stagerm {

struct Frame {
    int64_t index = 0;
    double time_s = 0.0;
    std::vector<double> features;
    std::vector<double> joint_state; // empty when the dataset records none
    std::vector<double> action;      // empty when the dataset records none
};

struct Trajectory {
    std::string id;
    std::string task_id;
    int fps = 30;
    std::vector<Frame> frames;

    int64_t length() const { return static_cast<int64_t>(frames.size()); }

    // Throws ValidationError on: empty id, fps <= 0, fewer than 2 frames,
    // non-contiguous frame indices, or inconsistent vector dims across frames.
    void validate() const;
};

// Ordered list of subtask labels for one annotation scheme.
struct AnnotationProtocol {
    std::string scheme_id;
    std::vector<std::string> subtasks;

    int stage_count() const { return static_cast<int>(subtasks.size()); }
    void validate() const; // non-empty, unique labels
};

// Inclusive frame range [start, end] carrying one subtask label.
struct Segment {
    std::string label;
    int64_t start = 0;
    int64_t end = 0;

    int64_t length() const { return end - start + 1; }
};

struct Span {
    int64_t start = 0;
    int64_t end = 0;
};

struct TrajectoryAnnotation {
    std::string trajectory_id;
    std::string scheme_id;
    std::vector<Segment> segments;
    std::vector<Span> mistakes;
};

struct ValidationResult {
    bool valid = false;
    std::vector<std::string> reasons; // empty iff valid
};

// Checks an annotation against a protocol and its trajectory. A trajectory is
// usable for reward training only if the verdict is valid: the segments must
// spell out the protocol's full label sequence in order, tile [0, T-1] exactly
// with no gaps or overlaps, every segment must span at least two frames, and
// the mistake list must be empty. Mismatched ids or schemes are a hard error
// (ValidationError), not an invalid verdict.
ValidationResult validate_annotation(const TrajectoryAnnotation& annotation,
                                     const AnnotationProtocol& protocol,
                                     const Trajectory& trajectory);

struct FilterReport {
    std::vector<std::string> kept; // trajectory ids, input order
    std::vector<std::pair<std::string, std::string>> rejected; // id -> reason
};

// Batch validation. Rejected trajectories are reported with the first failure
// reason, never silently dropped. Duplicate trajectory ids are a hard error.
FilterReport filter_dataset(const std::vector<TrajectoryAnnotation>& annotations,
                            const AnnotationProtocol& protocol,
                            const std::vector<Trajectory>& trajectories);

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

// Seeded train/test partition. |test| = round(holdout_fraction * |ids|).
// Membership comes from a seeded Fisher-Yates pass, so the same (ids, seed)
// pair gives the same split on every platform. Both output lists preserve
// the input order.
DatasetSplit split_dataset(const std::vector<std::string>& ids,
                           double holdout_fraction,
                           uint64_t seed);

} // namespace stagerm
