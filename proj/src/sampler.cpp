#include "stagerm/sampler.hpp"

#include <algorithm>

#include "stagerm/errors.hpp"

namespace stagerm {

void SamplerConfig::validate() const {
    if (sequence_length < 2) throw ValidationError("sampler: sequence_length must be >= 2");
    if (frame_gap < 1) throw ValidationError("sampler: frame_gap must be >= 1");
    if (max_rewind < 0 || max_rewind >= sequence_length)
        throw ValidationError("sampler: max_rewind must lie in [0, sequence_length)");
    if (!(p_rewind >= 0.0 && p_rewind <= 1.0))
        throw ValidationError("sampler: p_rewind outside [0, 1]");
    if (!(p_perturb >= 0.0 && p_perturb <= 1.0))
        throw ValidationError("sampler: p_perturb outside [0, 1]");
}

std::pair<int64_t, int64_t> admissible_anchor_range(int64_t length, const SamplerConfig& config) {
    config.validate();
    const int64_t n = config.sequence_length;
    const int64_t g = config.frame_gap;
    const int64_t lo = g;
    const int64_t hi = length - 1 - (n - 2) * g;
    if (length < (n - 1) * g + 1 || hi < lo)
        throw ValidationError("trajectory too short for sampler geometry: T=" +
                              std::to_string(length) + " needs at least " +
                              std::to_string((n - 1) * g + 1) + " frames");
    return {lo, hi};
}

int shrink_gap_to_fit(int64_t length, const SamplerConfig& config) {
    const int64_t n = config.sequence_length;
    // largest G' with (N-1)G' + 1 <= T
    int64_t g = (length - 1) / (n - 1);
    if (g < 1)
        throw ValidationError("trajectory too short even for gap 1: T=" +
                              std::to_string(length) + ", sequence length " + std::to_string(n));
    return static_cast<int>(std::min<int64_t>(g, config.frame_gap));
}

namespace {

void check_labels(const Trajectory& trajectory, const std::vector<ProgressLabel>& labels) {
    if (static_cast<int64_t>(labels.size()) != trajectory.length())
        throw ValidationError("labels for '" + trajectory.id + "' cover " +
                              std::to_string(labels.size()) + " frames, trajectory has " +
                              std::to_string(trajectory.length()));
}

void place_frame(SequenceSample& sample, const Trajectory& trajectory,
                 const std::vector<ProgressLabel>& labels, size_t position, int64_t source) {
    const Frame& f = trajectory.frames[static_cast<size_t>(source)];
    const ProgressLabel& lab = labels[static_cast<size_t>(source)];
    sample.frame_indices[position] = source;
    sample.features[position] = f.features;
    if (!f.joint_state.empty()) sample.joint_states[position] = f.joint_state;
    sample.stage_targets[position] = lab.stage;
    sample.tau_targets[position] = lab.tau;
    sample.progress_targets[position] = lab.y;
}

} // namespace

SequenceSample sample_sequence_at(const Trajectory& trajectory,
                                  const std::vector<ProgressLabel>& labels,
                                  const SamplerConfig& config,
                                  int64_t anchor) {
    auto [lo, hi] = admissible_anchor_range(trajectory.length(), config);
    if (anchor < lo || anchor > hi)
        throw ValidationError("anchor " + std::to_string(anchor) + " outside admissible [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
    check_labels(trajectory, labels);

    const size_t n = static_cast<size_t>(config.sequence_length);
    SequenceSample sample;
    sample.trajectory_id = trajectory.id;
    sample.task_id_presented = trajectory.task_id;
    sample.frame_indices.assign(n, 0);
    sample.features.assign(n, {});
    if (!trajectory.frames.front().joint_state.empty()) sample.joint_states.assign(n, {});
    sample.stage_targets.assign(n, 1);
    sample.tau_targets.assign(n, 0.0);
    sample.progress_targets.assign(n, 0.0);
    sample.rewind_mask.assign(n, false);

    place_frame(sample, trajectory, labels, 0, 0);
    for (size_t j = 1; j < n; ++j)
        place_frame(sample, trajectory, labels, j,
                    anchor + static_cast<int64_t>(j - 1) * config.frame_gap);
    return sample;
}

SequenceSample sample_sequence(const Trajectory& trajectory,
                               const std::vector<ProgressLabel>& labels,
                               const SamplerConfig& config,
                               Rng& rng) {
    auto [lo, hi] = admissible_anchor_range(trajectory.length(), config);
    return sample_sequence_at(trajectory, labels, config, rng.uniform_int(lo, hi));
}

SequenceSample rewind_augment_with(const SequenceSample& sample,
                                   const Trajectory& trajectory,
                                   const std::vector<ProgressLabel>& labels,
                                   const SamplerConfig& config,
                                   int rewind) {
    config.validate();
    check_labels(trajectory, labels);
    const int n = static_cast<int>(sample.frame_indices.size());
    if (rewind > config.max_rewind || rewind >= n)
        throw ValidationError("rewind " + std::to_string(rewind) + " exceeds limit");

    // Cap so the earliest rewound source stays at or after frame 0; with no
    // room at all this degenerates to the identity.
    int r = rewind;
    while (r > 0) {
        int64_t last_kept = sample.frame_indices[static_cast<size_t>(n - 1 - r)];
        if (last_kept - static_cast<int64_t>(r) * config.frame_gap >= 0) break;
        --r;
    }
    if (r <= 0) return sample;

    SequenceSample out = sample;
    const int64_t last_kept = out.frame_indices[static_cast<size_t>(n - 1 - r)];
    for (int i = 0; i < r; ++i) {
        const size_t position = static_cast<size_t>(n - r + i);
        const int64_t source = last_kept - static_cast<int64_t>(i + 1) * config.frame_gap;
        place_frame(out, trajectory, labels, position, source);
        out.rewind_mask[position] = true;
    }
    return out;
}

SequenceSample rewind_augment(const SequenceSample& sample,
                              const Trajectory& trajectory,
                              const std::vector<ProgressLabel>& labels,
                              const SamplerConfig& config,
                              Rng& rng) {
    config.validate();
    if (config.max_rewind == 0 || !rng.bernoulli(config.p_rewind)) return sample;
    int r = static_cast<int>(rng.uniform_int(1, config.max_rewind));
    return rewind_augment_with(sample, trajectory, labels, config, r);
}

SequenceSample perturb_instruction_to(const SequenceSample& sample,
                                      const std::string& other_task_id) {
    if (other_task_id == sample.task_id_presented)
        throw ValidationError("perturbation must present a different task id");
    SequenceSample out = sample;
    out.task_id_presented = other_task_id;
    out.instruction_match = false;
    // A mismatched instruction means no progress on the presented task: the
    // supervision collapses to stage 1 at tau 0, i.e. y = 0 at every position.
    std::fill(out.stage_targets.begin(), out.stage_targets.end(), 1);
    std::fill(out.tau_targets.begin(), out.tau_targets.end(), 0.0);
    std::fill(out.progress_targets.begin(), out.progress_targets.end(), 0.0);
    return out;
}

SequenceSample perturb_instruction(const SequenceSample& sample,
                                   const std::vector<std::string>& task_vocabulary,
                                   const SamplerConfig& config,
                                   Rng& rng) {
    config.validate();
    if (config.p_perturb <= 0.0) return sample;
    std::vector<std::string> others;
    for (const std::string& t : task_vocabulary)
        if (t != sample.task_id_presented) others.push_back(t);
    if (others.empty())
        throw ValidationError("instruction perturbation needs a vocabulary with at least one "
                              "task other than '" + sample.task_id_presented + "'");
    if (!rng.bernoulli(config.p_perturb)) return sample;
    const std::string& pick =
        others[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(others.size()) - 1))];
    return perturb_instruction_to(sample, pick);
}

SequenceSample draw_training_sample(const Trajectory& trajectory,
                                    const std::vector<ProgressLabel>& labels,
                                    const SamplerConfig& config,
                                    const std::vector<std::string>& task_vocabulary,
                                    uint64_t draw_index,
                                    MinLengthPolicy length_policy) {
    SamplerConfig effective = config;
    if (length_policy == MinLengthPolicy::shrink_gap)
        effective.frame_gap = shrink_gap_to_fit(trajectory.length(), config);

    Rng rng = derive_stream(config.seed, trajectory.id, draw_index);
    SequenceSample s = sample_sequence(trajectory, labels, effective, rng);
    s = rewind_augment(s, trajectory, labels, effective, rng);
    s = perturb_instruction(s, task_vocabulary, effective, rng);
    return s;
}

} // namespace stagerm
