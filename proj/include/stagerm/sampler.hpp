#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stagerm/labeling.hpp"
#include "stagerm/rng.hpp"
#include "stagerm/trajectory.hpp"

namespace stagerm {

struct SamplerConfig {
    int sequence_length = 9; // N, frames per sample including the episode start
    int frame_gap = 30;      // G, frames between consecutive tail positions
    int max_rewind = 4;      // R_max
    double p_rewind = 0.5;
    double p_perturb = 0.1;
    uint64_t seed = 0;

    void validate() const;
};

// One training window. Position 0 always holds frame 0 of the episode; the
// tail holds frames a, a+G, ..., a+(N-2)G for an anchor a, possibly with its
// suffix replaced by rewound (earlier) frames. Targets are copied from the
// progress labels of whichever source frame ended up at each position.
struct SequenceSample {
    std::string trajectory_id;
    std::vector<int64_t> frame_indices;
    std::vector<std::vector<double>> features;
    std::vector<std::vector<double>> joint_states; // empty when unused
    std::vector<int> stage_targets;                // 1-based stage indices
    std::vector<double> tau_targets;
    std::vector<double> progress_targets;          // y in [0, 1]
    std::vector<bool> rewind_mask;                 // true where a frame was rewound
    bool instruction_match = true;
    std::string task_id_presented;
};

// Inclusive range of admissible anchors [G, T-1-(N-2)G]. Throws if the
// trajectory is too short, i.e. T < (N-1)G + 1.
std::pair<int64_t, int64_t> admissible_anchor_range(int64_t length, const SamplerConfig& config);

// Largest gap G' <= config.frame_gap that makes the trajectory admissible,
// used by the shrink-gap length policy. Throws when even G' = 1 will not fit.
int shrink_gap_to_fit(int64_t length, const SamplerConfig& config);

// Deterministic core: builds the window for a given anchor.
SequenceSample sample_sequence_at(const Trajectory& trajectory,
                                  const std::vector<ProgressLabel>& labels,
                                  const SamplerConfig& config,
                                  int64_t anchor);

// Draws the anchor uniformly from the admissible range.
SequenceSample sample_sequence(const Trajectory& trajectory,
                               const std::vector<ProgressLabel>& labels,
                               const SamplerConfig& config,
                               Rng& rng);

// Deterministic core: replaces the last `rewind` positions with frames stepping
// backward by G from the last kept frame. `rewind` is capped so no source frame
// precedes frame 0; rewind <= 0 leaves the sample untouched. Replaced positions
// get the labels of their source frames and are flagged in rewind_mask.
SequenceSample rewind_augment_with(const SequenceSample& sample,
                                   const Trajectory& trajectory,
                                   const std::vector<ProgressLabel>& labels,
                                   const SamplerConfig& config,
                                   int rewind);

// With probability p_rewind draws r uniformly from [1, R_max] and applies it.
SequenceSample rewind_augment(const SequenceSample& sample,
                              const Trajectory& trajectory,
                              const std::vector<ProgressLabel>& labels,
                              const SamplerConfig& config,
                              Rng& rng);

// Deterministic core: presents a different task id and zeroes the progress
// supervision (stage 1, tau 0, y 0 at every position, instruction_match false).
SequenceSample perturb_instruction_to(const SequenceSample& sample,
                                      const std::string& other_task_id);

// With probability p_perturb presents a task id drawn uniformly from the
// vocabulary minus the sample's own task. A vocabulary without at least one
// alternative is an error whenever p_perturb > 0.
SequenceSample perturb_instruction(const SequenceSample& sample,
                                   const std::vector<std::string>& task_vocabulary,
                                   const SamplerConfig& config,
                                   Rng& rng);

enum class MinLengthPolicy { error, shrink_gap };

// Full augmentation chain for one draw. Draws come from a stream derived from
// (config.seed, trajectory id, draw_index), so any subset of draws can be
// reproduced in isolation and workers never share generator state.
SequenceSample draw_training_sample(const Trajectory& trajectory,
                                    const std::vector<ProgressLabel>& labels,
                                    const SamplerConfig& config,
                                    const std::vector<std::string>& task_vocabulary,
                                    uint64_t draw_index,
                                    MinLengthPolicy length_policy = MinLengthPolicy::error);

} // namespace stagerm
