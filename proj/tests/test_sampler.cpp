#include "doctest.h"

#include <set>
#include <string>
#include <vector>

#include "stagerm/errors.hpp"
#include "stagerm/labeling.hpp"
#include "stagerm/sampler.hpp"

using namespace stagerm;

namespace {

Trajectory indexed_traj(const std::string& id, int64_t frames) {
    Trajectory t;
    t.id = id;
    t.task_id = "stack";
    t.fps = 30;
    for (int64_t i = 0; i < frames; ++i) {
        Frame f;
        f.index = i;
        f.time_s = static_cast<double>(i) / 30.0;
        f.features = {static_cast<double>(i), 1.0}; // dim 0 identifies the frame
        f.joint_state = {static_cast<double>(i) * 0.5};
        t.frames.push_back(std::move(f));
    }
    return t;
}

TrajectoryAnnotation tiled(const std::string& id, const std::vector<int64_t>& lengths) {
    TrajectoryAnnotation a;
    a.trajectory_id = id;
    a.scheme_id = "sparse";
    int64_t start = 0;
    for (size_t k = 0; k < lengths.size(); ++k) {
        a.segments.push_back({"s" + std::to_string(k + 1), start, start + lengths[k] - 1});
        start += lengths[k];
    }
    return a;
}

struct Fixture {
    Trajectory traj = indexed_traj("demo", 300);
    TrajectoryAnnotation ann = tiled("demo", {60, 90, 150});
    PriorProfile priors = compute_priors({ann}, {traj});
    std::vector<ProgressLabel> labels = label_trajectory(ann, traj, priors);
    SamplerConfig cfg;
};

void check_targets_match_labels(const SequenceSample& s,
                                const std::vector<ProgressLabel>& labels) {
    for (size_t j = 0; j < s.frame_indices.size(); ++j) {
        const ProgressLabel& l = labels[static_cast<size_t>(s.frame_indices[j])];
        CHECK(s.stage_targets[j] == l.stage);
        CHECK(s.tau_targets[j] == l.tau);
        CHECK(s.progress_targets[j] == l.y);
        CHECK(s.features[j][0] == static_cast<double>(s.frame_indices[j]));
    }
}

} // namespace

TEST_CASE("admissible anchors cover exactly the feasible range") {
    SamplerConfig cfg; // N=9, G=30 -> needs T >= 241
    auto [lo, hi] = admissible_anchor_range(300, cfg);
    CHECK(lo == 30);
    CHECK(hi == 300 - 1 - 7 * 30); // 89
    auto tight = admissible_anchor_range(241, cfg);
    CHECK(tight.first == 30);
    CHECK(tight.second == 30);
    CHECK_THROWS_AS(admissible_anchor_range(240, cfg), ValidationError);
}

TEST_CASE("shrink_gap_to_fit finds the largest feasible gap") {
    SamplerConfig cfg;
    CHECK(shrink_gap_to_fit(241, cfg) == 30);
    CHECK(shrink_gap_to_fit(100, cfg) == 12); // floor(99 / 8)
    CHECK(shrink_gap_to_fit(9, cfg) == 1);
    CHECK_THROWS_AS(shrink_gap_to_fit(8, cfg), ValidationError);
}

TEST_CASE("sample structure: episode start plus an even-gap tail") {
    Fixture fx;
    SequenceSample s = sample_sequence_at(fx.traj, fx.labels, fx.cfg, 40);
    REQUIRE(s.frame_indices.size() == 9);
    CHECK(s.frame_indices[0] == 0);
    for (int j = 1; j < 9; ++j) CHECK(s.frame_indices[j] == 40 + (j - 1) * 30);
    CHECK(s.trajectory_id == "demo");
    CHECK(s.task_id_presented == "stack");
    CHECK(s.instruction_match);
    for (bool m : s.rewind_mask) CHECK_FALSE(m);
    CHECK(s.joint_states.size() == 9);
    check_targets_match_labels(s, fx.labels);

    CHECK_THROWS_AS(sample_sequence_at(fx.traj, fx.labels, fx.cfg, 29), ValidationError);
    CHECK_THROWS_AS(sample_sequence_at(fx.traj, fx.labels, fx.cfg, 90), ValidationError);
}

TEST_CASE("rewind replaces the suffix, stepping back by G") {
    Fixture fx;
    SequenceSample base = sample_sequence_at(fx.traj, fx.labels, fx.cfg, 60);
    // tail frames 60, 90, ..., 270
    SequenceSample r = rewind_augment_with(base, fx.traj, fx.labels, fx.cfg, 3);
    REQUIRE(r.frame_indices.size() == 9);
    // positions 0..5 untouched
    for (int j = 0; j < 6; ++j) {
        CHECK(r.frame_indices[j] == base.frame_indices[j]);
        CHECK_FALSE(r.rewind_mask[j]);
    }
    // last kept frame is 180; the rewound suffix walks 150, 120, 90
    CHECK(r.frame_indices[6] == 150);
    CHECK(r.frame_indices[7] == 120);
    CHECK(r.frame_indices[8] == 90);
    for (int j = 6; j < 9; ++j) CHECK(r.rewind_mask[j]);
    check_targets_match_labels(r, fx.labels);

    SequenceSample zero = rewind_augment_with(base, fx.traj, fx.labels, fx.cfg, 0);
    CHECK(zero.frame_indices == base.frame_indices);
}

TEST_CASE("rewind never walks past frame 0") {
    Fixture fx;
    fx.cfg.max_rewind = 8;
    SequenceSample base = sample_sequence_at(fx.traj, fx.labels, fx.cfg, 30);
    // a full-suffix rewind would need sources far below frame 0; the cap must
    // shrink it until every source index stays valid
    SequenceSample r = rewind_augment_with(base, fx.traj, fx.labels, fx.cfg, 8);
    for (int64_t idx : r.frame_indices) {
        CHECK(idx >= 0);
        CHECK(idx < 300);
    }
    check_targets_match_labels(r, fx.labels);
}

TEST_CASE("instruction perturbation rewires supervision to zero progress") {
    Fixture fx;
    SequenceSample base = sample_sequence_at(fx.traj, fx.labels, fx.cfg, 50);
    SequenceSample p = perturb_instruction_to(base, "fold");
    CHECK(p.task_id_presented == "fold");
    CHECK_FALSE(p.instruction_match);
    CHECK(p.frame_indices == base.frame_indices);
    CHECK(p.features == base.features); // observations unchanged
    for (size_t j = 0; j < p.frame_indices.size(); ++j) {
        CHECK(p.stage_targets[j] == 1);
        CHECK(p.tau_targets[j] == 0.0);
        CHECK(p.progress_targets[j] == 0.0);
    }
}

TEST_CASE("perturbation demands an alternative task up front") {
    Fixture fx;
    fx.cfg.p_perturb = 0.4;
    Rng rng(5);
    SequenceSample base = sample_sequence_at(fx.traj, fx.labels, fx.cfg, 50);
    // vocabulary without any other task: error even if the coin would say no
    CHECK_THROWS_AS(perturb_instruction(base, {"stack"}, fx.cfg, rng), ValidationError);

    fx.cfg.p_perturb = 0.0;
    Rng rng2(5);
    SequenceSample same = perturb_instruction(base, {"stack"}, fx.cfg, rng2);
    CHECK(same.instruction_match);

    fx.cfg.p_perturb = 1.0;
    Rng rng3(5);
    SequenceSample flipped = perturb_instruction(base, {"stack", "fold", "wipe"}, fx.cfg, rng3);
    CHECK_FALSE(flipped.instruction_match);
    CHECK(flipped.task_id_presented != "stack");
}

TEST_CASE("draws are reproducible and respect the anchor range") {
    Fixture fx;
    fx.cfg.p_perturb = 0.2;
    std::vector<std::string> vocab = {"stack", "fold"};
    std::set<int64_t> anchors;
    for (uint64_t d = 0; d < 20; ++d) {
        SequenceSample s1 = draw_training_sample(fx.traj, fx.labels, fx.cfg, vocab, d);
        SequenceSample s2 = draw_training_sample(fx.traj, fx.labels, fx.cfg, vocab, d);
        CHECK(s1.frame_indices == s2.frame_indices);
        CHECK(s1.rewind_mask == s2.rewind_mask);
        CHECK(s1.task_id_presented == s2.task_id_presented);
        CHECK(s1.progress_targets == s2.progress_targets);

        CHECK(s1.frame_indices[0] == 0);
        CHECK(s1.frame_indices[1] >= 30);
        CHECK(s1.frame_indices[1] <= 89);
        for (int64_t idx : s1.frame_indices) {
            CHECK(idx >= 0);
            CHECK(idx < 300);
        }
        anchors.insert(s1.frame_indices[1]);
        if (s1.instruction_match) check_targets_match_labels(s1, fx.labels);
    }
    CHECK(anchors.size() > 1); // the anchor actually varies across draw indices
}

TEST_CASE("draws from different seeds differ") {
    Fixture fx;
    fx.cfg.p_perturb = 0.0; // single-task vocabulary
    std::vector<std::string> vocab = {"stack"};
    SequenceSample a = draw_training_sample(fx.traj, fx.labels, fx.cfg, vocab, 0);
    fx.cfg.seed = 1;
    SequenceSample b = draw_training_sample(fx.traj, fx.labels, fx.cfg, vocab, 0);
    bool differs = a.frame_indices != b.frame_indices || a.rewind_mask != b.rewind_mask;
    CHECK(differs);
}

TEST_CASE("short trajectories: error policy throws, shrink-gap fits") {
    Trajectory shortie = indexed_traj("short", 100);
    TrajectoryAnnotation ann = tiled("short", {20, 30, 50});
    PriorProfile priors = compute_priors({ann}, {shortie});
    std::vector<ProgressLabel> labels = label_trajectory(ann, shortie, priors);
    SamplerConfig cfg;
    cfg.p_perturb = 0.0; // single-task vocabulary
    std::vector<std::string> vocab = {"stack"};

    CHECK_THROWS_AS(
        draw_training_sample(shortie, labels, cfg, vocab, 0, MinLengthPolicy::error),
        ValidationError);

    SequenceSample s =
        draw_training_sample(shortie, labels, cfg, vocab, 0, MinLengthPolicy::shrink_gap);
    REQUIRE(s.frame_indices.size() == 9);
    CHECK(s.frame_indices[0] == 0);
    // shrunk gap is floor(99/8) = 12
    for (size_t j = 2; j < 9; ++j)
        if (!s.rewind_mask[j] && !s.rewind_mask[j - 1])
            CHECK(s.frame_indices[j] - s.frame_indices[j - 1] == 12);
    for (int64_t idx : s.frame_indices) {
        CHECK(idx >= 0);
        CHECK(idx < 100);
    }
    check_targets_match_labels(s, labels);
}

TEST_CASE("sampler config validation") {
    SamplerConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    SamplerConfig bad = cfg;
    bad.sequence_length = 1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.frame_gap = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.p_rewind = 1.5;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.max_rewind = 9; // must leave at least one tail frame kept
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}
