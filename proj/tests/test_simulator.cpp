#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "stagerm/errors.hpp"
#include "stagerm/labeling.hpp"
#include "stagerm/rollout_eval.hpp"
#include "stagerm/simulator.hpp"

using namespace stagerm;

namespace {

SimConfig quick_config(uint64_t seed = 5) {
    SimConfig cfg;
    cfg.seed = seed;
    return cfg;
}

bool same_trajectory(const Trajectory& a, const Trajectory& b) {
    if (a.id != b.id || a.length() != b.length()) return false;
    for (int64_t i = 0; i < a.length(); ++i) {
        const Frame& fa = a.frames[static_cast<size_t>(i)];
        const Frame& fb = b.frames[static_cast<size_t>(i)];
        if (fa.features != fb.features || fa.joint_state != fb.joint_state ||
            fa.action != fb.action)
            return false;
    }
    return true;
}

// longest run of consecutive equal tau values inside one stage
int64_t longest_flat_run(const SimTrajectory& s) {
    int64_t best = 1, run = 1;
    for (size_t i = 1; i < s.tau_true.size(); ++i) {
        if (s.stage_true[i] == s.stage_true[i - 1] && s.tau_true[i] == s.tau_true[i - 1])
            ++run;
        else
            run = 1;
        best = std::max(best, run);
    }
    return best;
}

} // namespace

TEST_CASE("config and mix validation") {
    SimConfig cfg = quick_config();
    CHECK_NOTHROW(cfg.validate());
    SimConfig bad = cfg;
    bad.feature_dim = cfg.stage_count + 1; // needs one-hot block plus 2
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.min_stage_frames = 1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.max_stage_frames = cfg.min_stage_frames - 1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);

    FailureMix mix;
    mix.stall = 0.3;
    mix.misgrasp = 0.3;
    CHECK_NOTHROW(mix.validate());
    CHECK(mix.expert() == doctest::Approx(0.4).epsilon(1e-12));
    mix.regression = 0.5;
    CHECK_THROWS_AS(mix.validate(), ValidationError);
    FailureMix neg;
    neg.stall = -0.1;
    CHECK_THROWS_AS(neg.validate(), ValidationError);
}

TEST_CASE("expert episodes are deterministic, valid, and self-consistent") {
    SimConfig cfg = quick_config();
    SimTrajectory a = gen_expert(cfg, 3);
    SimTrajectory b = gen_expert(cfg, 3);
    CHECK(same_trajectory(a.trajectory, b.trajectory));
    CHECK(a.y_true == b.y_true);

    SimTrajectory c = gen_expert(cfg, 4);
    CHECK_FALSE(same_trajectory(a.trajectory, c.trajectory));

    CHECK_NOTHROW(a.trajectory.validate());
    CHECK(a.quality == Quality::expert);
    CHECK(a.trajectory.task_id == cfg.task_id);
    AnnotationProtocol proto = default_protocol(cfg);
    CHECK(validate_annotation(a.annotation, proto, a.trajectory).valid);

    const int64_t T = a.trajectory.length();
    REQUIRE(static_cast<int64_t>(a.y_true.size()) == T);
    REQUIRE(static_cast<int64_t>(a.stage_true.size()) == T);
    CHECK(a.y_true.front() == 0.0);
    CHECK(a.y_true.back() == 1.0);
    for (size_t i = 1; i < a.y_true.size(); ++i) CHECK(a.y_true[i] >= a.y_true[i - 1]);
    for (uint8_t m : a.corrupted) CHECK(m == 0);

    // frame vector dims
    const Frame& f = a.trajectory.frames.front();
    CHECK(static_cast<int>(f.features.size()) == cfg.feature_dim);
    CHECK(static_cast<int>(f.joint_state.size()) == kSimJointDim);
    CHECK(static_cast<int>(f.action.size()) == kSimActionDim);
}

TEST_CASE("recorded actions replay the fixed action map exactly") {
    SimConfig cfg = quick_config(11);
    SimTrajectory s = gen_expert(cfg, 0);
    ActionMap map = make_action_map(cfg.feature_dim);
    for (const Frame& f : s.trajectory.frames) {
        std::vector<double> expect = map.apply(f.features);
        CHECK(expect == f.action); // bitwise: same inputs, same expression
    }
    // the map itself is seed-independent
    ActionMap again = make_action_map(cfg.feature_dim);
    CHECK(map.w == again.w);
    CHECK(map.b == again.b);
}

TEST_CASE("expert ground truth equals the labeler output bit for bit") {
    SimConfig cfg = quick_config(13);
    FailureMix mix; // all expert
    SimDataset ds = gen_dataset(cfg, 6, mix);
    REQUIRE(ds.items.size() == 6);
    REQUIRE(ds.filter.kept.size() == 6);

    for (const SimTrajectory& s : ds.items) {
        std::vector<ProgressLabel> labels =
            label_trajectory(s.annotation, s.trajectory, ds.priors);
        REQUIRE(labels.size() == s.y_true.size());
        for (size_t i = 0; i < labels.size(); ++i) {
            CHECK(labels[i].stage == s.stage_true[i]);
            CHECK(labels[i].tau == s.tau_true[i]); // exact
            CHECK(labels[i].y == s.y_true[i]);     // exact
        }
    }
}

TEST_CASE("stalls freeze within-stage progress for a long run") {
    SimConfig cfg = quick_config(17);
    SimTrajectory expert = gen_expert(cfg, 0);
    SimTrajectory stalled = gen_suboptimal(cfg, 0, Quality::stall);
    CHECK(longest_flat_run(expert) == 1);
    CHECK(longest_flat_run(stalled) >= cfg.min_stage_frames / 2);
    CHECK(stalled.quality == Quality::stall);
    CHECK(stalled.y_true.back() == 1.0); // still completes
    AnnotationProtocol proto = default_protocol(cfg);
    CHECK(validate_annotation(stalled.annotation, proto, stalled.trajectory).valid);
}

TEST_CASE("misgrasp wobbles but still completes cleanly") {
    SimConfig cfg = quick_config(19);
    SimTrajectory s = gen_suboptimal(cfg, 1, Quality::misgrasp);
    CHECK(s.quality == Quality::misgrasp);
    CHECK(s.y_true.back() == 1.0);
    for (double y : s.y_true) {
        CHECK(y >= 0.0);
        CHECK(y <= 1.0);
    }
    // the true fraction wobbles around the annotation's straight line inside
    // one stage; that deviation is what distinguishes it from an expert
    double worst_dev = 0.0;
    for (const Segment& seg : s.annotation.segments) {
        const double span = static_cast<double>(seg.end - seg.start);
        for (int64_t t = seg.start; t <= seg.end; ++t) {
            double lin = static_cast<double>(t - seg.start) / span;
            worst_dev = std::max(worst_dev,
                                 std::abs(s.tau_true[static_cast<size_t>(t)] - lin));
        }
    }
    CHECK(worst_dev > 0.02);
    AnnotationProtocol proto = default_protocol(cfg);
    CHECK(validate_annotation(s.annotation, proto, s.trajectory).valid);
    for (uint8_t m : s.corrupted) CHECK(m == 0); // actions stay clean
}

TEST_CASE("regression corrupts a span and records the mistake") {
    SimConfig cfg = quick_config(23);
    SimTrajectory s = gen_suboptimal(cfg, 2, Quality::regression);
    CHECK(s.quality == Quality::regression);

    REQUIRE_FALSE(s.annotation.mistakes.empty());
    const Span& span = s.annotation.mistakes.front();
    CHECK(span.end - span.start + 1 > 25); // longer than one action chunk

    // corrupted mask covers exactly the mistake span
    int64_t lo = -1, hi = -1;
    for (size_t i = 0; i < s.corrupted.size(); ++i)
        if (s.corrupted[i]) {
            if (lo < 0) lo = static_cast<int64_t>(i);
            hi = static_cast<int64_t>(i);
        }
    CHECK(lo == span.start);
    CHECK(hi == span.end);

    // progress falls during the mistake
    bool falls = false;
    for (int64_t t = span.start; t < span.end; ++t)
        if (s.y_true[static_cast<size_t>(t + 1)] < s.y_true[static_cast<size_t>(t)]) falls = true;
    CHECK(falls);

    // corrupted frames store the negated demonstrator action
    ActionMap map = make_action_map(cfg.feature_dim);
    for (size_t i = 0; i < s.corrupted.size(); ++i) {
        const Frame& f = s.trajectory.frames[i];
        std::vector<double> clean = map.apply(f.features);
        if (s.corrupted[i]) {
            for (int d = 0; d < kSimActionDim; ++d)
                CHECK(f.action[static_cast<size_t>(d)] == -clean[static_cast<size_t>(d)]);
        } else {
            CHECK(f.action == clean);
        }
    }

    // the filter must reject it
    AnnotationProtocol proto = default_protocol(cfg);
    CHECK_FALSE(validate_annotation(s.annotation, proto, s.trajectory).valid);
}

TEST_CASE("premature stops cap progress and annotate only what happened") {
    SimConfig cfg = quick_config(29);
    SimTrajectory s = gen_suboptimal(cfg, 3, Quality::premature);
    CHECK(s.quality == Quality::premature);
    CHECK(static_cast<int>(s.annotation.segments.size()) < cfg.stage_count);
    CHECK(s.y_true.back() <= 0.75 + 1e-9);
    AnnotationProtocol proto = default_protocol(cfg);
    CHECK_FALSE(validate_annotation(s.annotation, proto, s.trajectory).valid);
}

TEST_CASE("dataset generation honors the quality labels and filter rules") {
    SimConfig cfg = quick_config(31);
    FailureMix mix;
    mix.stall = 0.2;
    mix.misgrasp = 0.2;
    mix.regression = 0.2;
    mix.premature = 0.2;
    SimDataset ds = gen_dataset(cfg, 40, mix);
    REQUIRE(ds.items.size() == 40);

    std::map<Quality, int> counts;
    for (const SimTrajectory& s : ds.items) counts[s.quality] += 1;
    CHECK(counts.size() == 5); // all qualities appear at this size

    std::map<std::string, const SimTrajectory*> by_id;
    for (const SimTrajectory& s : ds.items) by_id[s.trajectory.id] = &s;
    for (const std::string& id : ds.filter.kept) {
        Quality q = by_id.at(id)->quality;
        bool keepable = q == Quality::expert || q == Quality::stall || q == Quality::misgrasp;
        CHECK(keepable);
    }
    for (const auto& [id, reason] : ds.filter.rejected) {
        Quality q = by_id.at(id)->quality;
        bool rejectable = q == Quality::regression || q == Quality::premature;
        CHECK(rejectable);
    }

    CHECK_NOTHROW(ds.priors.validate());
    CHECK(ds.priors.trajectory_count == static_cast<int64_t>(ds.filter.kept.size()));
    CHECK(ds.protocol.stage_count() == cfg.stage_count);
}

TEST_CASE("emission is byte-identical across thread counts") {
    SimConfig cfg = quick_config(37);
    FailureMix mix;
    mix.stall = 0.25;
    mix.regression = 0.25;
    SimDataset one = gen_dataset(cfg, 10, mix, 1);
    SimDataset four = gen_dataset(cfg, 10, mix, 4);
    REQUIRE(one.items.size() == four.items.size());
    for (size_t i = 0; i < one.items.size(); ++i) {
        CHECK(same_trajectory(one.items[i].trajectory, four.items[i].trajectory));
        CHECK(one.items[i].y_true == four.items[i].y_true);
        CHECK(one.items[i].corrupted == four.items[i].corrupted);
    }
    CHECK(one.priors.alpha == four.priors.alpha);
    CHECK(one.priors.cumulative == four.priors.cumulative);
}

TEST_CASE("rollout sets separate the three outcome classes") {
    SimConfig cfg = quick_config(41);
    SimRolloutSet set = gen_rollout_set(cfg, 3, 3, 3);
    REQUIRE(set.items.size() == 9);
    REQUIRE(set.truth.size() == 9);

    std::vector<RolloutTrace> traces = truth_traces(set);
    EvalReport report = classify_rollouts(traces);
    REQUIRE(report.rho.has_value());
    CHECK(*report.rho == 1.0);

    for (size_t i = 0; i < set.items.size(); ++i) {
        const SimTrajectory& s = set.items[i];
        CHECK_NOTHROW(s.trajectory.validate());
        if (set.truth[i] == RolloutClass::SE) {
            CHECK(s.y_true.back() == 1.0);
        } else if (set.truth[i] == RolloutClass::FE) {
            CHECK(*std::max_element(s.y_true.begin(), s.y_true.end()) < 0.25);
        } else {
            double top = *std::max_element(s.y_true.begin(), s.y_true.end());
            CHECK(top > 0.3);
            CHECK(top < 0.8);
        }
    }

    // deterministic
    SimRolloutSet again = gen_rollout_set(cfg, 3, 3, 3);
    for (size_t i = 0; i < set.items.size(); ++i)
        CHECK(same_trajectory(set.items[i].trajectory, again.items[i].trajectory));

    // unbalanced sets are fine too
    SimRolloutSet lopsided = gen_rollout_set(cfg, 1, 0, 2);
    CHECK(lopsided.items.size() == 3);
}
