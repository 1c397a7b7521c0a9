#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "stagerm/errors.hpp"
#include "stagerm/labeling.hpp"
#include "stagerm/rollout_eval.hpp"
#include "stagerm/rng.hpp"

using namespace stagerm;

namespace {

RolloutTrace trace(const std::string& id, std::vector<double> progress,
                   std::optional<RolloutClass> truth = std::nullopt) {
    RolloutTrace t;
    t.rollout_id = id;
    t.progress = std::move(progress);
    t.truth = truth;
    return t;
}

// constant curve of a given mean with a controllable final value
std::vector<double> flat(double level, size_t n, double final_value) {
    std::vector<double> v(n, level);
    v.back() = final_value;
    return v;
}

std::vector<double> rise_to(double top, size_t n) {
    std::vector<double> v;
    for (size_t i = 0; i < n; ++i)
        v.push_back(top * static_cast<double>(i) / static_cast<double>(n - 1));
    return v;
}

RolloutClass predicted_class(const EvalReport& r, const std::string& id) {
    for (const auto& [rid, c] : r.predicted)
        if (rid == id) return c;
    throw std::runtime_error("missing id");
}

} // namespace

TEST_CASE("class names round-trip") {
    for (RolloutClass c : {RolloutClass::SE, RolloutClass::PSE, RolloutClass::FE})
        CHECK(rollout_class_from_string(to_string(c)) == c);
    CHECK_THROWS_AS(rollout_class_from_string("nope"), ValidationError);
}

TEST_CASE("success rule: strict final and last-third thresholds") {
    // last third of 90 frames starts at ceil(180/3) = 60
    std::vector<double> good(90, 0.0);
    for (size_t i = 60; i < 90; ++i) good[i] = 0.7; // last-third mean 0.7
    good.back() = 0.9;

    std::vector<double> weak_final = good;
    weak_final.back() = 0.8; // not > 0.8

    std::vector<double> weak_tail(90, 0.0);
    for (size_t i = 60; i < 90; ++i) weak_tail[i] = 0.55; // mean 0.55 + spike
    weak_tail.back() = 0.95;

    EvalReport r = classify_rollouts({trace("good", good), trace("wf", weak_final),
                                      trace("wt", weak_tail), trace("low", rise_to(0.2, 90))});
    CHECK(predicted_class(r, "good") == RolloutClass::SE);
    CHECK(predicted_class(r, "wf") != RolloutClass::SE);
    CHECK(predicted_class(r, "wt") != RolloutClass::SE);
    CHECK(predicted_class(r, "low") == RolloutClass::FE);
}

TEST_CASE("last-third start matches the ceiling formula") {
    for (int64_t T = 2; T <= 100; ++T) {
        int64_t formula = std::min((2 * T + 2) / 3, T - 1);
        int64_t ceiling = std::min(
            static_cast<int64_t>(std::ceil(2.0 * static_cast<double>(T) / 3.0)), T - 1);
        CHECK(formula == ceiling);
    }
}

TEST_CASE("xi is the median of non-SE means and splits PSE from FE") {
    // four non-SE traces with means 0.1, 0.2, 0.4, 0.5 -> xi = 0.3
    EvalReport r = classify_rollouts({
        trace("a", flat(0.1, 60, 0.1)),
        trace("b", flat(0.2, 60, 0.2)),
        trace("c", flat(0.4, 60, 0.4)),
        trace("d", flat(0.5, 60, 0.5)),
    });
    REQUIRE(r.xi.has_value());
    CHECK(*r.xi == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(predicted_class(r, "a") == RolloutClass::FE);
    CHECK(predicted_class(r, "b") == RolloutClass::FE);
    CHECK(predicted_class(r, "c") == RolloutClass::PSE);
    CHECK(predicted_class(r, "d") == RolloutClass::PSE);

    // odd count: median is the middle value, and mean == xi counts as PSE
    EvalReport odd = classify_rollouts({
        trace("a", flat(0.1, 60, 0.1)),
        trace("b", flat(0.3, 60, 0.3)),
        trace("c", flat(0.5, 60, 0.5)),
    });
    REQUIRE(odd.xi.has_value());
    CHECK(*odd.xi == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(predicted_class(odd, "b") == RolloutClass::PSE); // >= xi
}

TEST_CASE("successes are excluded before the median forms") {
    std::vector<double> se_curve(90, 0.9);
    EvalReport r = classify_rollouts({
        trace("se", se_curve),
        trace("x", flat(0.2, 60, 0.2)),
        trace("y", flat(0.6, 60, 0.6)),
    });
    REQUIRE(r.xi.has_value());
    // xi from {0.2, 0.6} only; the 0.9-mean SE trace must not drag it up
    CHECK(*r.xi == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(predicted_class(r, "se") == RolloutClass::SE);

    EvalReport all_se = classify_rollouts({trace("a", se_curve), trace("b", se_curve)});
    CHECK_FALSE(all_se.xi.has_value());
    CHECK(predicted_class(all_se, "a") == RolloutClass::SE);
}

TEST_CASE("rho and the per-class table appear only with full truth") {
    std::vector<double> se_curve(90, 0.9);
    EvalReport partial = classify_rollouts({
        trace("a", se_curve, RolloutClass::SE),
        trace("b", flat(0.2, 60, 0.2)), // truth missing
    });
    CHECK_FALSE(partial.rho.has_value());

    EvalReport full = classify_rollouts({
        trace("a", se_curve, RolloutClass::SE),
        trace("b", flat(0.5, 60, 0.5), RolloutClass::PSE),
        trace("c", flat(0.1, 60, 0.1), RolloutClass::FE),
    });
    REQUIRE(full.rho.has_value());
    CHECK(*full.rho == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(full.per_class.at("SE").correct == 1);
    CHECK(full.per_class.at("SE").total == 1);
    CHECK(full.per_class.at("PSE").correct == 1);
    CHECK(full.per_class.at("FE").correct == 1);

    // one wrong truth tag: correct 2, wrong 1 -> rho = (2-1)/3
    EvalReport off = classify_rollouts({
        trace("a", se_curve, RolloutClass::SE),
        trace("b", flat(0.5, 60, 0.5), RolloutClass::FE), // will be predicted PSE
        trace("c", flat(0.1, 60, 0.1), RolloutClass::FE),
    });
    REQUIRE(off.rho.has_value());
    CHECK(*off.rho == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("score_rho arithmetic and validation") {
    using RC = RolloutClass;
    std::vector<RC> truth = {RC::SE, RC::SE, RC::PSE, RC::FE};
    CHECK(score_rho(truth, truth) == 1.0);
    std::vector<RC> one_off = {RC::SE, RC::PSE, RC::PSE, RC::FE};
    CHECK(score_rho(one_off, truth) == doctest::Approx(0.5).epsilon(1e-12)); // (3-1)/4
    std::vector<RC> all_wrong = {RC::FE, RC::FE, RC::SE, RC::SE};
    CHECK(score_rho(all_wrong, truth) == -1.0);

    CHECK_THROWS_AS(score_rho({}, {}), ValidationError);
    CHECK_THROWS_AS(score_rho({RC::SE}, truth), ValidationError);
}

TEST_CASE("classification rejects empty input and empty traces") {
    CHECK_THROWS_AS(classify_rollouts({}), ValidationError);
    CHECK_THROWS_AS(classify_rollouts({trace("e", {})}), ValidationError);
}

TEST_CASE("demo_mse evaluates exactly the full-window frames") {
    // predictor = labels shifted by a constant -> mse is that constant squared
    Trajectory t;
    t.id = "d";
    t.task_id = "task";
    t.fps = 30;
    const int64_t T = 40;
    for (int64_t i = 0; i < T; ++i) {
        Frame f;
        f.index = i;
        f.time_s = static_cast<double>(i) / 30.0;
        f.features = {0.0};
        t.frames.push_back(std::move(f));
    }
    std::vector<ProgressLabel> labels;
    std::vector<double> curve;
    for (int64_t i = 0; i < T; ++i) {
        ProgressLabel l;
        l.t = i;
        l.stage = 1;
        l.tau = static_cast<double>(i) / (T - 1);
        l.y = l.tau;
        labels.push_back(l);
        curve.push_back(std::min(1.0, std::max(0.0, l.y - 0.1)));
    }
    OraclePredictor off_by;
    off_by.add("d", curve);
    std::map<std::string, std::vector<ProgressLabel>> label_map = {{"d", labels}};

    // N=4, G=5: first admissible terminal frame is 15; frames 4..38 of the
    // shifted curve are y-0.1 without clamping, so choosing [15, 39] keeps one
    // clamped frame (39) out by construction below
    double got = demo_mse(off_by, {t}, label_map, 4, 5);
    double acc = 0.0;
    int64_t n = 0;
    for (int64_t i = 15; i < T; ++i) {
        double d = curve[static_cast<size_t>(i)] - labels[static_cast<size_t>(i)].y;
        acc += d * d;
        ++n;
    }
    CHECK(got == doctest::Approx(acc / static_cast<double>(n)).epsilon(1e-12));

    // a trajectory with no admissible window is skipped, not fatal
    Trajectory stub = t;
    stub.id = "stub";
    stub.frames.resize(10);
    OraclePredictor both = off_by;
    both.add("stub", std::vector<double>(10, 0.5));
    std::map<std::string, std::vector<ProgressLabel>> mixed_map = label_map;
    mixed_map["stub"] = std::vector<ProgressLabel>(labels.begin(), labels.begin() + 10);
    CHECK(demo_mse(both, {t, stub}, mixed_map, 4, 5) == got);

    // but a set where nothing admits a window is an error
    CHECK_THROWS_AS(demo_mse(both, {stub}, mixed_map, 4, 5), ValidationError);

    // and missing labels are an error
    std::map<std::string, std::vector<ProgressLabel>> empty_map;
    CHECK_THROWS_AS(demo_mse(off_by, {t}, empty_map, 4, 5), ValidationError);
}
