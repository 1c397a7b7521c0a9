#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "stagerm/errors.hpp"
#include "stagerm/estimator.hpp"
#include "stagerm/labeling.hpp"
#include "stagerm/rng.hpp"

using namespace stagerm;

namespace {

PriorProfile toy_priors(int K) {
    PriorProfile p;
    p.scheme_id = "sparse";
    p.alpha.assign(static_cast<size_t>(K), 1.0 / K);
    p.cumulative.assign(static_cast<size_t>(K) + 1, 0.0);
    for (int k = 0; k < K; ++k)
        p.cumulative[static_cast<size_t>(k) + 1] = static_cast<double>(k + 1) / K;
    p.cumulative.back() = 1.0;
    p.trajectory_count = 1;
    return p;
}

EstimatorConfig tiny_config() {
    EstimatorConfig cfg;
    cfg.stage_count = 3;
    cfg.feature_dim = 6;
    cfg.d_model = 8;
    cfg.head_hidden = 8;
    cfg.window_length = 4;
    cfg.window_gap = 5;
    cfg.batch_size = 4;
    cfg.epochs = 3;
    cfg.seed = 17;
    return cfg;
}

// random-but-plausible training window; stage k gets a distinctive feature
SequenceSample make_sample(Rng& rng, const EstimatorConfig& cfg, const PriorProfile& priors) {
    SequenceSample s;
    s.trajectory_id = "toy";
    s.task_id_presented = "toy-task";
    const int N = cfg.window_length;
    for (int j = 0; j < N; ++j) {
        int stage = static_cast<int>(rng.uniform_int(1, cfg.stage_count));
        double tau = rng.next_double();
        std::vector<double> feat(static_cast<size_t>(cfg.feature_dim), 0.0);
        feat[static_cast<size_t>(stage - 1)] = 1.0 + tau;
        for (double& f : feat) f += rng.normal(0.0, 0.05);
        s.frame_indices.push_back(j);
        s.features.push_back(std::move(feat));
        s.stage_targets.push_back(stage);
        s.tau_targets.push_back(tau);
        s.progress_targets.push_back(compose_progress(priors, stage, tau));
        s.rewind_mask.push_back(false);
    }
    return s;
}

std::vector<SequenceSample> make_batch(uint64_t seed, int n, const EstimatorConfig& cfg,
                                       const PriorProfile& priors) {
    Rng rng(seed);
    std::vector<SequenceSample> out;
    for (int i = 0; i < n; ++i) out.push_back(make_sample(rng, cfg, priors));
    return out;
}

std::vector<const SequenceSample*> ptrs(const std::vector<SequenceSample>& v) {
    std::vector<const SequenceSample*> out;
    for (const SequenceSample& s : v) out.push_back(&s);
    return out;
}

} // namespace

TEST_CASE("estimator config validation") {
    EstimatorConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());
    EstimatorConfig bad = cfg;
    bad.stage_count = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.mse_weight = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.window_length = 1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("forward output invariants and exact composition") {
    EstimatorConfig cfg = tiny_config();
    PriorProfile priors = toy_priors(cfg.stage_count);
    EstimatorModel model(cfg, priors);
    std::vector<SequenceSample> batch = make_batch(1, 3, cfg, priors);

    for (const SequenceSample& s : batch) {
        ForwardResult out = model.forward(window_from_sample(s), "sparse");
        REQUIRE(out.stage_probs.size() == static_cast<size_t>(cfg.window_length));
        for (size_t j = 0; j < out.stage_probs.size(); ++j) {
            double sum = 0.0;
            for (double p : out.stage_probs[j]) {
                CHECK(p > 0.0);
                CHECK(p < 1.0);
                sum += p;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

            // argmax of the logits, ties to the lowest index
            int arg = 1;
            for (int k = 1; k < cfg.stage_count; ++k)
                if (out.stage_logits[j][static_cast<size_t>(k)] >
                    out.stage_logits[j][static_cast<size_t>(arg - 1)])
                    arg = k + 1;
            CHECK(out.stage_pred[j] == arg);

            CHECK(out.tau_hat[j] > 0.0);
            CHECK(out.tau_hat[j] < 1.0);
            // composed estimate is exactly the composition of the two heads
            CHECK(out.y_hat[j] == compose_progress(priors, out.stage_pred[j], out.tau_hat[j]));
        }
    }

    CHECK_THROWS_AS(model.forward(window_from_sample(batch[0]), "unknown"), ValidationError);
}

TEST_CASE("initialization is seed-deterministic and forward is pure") {
    EstimatorConfig cfg = tiny_config();
    PriorProfile priors = toy_priors(cfg.stage_count);
    EstimatorModel a(cfg, priors), b(cfg, priors);
    CHECK(a.params() == b.params());

    cfg.seed = 18;
    EstimatorModel c(cfg, priors);
    CHECK(a.params() != c.params());

    std::vector<SequenceSample> batch = make_batch(2, 1, tiny_config(), priors);
    ForwardResult r1 = a.forward(window_from_sample(batch[0]), "sparse");
    ForwardResult r2 = a.forward(window_from_sample(batch[0]), "sparse");
    CHECK(r1.y_hat == r2.y_hat);
    CHECK(r1.stage_logits == r2.stage_logits);
}

TEST_CASE("loss agrees with a hand-rolled cross entropy plus mse") {
    EstimatorConfig cfg = tiny_config();
    cfg.mse_weight = 0.7;
    PriorProfile priors = toy_priors(cfg.stage_count);
    EstimatorModel model(cfg, priors);
    SequenceSample s = make_batch(3, 1, cfg, priors)[0];
    ForwardResult out = model.forward(window_from_sample(s), "sparse");
    EstimatorModel::LossBreakdown lb = model.loss(out, s);

    double ce = 0.0, mse = 0.0;
    const size_t N = s.frame_indices.size();
    for (size_t j = 0; j < N; ++j) {
        ce += -std::log(out.stage_probs[j][static_cast<size_t>(s.stage_targets[j] - 1)]);
        double d = out.tau_hat[j] - s.tau_targets[j];
        mse += d * d;
    }
    ce /= static_cast<double>(N);
    mse /= static_cast<double>(N);
    CHECK(lb.stage_ce == doctest::Approx(ce).epsilon(1e-12));
    CHECK(lb.subtask_mse == doctest::Approx(mse).epsilon(1e-12));
    CHECK(lb.total == doctest::Approx(ce + 0.7 * mse).epsilon(1e-12));
}

TEST_CASE("batch loss is the mean of per-sample losses") {
    EstimatorConfig cfg = tiny_config();
    PriorProfile priors = toy_priors(cfg.stage_count);
    EstimatorModel model(cfg, priors);
    std::vector<SequenceSample> batch = make_batch(4, 5, cfg, priors);

    double acc = 0.0;
    for (const SequenceSample& s : batch)
        acc += model.loss(model.forward(window_from_sample(s), "sparse"), s).total;
    acc /= static_cast<double>(batch.size());
    CHECK(model.batch_loss(ptrs(batch), "sparse") == doctest::Approx(acc).epsilon(1e-12));
}

TEST_CASE("batch gradient is linear in the batch") {
    EstimatorConfig cfg = tiny_config();
    PriorProfile priors = toy_priors(cfg.stage_count);
    EstimatorModel model(cfg, priors);
    std::vector<SequenceSample> batch = make_batch(5, 2, cfg, priors);

    std::vector<double> g_both, g_a, g_b;
    model.batch_gradient(ptrs(batch), "sparse", g_both);
    model.batch_gradient({&batch[0]}, "sparse", g_a);
    model.batch_gradient({&batch[1]}, "sparse", g_b);
    REQUIRE(g_both.size() == g_a.size());
    for (size_t i = 0; i < g_both.size(); ++i)
        CHECK(g_both[i] == doctest::Approx(0.5 * (g_a[i] + g_b[i])).epsilon(1e-12));
}

TEST_CASE("analytic gradient survives a central-difference audit") {
    EstimatorConfig cfg = tiny_config();
    PriorProfile priors = toy_priors(cfg.stage_count);
    EstimatorModel model(cfg, priors);
    std::vector<SequenceSample> batch = make_batch(6, 4, cfg, priors);

    GradientCheckReport rep =
        gradient_check(model, "sparse", batch, 1e-5, model.params().size(), 99);
    CHECK(rep.checked == model.params().size());
    CHECK(rep.max_rel_error <= 1e-4);
}

TEST_CASE("gradient audit still passes with a second scheme attached") {
    EstimatorConfig cfg = tiny_config();
    PriorProfile priors = toy_priors(cfg.stage_count);
    EstimatorModel model(cfg, priors);
    PriorProfile dense = toy_priors(cfg.stage_count);
    dense.scheme_id = "dense";
    model.add_scheme("dense", dense);
    CHECK(model.has_scheme("dense"));
    CHECK(model.scheme_order() == std::vector<std::string>{"sparse", "dense"});

    std::vector<SequenceSample> batch = make_batch(7, 3, cfg, priors);
    GradientCheckReport rep =
        gradient_check(model, "dense", batch, 1e-5, model.params().size(), 100);
    CHECK(rep.max_rel_error <= 1e-4);

    // gradients flow into the dense head and the shared trunk, not sparse
    std::vector<double> grad;
    model.batch_gradient(ptrs(batch), "dense", grad);
    for (const ParamSlice& sl : model.slices()) {
        double norm = 0.0;
        for (size_t i = sl.offset; i < sl.offset + sl.size(); ++i) norm += grad[i] * grad[i];
        if (sl.name.find("scheme.sparse.") == 0) CHECK(norm == 0.0);
    }
}

// negative control: a corrupted gradient entry must be flagged by the same
// finite-difference machinery, otherwise the audit above proves nothing
TEST_CASE("a corrupted gradient entry fails the audit") {
    EstimatorConfig cfg = tiny_config();
    PriorProfile priors = toy_priors(cfg.stage_count);
    EstimatorModel model(cfg, priors);
    std::vector<SequenceSample> batch = make_batch(8, 4, cfg, priors);

    std::vector<double> grad;
    model.batch_gradient(ptrs(batch), "sparse", grad);
    size_t worst = 0;
    for (size_t i = 0; i < grad.size(); ++i)
        if (std::abs(grad[i]) > std::abs(grad[worst])) worst = i;
    REQUIRE(std::abs(grad[worst]) > 1e-6);

    const double h = 1e-5;
    double saved = model.params()[worst];
    model.params()[worst] = saved + h;
    std::vector<const SequenceSample*> bp = ptrs(batch);
    double up = model.batch_loss(bp, "sparse");
    model.params()[worst] = saved - h;
    double down = model.batch_loss(bp, "sparse");
    model.params()[worst] = saved;
    double numeric = (up - down) / (2.0 * h);

    double corrupted = grad[worst] * 1.01; // one percent analytic error
    double rel = std::abs(corrupted - numeric) /
                 std::max({std::abs(corrupted), std::abs(numeric), 1e-6});
    CHECK(rel > 1e-4); // the audit threshold would reject this
}

TEST_CASE("training reduces loss on a learnable toy problem") {
    EstimatorConfig cfg = tiny_config();
    cfg.epochs = 40;
    cfg.learning_rate = 0.05;
    PriorProfile priors = toy_priors(cfg.stage_count);
    std::vector<SequenceSample> train_set = make_batch(9, 48, cfg, priors);
    std::vector<SequenceSample> val_set = make_batch(10, 12, cfg, priors);

    EstimatorModel model(cfg, priors);
    double before = one_step_mse(model, "sparse", val_set);
    TrainReport rep = train(model, train_set, val_set, cfg);
    REQUIRE(rep.epochs.size() == 40);
    CHECK(rep.epochs.front().epoch == 1);
    CHECK(rep.epochs.back().epoch == 40);
    double after = one_step_mse(model, "sparse", val_set);
    CHECK(after < before);
    CHECK(rep.epochs.back().stage_ce < rep.epochs.front().stage_ce);
    CHECK(rep.epochs.back().val_mse == doctest::Approx(after).epsilon(1e-12));
    for (const TrainEpoch& e : rep.epochs) CHECK(std::isfinite(e.val_mse));
}

TEST_CASE("training without validation reports NaN val mse") {
    EstimatorConfig cfg = tiny_config();
    PriorProfile priors = toy_priors(cfg.stage_count);
    std::vector<SequenceSample> train_set = make_batch(11, 8, cfg, priors);
    EstimatorModel model(cfg, priors);
    TrainReport rep = train(model, train_set, {}, cfg);
    for (const TrainEpoch& e : rep.epochs) CHECK(std::isnan(e.val_mse));
}

TEST_CASE("training is bitwise reproducible") {
    EstimatorConfig cfg = tiny_config();
    PriorProfile priors = toy_priors(cfg.stage_count);
    std::vector<SequenceSample> train_set = make_batch(12, 16, cfg, priors);

    EstimatorModel a(cfg, priors), b(cfg, priors);
    train(a, train_set, {}, cfg);
    train(b, train_set, {}, cfg);
    CHECK(a.params() == b.params());

    EstimatorConfig cfg2 = cfg;
    cfg2.momentum = 0.9;
    EstimatorModel c(cfg, priors);
    train(c, train_set, {}, cfg2);
    CHECK(a.params() != c.params()); // momentum changes the trajectory
}

TEST_CASE("training with mismatched architecture is rejected") {
    EstimatorConfig cfg = tiny_config();
    PriorProfile priors = toy_priors(cfg.stage_count);
    EstimatorModel model(cfg, priors);
    std::vector<SequenceSample> train_set = make_batch(13, 4, cfg, priors);
    EstimatorConfig other = cfg;
    other.d_model = 16;
    CHECK_THROWS_AS(train(model, train_set, {}, other), ValidationError);
}

TEST_CASE("non-finite data aborts training instead of silently producing NaN") {
    // saturation (tanh, logistic, max-subtracted softmax) keeps even absurd
    // learning rates finite, so the guard is exercised where garbage actually
    // enters in practice: a corrupt feature stream
    EstimatorConfig cfg = tiny_config();
    cfg.epochs = 3;
    PriorProfile priors = toy_priors(cfg.stage_count);
    std::vector<SequenceSample> train_set = make_batch(14, 8, cfg, priors);
    train_set[0].features[1][2] = std::numeric_limits<double>::quiet_NaN();
    EstimatorModel model(cfg, priors);
    CHECK_THROWS_AS(train(model, train_set, {}, cfg), NumericalError);
}

TEST_CASE("one_step_mse is the mean squared composed error") {
    EstimatorConfig cfg = tiny_config();
    PriorProfile priors = toy_priors(cfg.stage_count);
    EstimatorModel model(cfg, priors);
    std::vector<SequenceSample> samples = make_batch(15, 3, cfg, priors);

    double acc = 0.0;
    int64_t n = 0;
    for (const SequenceSample& s : samples) {
        ForwardResult out = model.forward(window_from_sample(s), "sparse");
        for (size_t j = 0; j < s.progress_targets.size(); ++j) {
            double d = out.y_hat[j] - s.progress_targets[j];
            acc += d * d;
            ++n;
        }
    }
    CHECK(one_step_mse(model, "sparse", samples) ==
          doctest::Approx(acc / static_cast<double>(n)).epsilon(1e-12));
}

TEST_CASE("predictor clamps early windows to the episode start") {
    EstimatorConfig cfg = tiny_config(); // N=4, G=5
    PriorProfile priors = toy_priors(cfg.stage_count);
    EstimatorModel model(cfg, priors);

    Trajectory traj;
    traj.id = "p";
    traj.task_id = "toy-task";
    traj.fps = 30;
    Rng rng(44);
    for (int64_t i = 0; i < 20; ++i) {
        Frame f;
        f.index = i;
        f.time_s = static_cast<double>(i) / 30.0;
        for (int d = 0; d < cfg.feature_dim; ++d) f.features.push_back(rng.next_double());
        traj.frames.push_back(std::move(f));
    }

    EstimatorPredictor pred(model, "sparse");
    CHECK(pred.id() == "estimator/sparse");

    // manual window for t = 12: tail sources are 2, 7, 12; position 0 is frame 0
    ObservationWindow w;
    for (int64_t src : {0, 2, 7, 12}) w.features.push_back(traj.frames[static_cast<size_t>(src)].features);
    double expected = model.forward(w, "sparse").y_hat.back();
    CHECK(pred.predict_at(traj, 12) == expected);

    // manual window for t = 3: sources clamp to 0, 0, 0, 3
    ObservationWindow w2;
    for (int64_t src : {0, 0, 0, 3}) w2.features.push_back(traj.frames[static_cast<size_t>(src)].features);
    CHECK(pred.predict_at(traj, 3) == model.forward(w2, "sparse").y_hat.back());

    std::vector<double> curve = pred.predict(traj);
    REQUIRE(curve.size() == 20);
    for (int64_t t = 0; t < 20; ++t) {
        CHECK(curve[static_cast<size_t>(t)] == pred.predict_at(traj, t));
        CHECK(curve[static_cast<size_t>(t)] >= 0.0);
        CHECK(curve[static_cast<size_t>(t)] <= 1.0);
    }
}
