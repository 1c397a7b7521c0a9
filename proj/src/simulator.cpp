#include "stagerm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <thread>

#include "stagerm/errors.hpp"
#include "stagerm/rng.hpp"

namespace stagerm {

std::string to_string(Quality q) {
    switch (q) {
        case Quality::expert: return "expert";
        case Quality::stall: return "stall";
        case Quality::misgrasp: return "misgrasp";
        case Quality::regression: return "regression";
        case Quality::premature: return "premature";
    }
    throw ValidationError("unknown quality value");
}

void FailureMix::validate() const {
    for (double p : {stall, misgrasp, regression, premature})
        if (!(p >= 0.0 && p <= 1.0))
            throw ValidationError("failure mix: proportions must lie in [0, 1]");
    if (expert() < -1e-12)
        throw ValidationError("failure mix: proportions sum past 1");
}

void SimConfig::validate() const {
    if (stage_count < 2) throw ValidationError("sim: stage_count must be >= 2");
    if (feature_dim < stage_count + 2)
        throw ValidationError("sim: feature_dim must be >= stage_count + 2 (one-hot block "
                              "plus the progress phase pair)");
    if (fps <= 0) throw ValidationError("sim: fps must be positive");
    if (!(sigma_obs >= 0.0)) throw ValidationError("sim: sigma_obs must be >= 0");
    if (min_stage_frames < 8) throw ValidationError("sim: min_stage_frames must be >= 8");
    if (max_stage_frames < min_stage_frames)
        throw ValidationError("sim: max_stage_frames must be >= min_stage_frames");
    if (task_id.empty() || scheme_id.empty() || id_prefix.empty())
        throw ValidationError("sim: task_id, scheme_id and id_prefix must be non-empty");
}

AnnotationProtocol default_protocol(const SimConfig& cfg) {
    cfg.validate();
    AnnotationProtocol p;
    p.scheme_id = cfg.scheme_id;
    for (int k = 1; k <= cfg.stage_count; ++k)
        p.subtasks.push_back("stage-" + std::to_string(k));
    return p;
}

ActionMap make_action_map(int feature_dim) {
    if (feature_dim < 1) throw ValidationError("action map: feature_dim must be >= 1");
    ActionMap m;
    m.feature_dim = feature_dim;
    m.w.resize(static_cast<size_t>(kSimActionDim) * feature_dim);
    m.b.resize(kSimActionDim);
    // hard-coded seed: the map is a property of the simulated robot, not of
    // any particular dataset
    Rng rng = derive_stream(0x1ce4e5b9ull, "sim-action-map");
    const double scale = 1.6 / std::sqrt(static_cast<double>(feature_dim));
    for (double& v : m.w) v = rng.uniform(-scale, scale);
    for (double& v : m.b) v = rng.uniform(-0.2, 0.2);
    return m;
}

std::vector<double> ActionMap::apply(const std::vector<double>& features) const {
    if (static_cast<int>(features.size()) != feature_dim)
        throw ValidationError("action map: feature dim mismatch");
    std::vector<double> a(kSimActionDim, 0.0);
    for (int r = 0; r < kSimActionDim; ++r) {
        double acc = b[static_cast<size_t>(r)];
        const double* row = w.data() + static_cast<size_t>(r) * feature_dim;
        for (int c = 0; c < feature_dim; ++c) acc += row[c] * features[static_cast<size_t>(c)];
        a[static_cast<size_t>(r)] = std::tanh(acc);
    }
    return a;
}

namespace {

// A drafted episode: per-frame structure and the annotation, no frames yet.
// Frames are only emitted once the finalizing priors are known.
struct Draft {
    Quality quality = Quality::expert;
    std::vector<Segment> segments;
    std::vector<Span> mistakes;
    std::vector<int> stage;     // 1-based, per frame
    std::vector<double> tau;    // per frame
    std::vector<uint8_t> corrupted;
    std::vector<int64_t> planned; // planned duration of every stage
    bool complete_tiling = true;
};

int64_t draft_length(const Draft& d) { return static_cast<int64_t>(d.stage.size()); }

std::string stage_label(int k) { return "stage-" + std::to_string(k); }

std::vector<int64_t> draw_plan(const SimConfig& cfg, Rng& rng) {
    std::vector<int64_t> plan(static_cast<size_t>(cfg.stage_count));
    for (int64_t& L : plan) L = rng.uniform_int(cfg.min_stage_frames, cfg.max_stage_frames);
    return plan;
}

// Appends one stage whose fraction runs 0 -> 1 linearly over [s, s+frames-1],
// using the same expression the labeler evaluates, so expert ground truth and
// annotation-derived labels agree to the last bit.
void append_linear_stage(Draft& d, int k, int64_t frames) {
    const int64_t s = draft_length(d);
    const int64_t e = s + frames - 1;
    const double span = static_cast<double>(e - s);
    for (int64_t t = s; t <= e; ++t) {
        d.stage.push_back(k);
        d.tau.push_back(static_cast<double>(t - s) / span);
        d.corrupted.push_back(0);
    }
    d.segments.push_back({stage_label(k), s, e});
}

void append_frames(Draft& d, int k, const std::vector<double>& taus, int64_t corrupt_from = -1,
                   int64_t corrupt_to = -2) {
    const int64_t s = draft_length(d);
    for (size_t i = 0; i < taus.size(); ++i) {
        const int64_t t = s + static_cast<int64_t>(i);
        d.stage.push_back(k);
        d.tau.push_back(taus[i]);
        d.corrupted.push_back(t >= corrupt_from && t <= corrupt_to ? 1 : 0);
    }
    d.segments.push_back({stage_label(k), s, s + static_cast<int64_t>(taus.size()) - 1});
}

Draft draft_expert(const SimConfig& cfg, Rng& rng) {
    Draft d;
    d.quality = Quality::expert;
    d.planned = draw_plan(cfg, rng);
    for (int k = 1; k <= cfg.stage_count; ++k)
        append_linear_stage(d, k, d.planned[static_cast<size_t>(k - 1)]);
    return d;
}

// One stage takes longer than it should: the fraction holds still over a
// window and the annotated segment simply covers the longer span. The
// annotation stays valid, so the episode contributes to priors and labels,
// and the labeler's linear interpolation is wrong inside this stage. That is
// the approximation the progress labels knowingly make.
Draft draft_stall(const SimConfig& cfg, Rng& rng) {
    Draft d;
    d.quality = Quality::stall;
    d.planned = draw_plan(cfg, rng);
    const int ks = static_cast<int>(rng.uniform_int(1, cfg.stage_count));
    for (int k = 1; k <= cfg.stage_count; ++k) {
        const int64_t L = d.planned[static_cast<size_t>(k - 1)];
        if (k != ks) {
            append_linear_stage(d, k, L);
            continue;
        }
        const int64_t stall_len = rng.uniform_int(L / 2, L);
        const int64_t w0 = rng.uniform_int(1, L - 2); // strictly inside the motion
        const int64_t frames = L + stall_len;
        const double active_span = static_cast<double>(L - 1);
        std::vector<double> taus(static_cast<size_t>(frames));
        for (int64_t i = 0; i < frames; ++i) {
            int64_t active = i <= w0 ? i : (i <= w0 + stall_len ? w0 : i - stall_len);
            taus[static_cast<size_t>(i)] = static_cast<double>(active) / active_span;
        }
        append_frames(d, k, taus);
    }
    return d;
}

// Small oscillation inside one stage (a grasp that slips and is immediately
// re-seated). Annotation stays valid; the true fraction wobbles around the
// labeler's straight line.
Draft draft_misgrasp(const SimConfig& cfg, Rng& rng) {
    Draft d;
    d.quality = Quality::misgrasp;
    d.planned = draw_plan(cfg, rng);
    const int km = static_cast<int>(rng.uniform_int(1, cfg.stage_count));
    const double amp = rng.uniform(0.04, 0.09);
    const double cycles = static_cast<double>(rng.uniform_int(2, 3));
    for (int k = 1; k <= cfg.stage_count; ++k) {
        const int64_t L = d.planned[static_cast<size_t>(k - 1)];
        if (k != km) {
            append_linear_stage(d, k, L);
            continue;
        }
        const double span = static_cast<double>(L - 1);
        std::vector<double> taus(static_cast<size_t>(L));
        for (int64_t i = 0; i < L; ++i) {
            const double lin = static_cast<double>(i) / span;
            const double wobble = amp * std::sin(std::numbers::pi * lin) *
                                  std::sin(2.0 * std::numbers::pi * cycles * lin);
            taus[static_cast<size_t>(i)] = std::clamp(lin + wobble, 0.0, 1.0);
        }
        append_frames(d, km, taus);
    }
    return d;
}

// The task visibly goes backwards: progress climbs to a peak, falls, and the
// demonstrator recovers by re-traversing the lost ground. The annotator marks
// the fall as a mistake, which keeps the episode out of reward training.
// Actions during the fall are the negated clean actions; the recovery uses
// clean actions over states that overlap the corrupted ones, which is exactly
// the situation where uniform cloning averages good and bad commands.
Draft draft_regression(const SimConfig& cfg, Rng& rng) {
    Draft d;
    d.quality = Quality::regression;
    d.planned = draw_plan(cfg, rng);
    const int kr = static_cast<int>(rng.uniform_int(1, cfg.stage_count));
    const double tau_peak = rng.uniform(0.55, 0.75);
    const double tau_low = rng.uniform(0.15, 0.3);
    const int64_t fall_len = rng.uniform_int(40, 60);
    for (int k = 1; k <= cfg.stage_count; ++k) {
        const int64_t L = d.planned[static_cast<size_t>(k - 1)];
        if (k != kr) {
            append_linear_stage(d, k, L);
            continue;
        }
        const int64_t r1 = std::max<int64_t>(1, std::llround(tau_peak * static_cast<double>(L - 1)));
        const int64_t r2 =
            std::max<int64_t>(1, std::llround((1.0 - tau_low) * static_cast<double>(L - 1)));
        std::vector<double> taus;
        taus.reserve(static_cast<size_t>(r1 + fall_len + r2 + 1));
        for (int64_t i = 0; i <= r1; ++i)
            taus.push_back(tau_peak * static_cast<double>(i) / static_cast<double>(r1));
        for (int64_t j = 1; j <= fall_len; ++j)
            taus.push_back(tau_peak +
                           (tau_low - tau_peak) * static_cast<double>(j) /
                               static_cast<double>(fall_len));
        // the last recovery frame must land on exactly 1; tau_low + (1 - tau_low)
        // can round one ulp past it
        for (int64_t j = 1; j <= r2; ++j)
            taus.push_back(j == r2 ? 1.0
                                   : tau_low + (1.0 - tau_low) * static_cast<double>(j) /
                                                   static_cast<double>(r2));
        const int64_t seg_start = draft_length(d);
        append_frames(d, k, taus, seg_start + r1 + 1, seg_start + r1 + fall_len);
        d.mistakes.push_back({seg_start + r1 + 1, seg_start + r1 + fall_len});
    }
    return d;
}

// The demonstrator gives up partway: stages past k_stop never happen and the
// tail just idles. The annotation only covers the stages that were actually
// performed, so the filter rejects it (incomplete sequence). The stop point
// is capped so the episode's own planned proportions put its final progress
// at or below 0.75.
Draft draft_premature(const SimConfig& cfg, Rng& rng) {
    Draft d;
    d.quality = Quality::premature;
    d.complete_tiling = false;
    d.planned = draw_plan(cfg, rng);

    double total = 0.0;
    for (int64_t L : d.planned) total += static_cast<double>(L);

    int k_stop = static_cast<int>(rng.uniform_int(2, cfg.stage_count - 1));
    double tau_stop = rng.uniform(0.3, 0.8);
    const double cap = 0.75;
    for (;;) {
        double before = 0.0;
        for (int k = 1; k < k_stop; ++k) before += static_cast<double>(d.planned[k - 1]) / total;
        const double alpha = static_cast<double>(d.planned[k_stop - 1]) / total;
        if (before + alpha * tau_stop <= cap) break;
        tau_stop = (cap - before) / alpha;
        if (tau_stop >= 0.05) break;
        --k_stop;           // even tau ~ 0 in this stage overshoots; stop earlier
        tau_stop = 0.5;
    }

    for (int k = 1; k < k_stop; ++k) append_linear_stage(d, k, d.planned[k - 1]);

    const int64_t L = d.planned[static_cast<size_t>(k_stop - 1)];
    const int64_t rise =
        std::max<int64_t>(1, std::llround(tau_stop * static_cast<double>(L - 1)));
    const int64_t tail = rng.uniform_int(2 * cfg.min_stage_frames, 2 * cfg.max_stage_frames);
    std::vector<double> taus;
    taus.reserve(static_cast<size_t>(rise + tail + 1));
    for (int64_t i = 0; i <= rise; ++i)
        taus.push_back(tau_stop * static_cast<double>(i) / static_cast<double>(rise));
    for (int64_t j = 0; j < tail; ++j) taus.push_back(tau_stop);
    append_frames(d, k_stop, taus);
    return d;
}

Draft draft_quality(const SimConfig& cfg, Rng& rng, Quality q) {
    switch (q) {
        case Quality::expert: return draft_expert(cfg, rng);
        case Quality::stall: return draft_stall(cfg, rng);
        case Quality::misgrasp: return draft_misgrasp(cfg, rng);
        case Quality::regression: return draft_regression(cfg, rng);
        case Quality::premature: return draft_premature(cfg, rng);
    }
    throw ValidationError("unknown quality value");
}

std::string make_id(const SimConfig& cfg, uint64_t index) {
    std::ostringstream os;
    os << cfg.id_prefix << '-' << std::setw(6) << std::setfill('0') << index;
    return os.str();
}

// Skeleton with the right id and frame count, enough for annotation
// validation and prior computation before any features exist.
Trajectory skeleton(const SimConfig& cfg, const std::string& id, int64_t length) {
    Trajectory t;
    t.id = id;
    t.task_id = cfg.task_id;
    t.fps = cfg.fps;
    t.frames.resize(static_cast<size_t>(length));
    for (int64_t i = 0; i < length; ++i) {
        t.frames[static_cast<size_t>(i)].index = i;
        t.frames[static_cast<size_t>(i)].time_s =
            static_cast<double>(i) / static_cast<double>(cfg.fps);
    }
    return t;
}

// Priors an episode would imply on its own. Complete tilings go through the
// shared prior computation (M = 1); partial episodes fall back to the stage
// proportions they planned before giving up.
PriorProfile own_priors(const SimConfig& cfg, const Draft& d, const Trajectory& skel) {
    if (d.complete_tiling) {
        TrajectoryAnnotation a;
        a.trajectory_id = skel.id;
        a.scheme_id = cfg.scheme_id;
        a.segments = d.segments;
        return compute_priors({a}, {skel});
    }
    PriorProfile p;
    p.scheme_id = cfg.scheme_id;
    p.trajectory_count = 1;
    double total = 0.0;
    for (int64_t L : d.planned) total += static_cast<double>(L);
    for (int64_t L : d.planned) p.alpha.push_back(static_cast<double>(L) / total);
    p.cumulative.assign(p.alpha.size() + 1, 0.0);
    for (size_t k = 0; k < p.alpha.size(); ++k)
        p.cumulative[k + 1] = std::min(p.cumulative[k] + p.alpha[k], 1.0);
    p.cumulative.back() = 1.0;
    p.validate();
    return p;
}

SimTrajectory finalize(const SimConfig& cfg, const ActionMap& amap, Draft&& d,
                       const PriorProfile& priors, const std::string& id, uint64_t index) {
    const int64_t T = draft_length(d);
    SimTrajectory out;
    out.quality = d.quality;
    out.stage_true = std::move(d.stage);
    out.tau_true = std::move(d.tau);
    out.corrupted = std::move(d.corrupted);
    out.y_true.resize(static_cast<size_t>(T));

    out.annotation.trajectory_id = id;
    out.annotation.scheme_id = cfg.scheme_id;
    out.annotation.segments = std::move(d.segments);
    out.annotation.mistakes = std::move(d.mistakes);

    out.trajectory = skeleton(cfg, id, T);

    Rng noise = derive_stream(cfg.seed, "sim-noise", index);
    const size_t F = static_cast<size_t>(cfg.feature_dim);
    const int K = cfg.stage_count;

    for (int64_t t = 0; t < T; ++t) {
        const size_t ti = static_cast<size_t>(t);
        const int s = out.stage_true[ti];
        const double tau = out.tau_true[ti];
        const double y = compose_progress(priors, s, tau);
        out.y_true[ti] = y;

        Frame& f = out.trajectory.frames[ti];
        f.features.assign(F, 0.0);
        f.features[static_cast<size_t>(s - 1)] = 1.0 + tau;
        f.features[static_cast<size_t>(K)] = std::cos(2.0 * std::numbers::pi * y);
        f.features[static_cast<size_t>(K) + 1] = std::sin(2.0 * std::numbers::pi * y);
        for (size_t j = 0; j < F; ++j) f.features[j] += noise.normal(0.0, cfg.sigma_obs);

        f.joint_state = {0.5 * std::sin(std::numbers::pi * y) + noise.normal(0.0, cfg.sigma_obs),
                         0.5 * std::cos(std::numbers::pi * y) + noise.normal(0.0, cfg.sigma_obs),
                         0.25 + 0.5 * y + noise.normal(0.0, cfg.sigma_obs)};

        // demonstrator acts on what it observed, so a policy with the same
        // map reproduces the actions exactly
        f.action = amap.apply(f.features);
        if (out.corrupted[ti])
            for (double& a : f.action) a = -a;
    }
    out.trajectory.validate();
    return out;
}

SimTrajectory gen_one(const SimConfig& cfg, const ActionMap& amap, uint64_t index, Quality q) {
    Rng rng = derive_stream(cfg.seed, "sim-draft", index);
    Draft d = draft_quality(cfg, rng, q);
    const std::string id = make_id(cfg, index);
    const PriorProfile priors = own_priors(cfg, d, skeleton(cfg, id, draft_length(d)));
    return finalize(cfg, amap, std::move(d), priors, id, index);
}

} // namespace

SimTrajectory gen_expert(const SimConfig& cfg, uint64_t index) {
    cfg.validate();
    return gen_one(cfg, make_action_map(cfg.feature_dim), index, Quality::expert);
}

SimTrajectory gen_suboptimal(const SimConfig& cfg, uint64_t index, Quality quality) {
    cfg.validate();
    return gen_one(cfg, make_action_map(cfg.feature_dim), index, quality);
}

SimDataset gen_dataset(const SimConfig& cfg, int64_t count, const FailureMix& mix, int threads) {
    cfg.validate();
    mix.validate();
    if (count < 1) throw ValidationError("gen_dataset: count must be >= 1");
    if (threads < 1) throw ValidationError("gen_dataset: threads must be >= 1");

    SimDataset out;
    out.protocol = default_protocol(cfg);
    const ActionMap amap = make_action_map(cfg.feature_dim);

    // draft everything first; annotations and lengths are enough for priors
    std::vector<Draft> drafts;
    std::vector<std::string> ids;
    drafts.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        Rng pick = derive_stream(cfg.seed, "sim-quality", static_cast<uint64_t>(i));
        const double u = pick.next_double();
        Quality q = Quality::expert;
        double edge = mix.stall;
        if (u < edge) q = Quality::stall;
        else if (u < (edge += mix.misgrasp)) q = Quality::misgrasp;
        else if (u < (edge += mix.regression)) q = Quality::regression;
        else if (u < (edge += mix.premature)) q = Quality::premature;

        Rng rng = derive_stream(cfg.seed, "sim-draft", static_cast<uint64_t>(i));
        drafts.push_back(draft_quality(cfg, rng, q));
        ids.push_back(make_id(cfg, static_cast<uint64_t>(i)));
    }

    std::vector<Trajectory> skeletons;
    std::vector<TrajectoryAnnotation> annotations;
    skeletons.reserve(drafts.size());
    annotations.reserve(drafts.size());
    for (size_t i = 0; i < drafts.size(); ++i) {
        skeletons.push_back(skeleton(cfg, ids[i], draft_length(drafts[i])));
        TrajectoryAnnotation a;
        a.trajectory_id = ids[i];
        a.scheme_id = cfg.scheme_id;
        a.segments = drafts[i].segments;
        a.mistakes = drafts[i].mistakes;
        annotations.push_back(std::move(a));
    }

    out.filter = filter_dataset(annotations, out.protocol, skeletons);
    if (out.filter.kept.empty())
        throw ValidationError("gen_dataset: every annotation was rejected; nothing to anchor "
                              "priors on");

    std::vector<TrajectoryAnnotation> kept;
    std::vector<Trajectory> kept_skeletons;
    for (const std::string& id : out.filter.kept)
        for (size_t j = 0; j < ids.size(); ++j)
            if (ids[j] == id) {
                kept.push_back(annotations[j]);
                kept_skeletons.push_back(skeletons[j]);
                break;
            }
    out.priors = compute_priors(kept, kept_skeletons);

    // emission is the expensive part; episodes are independent once priors
    // are fixed, so parallel workers fill disjoint slots
    out.items.resize(drafts.size());
    auto emit_range = [&](size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i)
            out.items[i] = finalize(cfg, amap, std::move(drafts[i]), out.priors, ids[i],
                                    static_cast<uint64_t>(i));
    };
    const size_t n = drafts.size();
    const size_t workers = std::min<size_t>(static_cast<size_t>(threads), n);
    if (workers <= 1) {
        emit_range(0, n);
    } else {
        std::vector<std::thread> pool;
        const size_t chunk = (n + workers - 1) / workers;
        for (size_t w = 0; w < workers; ++w) {
            const size_t lo = w * chunk;
            const size_t hi = std::min(n, lo + chunk);
            if (lo < hi) pool.emplace_back(emit_range, lo, hi);
        }
        for (std::thread& th : pool) th.join();
    }
    return out;
}

std::vector<RolloutTrace> truth_traces(const SimRolloutSet& set) {
    if (set.items.size() != set.truth.size())
        throw ValidationError("rollout set: truth list does not match items");
    std::vector<RolloutTrace> traces;
    traces.reserve(set.items.size());
    for (size_t i = 0; i < set.items.size(); ++i) {
        RolloutTrace tr;
        tr.rollout_id = set.items[i].trajectory.id;
        tr.progress = set.items[i].y_true;
        tr.truth = set.truth[i];
        traces.push_back(std::move(tr));
    }
    return traces;
}

namespace {

// Rollout curve drafts. These reuse the dataset machinery but target the
// classifier's decision regions with margin: successes finish at 1 and dwell
// there, the others stall at a plateau whose height separates the classes.
Draft draft_rollout(const SimConfig& cfg, Rng& rng, RolloutClass c) {
    if (c == RolloutClass::SE) {
        Draft d;
        d.quality = Quality::expert;
        d.planned = draw_plan(cfg, rng);
        for (int k = 1; k < cfg.stage_count; ++k)
            append_linear_stage(d, k, d.planned[static_cast<size_t>(k - 1)]);
        const int64_t L = d.planned.back();
        const int64_t dwell = rng.uniform_int(L / 2, L);
        const double span = static_cast<double>(L - 1);
        std::vector<double> taus(static_cast<size_t>(L + dwell));
        for (int64_t i = 0; i < L + dwell; ++i)
            taus[static_cast<size_t>(i)] =
                static_cast<double>(std::min(i, L - 1)) / span;
        append_frames(d, cfg.stage_count, taus);
        return d;
    }

    Draft d;
    d.quality = Quality::premature;
    d.complete_tiling = false;
    d.planned = draw_plan(cfg, rng);
    double total = 0.0;
    for (int64_t L : d.planned) total += static_cast<double>(L);

    const double target = c == RolloutClass::PSE ? rng.uniform(0.45, 0.65)
                                                 : rng.uniform(0.08, 0.18);
    // locate (stage, fraction) whose planned-proportion progress equals target
    int k_stop = 1;
    double before = 0.0;
    for (; k_stop <= cfg.stage_count; ++k_stop) {
        const double alpha = static_cast<double>(d.planned[k_stop - 1]) / total;
        if (before + alpha >= target || k_stop == cfg.stage_count) break;
        before += alpha;
    }
    const double alpha = static_cast<double>(d.planned[k_stop - 1]) / total;
    const double tau_stop = std::clamp((target - before) / alpha, 0.02, 0.98);

    for (int k = 1; k < k_stop; ++k) append_linear_stage(d, k, d.planned[k - 1]);
    const int64_t L = d.planned[static_cast<size_t>(k_stop - 1)];
    const int64_t rise = std::max<int64_t>(1, std::llround(tau_stop * static_cast<double>(L - 1)));
    const int64_t elapsed = draft_length(d) + rise + 1;
    // the dwell dominates the trace, which separates the class means, and a
    // floor keeps the episode long enough that observation windows with the
    // standard geometry fit without clamping for most frames
    const int64_t dwell =
        rng.uniform_int(std::max<int64_t>(360, static_cast<int64_t>(1.2 * static_cast<double>(elapsed))),
                        std::max<int64_t>(540, static_cast<int64_t>(1.8 * static_cast<double>(elapsed))));
    std::vector<double> taus;
    taus.reserve(static_cast<size_t>(rise + dwell + 1));
    for (int64_t i = 0; i <= rise; ++i)
        taus.push_back(tau_stop * static_cast<double>(i) / static_cast<double>(rise));
    for (int64_t j = 0; j < dwell; ++j) taus.push_back(tau_stop);
    append_frames(d, k_stop, taus);
    return d;
}

bool se_rule(const std::vector<double>& y) {
    const size_t t = y.size();
    const size_t start = std::min((2 * t + 2) / 3, t - 1);
    double acc = 0.0;
    for (size_t i = start; i < t; ++i) acc += y[i];
    const double last_third = acc / static_cast<double>(t - start);
    return y.back() > 0.8 && last_third > 0.6;
}

double trace_mean(const std::vector<double>& y) {
    double acc = 0.0;
    for (double v : y) acc += v;
    return acc / static_cast<double>(y.size());
}

} // namespace

SimRolloutSet gen_rollout_set(const SimConfig& cfg, int n_se, int n_pse, int n_fe) {
    cfg.validate();
    if (n_se < 0 || n_pse < 0 || n_fe < 0)
        throw ValidationError("gen_rollout_set: counts must be >= 0");
    if (n_se + n_pse + n_fe < 1)
        throw ValidationError("gen_rollout_set: at least one rollout required");

    const ActionMap amap = make_action_map(cfg.feature_dim);
    const int max_attempts = 20;

    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        SimRolloutSet set;
        const uint64_t base = static_cast<uint64_t>(attempt) * 1000000ull;
        uint64_t index = 0;
        auto build = [&](RolloutClass c, int n) {
            for (int i = 0; i < n; ++i, ++index) {
                Rng rng = derive_stream(cfg.seed, "sim-rollout", base + index);
                Draft d = draft_rollout(cfg, rng, c);
                const std::string id = make_id(cfg, index) + "-" + to_string(c);
                const PriorProfile priors =
                    own_priors(cfg, d, skeleton(cfg, id, draft_length(d)));
                set.items.push_back(
                    finalize(cfg, amap, std::move(d), priors, id, base + index));
                set.truth.push_back(c);
            }
        };
        build(RolloutClass::SE, n_se);
        build(RolloutClass::PSE, n_pse);
        build(RolloutClass::FE, n_fe);

        // verify: the success rule must match the tags exactly
        bool ok = true;
        for (size_t i = 0; i < set.items.size() && ok; ++i)
            ok = se_rule(set.items[i].y_true) == (set.truth[i] == RolloutClass::SE);

        // and every partial-success mean must clear every failure mean
        if (ok && n_pse > 0 && n_fe > 0) {
            double min_pse = 1.0, max_fe = 0.0;
            for (size_t i = 0; i < set.items.size(); ++i) {
                const double m = trace_mean(set.items[i].y_true);
                if (set.truth[i] == RolloutClass::PSE) min_pse = std::min(min_pse, m);
                if (set.truth[i] == RolloutClass::FE) max_fe = std::max(max_fe, m);
            }
            ok = min_pse > max_fe;
        }

        // balanced sets must round-trip through the actual classifier
        if (ok && n_se == n_pse && n_pse == n_fe && n_se > 0) {
            EvalReport report = classify_rollouts(truth_traces(set));
            for (size_t i = 0; i < report.predicted.size() && ok; ++i)
                ok = report.predicted[i].second == set.truth[i];
        }

        if (ok) return set;
    }
    throw NumericalError("gen_rollout_set: failed to satisfy classification margins after " +
                         std::to_string(max_attempts) + " attempts with seed " +
                         std::to_string(cfg.seed));
}

} // namespace stagerm
