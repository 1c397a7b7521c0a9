#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "stagerm/bc.hpp"
#include "stagerm/errors.hpp"
#include "stagerm/estimator.hpp"
#include "stagerm/io.hpp"
#include "stagerm/labeling.hpp"
#include "stagerm/rollout_eval.hpp"
#include "stagerm/sampler.hpp"
#include "stagerm/simulator.hpp"
#include "stagerm/trajectory.hpp"
#include "stagerm/weighting.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stagerm;

namespace {

void log(const std::string& msg) { std::cerr << msg << std::endl; }

// ---- shared loading ---------------------------------------------------------

struct LoadedDataset {
    std::vector<Trajectory> trajectories;
    AnnotationProtocol protocol;
    std::vector<TrajectoryAnnotation> annotations;
    FilterReport filter;
    std::vector<TrajectoryAnnotation> kept_annotations;
    std::vector<Trajectory> kept_trajectories;
};

LoadedDataset load_and_filter(const std::string& dir) {
    LoadedDataset d;
    d.trajectories = io::load_trajectories_jsonl(dir + "/trajectories.jsonl");
    io::AnnotationFile af = io::load_annotations(dir + "/annotations.json");
    d.protocol = std::move(af.protocol);
    d.annotations = std::move(af.annotations);
    d.filter = filter_dataset(d.annotations, d.protocol, d.trajectories);

    std::map<std::string, size_t> traj_index, ann_index;
    for (size_t i = 0; i < d.trajectories.size(); ++i) traj_index[d.trajectories[i].id] = i;
    for (size_t i = 0; i < d.annotations.size(); ++i)
        ann_index[d.annotations[i].trajectory_id] = i;
    for (const std::string& id : d.filter.kept) {
        d.kept_annotations.push_back(d.annotations[ann_index.at(id)]);
        d.kept_trajectories.push_back(d.trajectories[traj_index.at(id)]);
    }
    return d;
}

std::vector<std::string> task_vocabulary(const std::vector<Trajectory>& trajs) {
    std::vector<std::string> vocab;
    for (const Trajectory& t : trajs)
        if (std::find(vocab.begin(), vocab.end(), t.task_id) == vocab.end())
            vocab.push_back(t.task_id);
    return vocab;
}

std::unique_ptr<OraclePredictor> oracle_from_truth(const std::string& truth_path) {
    auto oracle = std::make_unique<OraclePredictor>();
    for (io::TruthRecord& r : io::load_truth_jsonl(truth_path))
        oracle->add(r.trajectory_id, std::move(r.y));
    return oracle;
}

json filter_to_json(const FilterReport& filter) {
    json rejected = json::array();
    for (const auto& [id, reason] : filter.rejected)
        rejected.push_back({{"trajectory_id", id}, {"reason", reason}});
    return {{"kept", filter.kept}, {"rejected", rejected}};
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write to '" + path + "' failed");
}

// ---- gen --------------------------------------------------------------------

struct GenOpts {
    std::string out;
    int64_t count = 50;
    uint64_t seed = 0;
    int threads = 1;
    double stall = 0.0, misgrasp = 0.0, regression = 0.0, premature = 0.0;
    int stages = 5, feature_dim = 16, fps = 30;
    double sigma_obs = 0.05;
    int64_t min_stage = 60, max_stage = 140;
    std::string task = "block-stack", scheme = "sparse", prefix = "sim";
    bool rollouts = false;
    int se = 0, pse = 0, fe = 0;
};

SimConfig sim_config_of(const GenOpts& o) {
    SimConfig cfg;
    cfg.stage_count = o.stages;
    cfg.feature_dim = o.feature_dim;
    cfg.fps = o.fps;
    cfg.sigma_obs = o.sigma_obs;
    cfg.min_stage_frames = o.min_stage;
    cfg.max_stage_frames = o.max_stage;
    cfg.seed = o.seed;
    cfg.task_id = o.task;
    cfg.scheme_id = o.scheme;
    cfg.id_prefix = o.prefix;
    return cfg;
}

json gen_config_json(const GenOpts& o) {
    return {{"count", o.count},
            {"threads", o.threads},
            {"mix",
             {{"stall", o.stall},
              {"misgrasp", o.misgrasp},
              {"regression", o.regression},
              {"premature", o.premature}}},
            {"stage_count", o.stages},
            {"feature_dim", o.feature_dim},
            {"fps", o.fps},
            {"sigma_obs", o.sigma_obs},
            {"min_stage_frames", o.min_stage},
            {"max_stage_frames", o.max_stage},
            {"task_id", o.task},
            {"scheme_id", o.scheme},
            {"id_prefix", o.prefix},
            {"rollouts", o.rollouts},
            {"se", o.se},
            {"pse", o.pse},
            {"fe", o.fe}};
}

void run_gen(const GenOpts& o) {
    SimConfig cfg = sim_config_of(o);
    fs::create_directories(o.out);

    if (o.rollouts) {
        if (o.se + o.pse + o.fe < 1)
            throw UsageError("gen --rollouts needs at least one of --se/--pse/--fe");
        SimRolloutSet set = gen_rollout_set(cfg, o.se, o.pse, o.fe);
        std::vector<Trajectory> trajs;
        for (const SimTrajectory& s : set.items) trajs.push_back(s.trajectory);
        io::save_trajectories_jsonl(o.out + "/trajectories.jsonl", trajs);
        io::save_truth_jsonl(o.out + "/truth.jsonl", set.items);
        io::save_traces_jsonl(o.out + "/traces.jsonl", truth_traces(set));
        io::write_stamp(o.out + "/stamp.json", "gen", o.seed, gen_config_json(o).dump());
        log("wrote " + std::to_string(set.items.size()) + " rollouts to " + o.out);
        return;
    }

    FailureMix mix;
    mix.stall = o.stall;
    mix.misgrasp = o.misgrasp;
    mix.regression = o.regression;
    mix.premature = o.premature;
    SimDataset ds = gen_dataset(cfg, o.count, mix, o.threads);

    std::vector<Trajectory> trajs;
    std::vector<TrajectoryAnnotation> anns;
    for (const SimTrajectory& s : ds.items) {
        trajs.push_back(s.trajectory);
        anns.push_back(s.annotation);
    }
    io::save_trajectories_jsonl(o.out + "/trajectories.jsonl", trajs);
    io::save_annotations(o.out + "/annotations.json", ds.protocol, anns);
    io::save_truth_jsonl(o.out + "/truth.jsonl", ds.items);
    io::save_priors(o.out + "/priors.json", ds.priors);
    write_json(o.out + "/filter.json", filter_to_json(ds.filter));
    io::write_stamp(o.out + "/stamp.json", "gen", o.seed, gen_config_json(o).dump());
    log("wrote " + std::to_string(ds.items.size()) + " trajectories to " + o.out + " (" +
        std::to_string(ds.filter.kept.size()) + " kept for priors)");
}

// ---- label ------------------------------------------------------------------

void run_label(const std::string& data, const std::string& out) {
    LoadedDataset d = load_and_filter(data);
    if (d.kept_annotations.empty())
        throw ValidationError("label: no annotation passed the filter");
    PriorProfile priors = compute_priors(d.kept_annotations, d.kept_trajectories);
    DatasetLabels labels = label_dataset(d.kept_annotations, d.kept_trajectories, priors);

    fs::create_directories(out);
    io::save_labels_jsonl(out + "/labels.jsonl", labels);
    io::save_priors(out + "/priors.json", priors);
    write_json(out + "/filter.json", filter_to_json(d.filter));
    io::write_stamp(out + "/stamp.json", "label", 0, json({{"data", data}}).dump());
    log("labeled " + std::to_string(labels.summary.trajectory_count) + " trajectories (" +
        std::to_string(labels.summary.total_frames) + " frames), rejected " +
        std::to_string(d.filter.rejected.size()));
}

// ---- sample -----------------------------------------------------------------

struct SampleOpts {
    std::string data, labels, out, trajectory;
    int64_t draws = 4;
    uint64_t seed = 0;
    int length = 9, gap = 30, max_rewind = 4;
    double p_rewind = 0.5, p_perturb = 0.0;
    std::string policy = "error";
};

MinLengthPolicy policy_of(const std::string& name) {
    if (name == "error") return MinLengthPolicy::error;
    if (name == "shrink-gap") return MinLengthPolicy::shrink_gap;
    throw UsageError("unknown --min-length-policy '" + name + "' (error | shrink-gap)");
}

void run_sample(const SampleOpts& o) {
    std::vector<Trajectory> trajs = io::load_trajectories_jsonl(o.data + "/trajectories.jsonl");
    auto labels = io::load_labels_jsonl(o.labels);
    std::vector<std::string> vocab = task_vocabulary(trajs);

    SamplerConfig cfg;
    cfg.sequence_length = o.length;
    cfg.frame_gap = o.gap;
    cfg.max_rewind = o.max_rewind;
    cfg.p_rewind = o.p_rewind;
    cfg.p_perturb = o.p_perturb;
    cfg.seed = o.seed;
    cfg.validate();

    std::vector<SequenceSample> samples;
    for (const Trajectory& t : trajs) {
        if (!o.trajectory.empty() && t.id != o.trajectory) continue;
        auto it = labels.find(t.id);
        if (it == labels.end()) continue; // unlabeled (filtered out) trajectories
        for (int64_t j = 0; j < o.draws; ++j)
            samples.push_back(
                draw_training_sample(t, it->second, cfg, vocab, static_cast<uint64_t>(j),
                                     policy_of(o.policy)));
    }
    if (samples.empty())
        throw ValidationError("sample: nothing to draw (unknown trajectory id or no labels)");
    io::save_samples_jsonl(o.out, samples);
    json cfg_json = {{"data", o.data},       {"labels", o.labels},
                     {"draws", o.draws},     {"length", o.length},
                     {"gap", o.gap},         {"max_rewind", o.max_rewind},
                     {"p_rewind", o.p_rewind}, {"p_perturb", o.p_perturb},
                     {"policy", o.policy},   {"trajectory", o.trajectory}};
    io::write_stamp(o.out + ".stamp.json", "sample", o.seed, cfg_json.dump());
    log("wrote " + std::to_string(samples.size()) + " samples to " + o.out);
}

// ---- train-reward -----------------------------------------------------------

struct TrainRewardOpts {
    std::string data, out;
    uint64_t seed = 0;
    double holdout = 0.1;
    int64_t draws = 8;
    int epochs = 20, batch = 32, d_model = 32, hidden = 64;
    double lr = 1e-2, momentum = 0.0, clip = 10.0, mse_weight = 1.0;
    int length = 9, gap = 30, max_rewind = 4;
    double p_rewind = 0.5, p_perturb = 0.0;
    std::string policy = "error";
    bool use_joints = false;
};

json train_reward_config_json(const TrainRewardOpts& o) {
    return {{"data", o.data},        {"holdout", o.holdout},
            {"draws", o.draws},      {"epochs", o.epochs},
            {"batch", o.batch},      {"d_model", o.d_model},
            {"hidden", o.hidden},    {"lr", o.lr},
            {"momentum", o.momentum}, {"clip", o.clip},
            {"mse_weight", o.mse_weight}, {"length", o.length},
            {"gap", o.gap},          {"max_rewind", o.max_rewind},
            {"p_rewind", o.p_rewind}, {"p_perturb", o.p_perturb},
            {"policy", o.policy},    {"use_joints", o.use_joints}};
}

void run_train_reward(const TrainRewardOpts& o) {
    LoadedDataset d = load_and_filter(o.data);
    if (d.kept_annotations.empty())
        throw ValidationError("train-reward: no annotation passed the filter");
    PriorProfile priors = compute_priors(d.kept_annotations, d.kept_trajectories);
    DatasetLabels labels = label_dataset(d.kept_annotations, d.kept_trajectories, priors);

    std::vector<std::string> ids;
    for (const Trajectory& t : d.kept_trajectories) ids.push_back(t.id);
    DatasetSplit split = split_dataset(ids, o.holdout, o.seed);
    log("split: " + std::to_string(split.train.size()) + " train / " +
        std::to_string(split.test.size()) + " held out");

    SamplerConfig scfg;
    scfg.sequence_length = o.length;
    scfg.frame_gap = o.gap;
    scfg.max_rewind = o.max_rewind;
    scfg.p_rewind = o.p_rewind;
    scfg.p_perturb = o.p_perturb;
    scfg.seed = o.seed;
    scfg.validate();

    std::vector<std::string> vocab = task_vocabulary(d.kept_trajectories);
    std::map<std::string, const Trajectory*> by_id;
    for (const Trajectory& t : d.kept_trajectories) by_id[t.id] = &t;

    auto draw_set = [&](const std::vector<std::string>& subset) {
        std::vector<SequenceSample> out;
        for (const std::string& id : subset) {
            const Trajectory& t = *by_id.at(id);
            const auto& labs = labels.by_trajectory.at(id);
            for (int64_t j = 0; j < o.draws; ++j)
                out.push_back(draw_training_sample(t, labs, scfg, vocab,
                                                   static_cast<uint64_t>(j),
                                                   policy_of(o.policy)));
        }
        return out;
    };
    std::vector<SequenceSample> train_samples = draw_set(split.train);
    std::vector<SequenceSample> val_samples = draw_set(split.test);
    if (train_samples.empty()) throw ValidationError("train-reward: no training samples");

    EstimatorConfig ecfg;
    ecfg.stage_count = d.protocol.stage_count();
    ecfg.feature_dim = static_cast<int>(d.kept_trajectories.front().frames.front().features.size());
    ecfg.joint_dim = o.use_joints ? static_cast<int>(
                                        d.kept_trajectories.front().frames.front().joint_state.size())
                                  : 0;
    ecfg.d_model = o.d_model;
    ecfg.head_hidden = o.hidden;
    ecfg.learning_rate = o.lr;
    ecfg.momentum = o.momentum;
    ecfg.grad_clip_norm = o.clip;
    ecfg.mse_weight = o.mse_weight;
    ecfg.batch_size = o.batch;
    ecfg.epochs = o.epochs;
    ecfg.seed = o.seed;
    ecfg.scheme_id = d.protocol.scheme_id;
    ecfg.window_length = o.length;
    ecfg.window_gap = o.gap;

    EstimatorModel model(ecfg, priors);
    TrainReport report = train(model, train_samples, val_samples, ecfg);
    for (const TrainEpoch& e : report.epochs)
        log("epoch " + std::to_string(e.epoch) + ": ce=" + std::to_string(e.stage_ce) +
            " mse=" + std::to_string(e.subtask_mse) + " val_mse=" + std::to_string(e.val_mse));

    io::save_estimator(o.out, model);
    io::save_train_report_tsv(o.out + ".train.tsv", report, ecfg);
    io::write_stamp(o.out + ".stamp.json", "train-reward", o.seed,
                    train_reward_config_json(o).dump());
    log("saved estimator to " + o.out);
}

// ---- eval-demo ----------------------------------------------------------------

struct EvalDemoOpts {
    std::string model, data, out, subset = "all";
    double holdout = 0.1;
    uint64_t split_seed = 0;
};

void run_eval_demo(const EvalDemoOpts& o) {
    EstimatorModel model = io::load_estimator(o.model);
    const std::string scheme = model.config().scheme_id;
    LoadedDataset d = load_and_filter(o.data);
    if (d.kept_annotations.empty())
        throw ValidationError("eval-demo: no annotation passed the filter");

    // label against the priors the model composes with, so the comparison is
    // against the exact supervision the model was trained toward
    DatasetLabels labels =
        label_dataset(d.kept_annotations, d.kept_trajectories, model.priors(scheme));

    std::vector<Trajectory> selected;
    if (o.subset == "all") {
        selected = d.kept_trajectories;
    } else {
        std::vector<std::string> ids;
        for (const Trajectory& t : d.kept_trajectories) ids.push_back(t.id);
        DatasetSplit split = split_dataset(ids, o.holdout, o.split_seed);
        const std::vector<std::string>& pick =
            o.subset == "test" ? split.test
                               : (o.subset == "train"
                                      ? split.train
                                      : throw UsageError("--subset must be all|train|test"));
        for (const Trajectory& t : d.kept_trajectories)
            if (std::find(pick.begin(), pick.end(), t.id) != pick.end())
                selected.push_back(t);
    }
    if (selected.empty()) throw ValidationError("eval-demo: empty evaluation subset");

    EstimatorPredictor predictor(model, scheme);
    const double mse = demo_mse(predictor, selected, labels.by_trajectory,
                                model.config().window_length, model.config().window_gap);

    json j = {{"demo_mse", mse},
              {"trajectory_count", selected.size()},
              {"subset", o.subset},
              {"model", o.model}};
    if (!o.out.empty()) {
        write_json(o.out, j);
        io::write_stamp(o.out + ".stamp.json", "eval-demo", o.split_seed, j.dump());
    }
    std::cout << j.dump() << std::endl;
}

// ---- eval-rollout ---------------------------------------------------------------

struct EvalRolloutOpts {
    std::string model, rollouts, out;
    bool use_truth = false;
};

void run_eval_rollout(const EvalRolloutOpts& o) {
    std::vector<RolloutTrace> truth = io::load_traces_jsonl(o.rollouts + "/traces.jsonl");

    std::vector<RolloutTrace> traces;
    if (o.use_truth) {
        traces = truth;
    } else {
        if (o.model.empty())
            throw UsageError("eval-rollout needs --model (or --use-truth)");
        EstimatorModel model = io::load_estimator(o.model);
        EstimatorPredictor predictor(model, model.config().scheme_id);
        std::map<std::string, std::optional<RolloutClass>> truth_of;
        for (const RolloutTrace& tr : truth) truth_of[tr.rollout_id] = tr.truth;
        for (const Trajectory& t :
             io::load_trajectories_jsonl(o.rollouts + "/trajectories.jsonl")) {
            RolloutTrace tr;
            tr.rollout_id = t.id;
            tr.progress = predict_progress(predictor, t);
            auto it = truth_of.find(t.id);
            if (it != truth_of.end()) tr.truth = it->second;
            traces.push_back(std::move(tr));
        }
    }

    EvalReport report = classify_rollouts(traces);
    if (!o.out.empty()) {
        io::save_eval_report(o.out, report);
        io::write_stamp(o.out + ".stamp.json", "eval-rollout", 0,
                        json({{"rollouts", o.rollouts},
                              {"model", o.model},
                              {"use_truth", o.use_truth}})
                            .dump());
    }
    json summary = {{"rho", report.rho ? json(*report.rho) : json(nullptr)},
                    {"xi", report.xi ? json(*report.xi) : json(nullptr)},
                    {"rollouts", traces.size()}};
    std::cout << summary.dump() << std::endl;
}

// ---- weigh ------------------------------------------------------------------------

struct WeighOpts {
    std::string data, out, model, oracle;
    double kappa = 0.01, eps_div = 1e-6, eps_var = 1e-6;
    int64_t stride = 25;
};

void run_weigh(const WeighOpts& o) {
    std::vector<Trajectory> trajs = io::load_trajectories_jsonl(o.data + "/trajectories.jsonl");

    std::unique_ptr<ProgressPredictor> oracle;
    std::unique_ptr<EstimatorModel> model;
    std::unique_ptr<EstimatorPredictor> est;
    const ProgressPredictor* predictor = nullptr;
    if (!o.oracle.empty()) {
        oracle = oracle_from_truth(o.oracle);
        predictor = oracle.get();
    } else if (!o.model.empty()) {
        model = std::make_unique<EstimatorModel>(io::load_estimator(o.model));
        est = std::make_unique<EstimatorPredictor>(*model, model->config().scheme_id);
        predictor = est.get();
    } else {
        throw UsageError("weigh needs --model or --oracle");
    }

    WeightConfig cfg;
    cfg.kappa = o.kappa;
    cfg.eps_div = o.eps_div;
    cfg.eps_var = o.eps_var;
    cfg.chunk_stride = o.stride;
    cfg.validate();

    WeightTable table = weight_dataset(*predictor, trajs, cfg);
    io::save_weight_table_tsv(o.out, table);
    io::write_stamp(o.out + ".stamp.json", "weigh", 0,
                    json({{"data", o.data},
                          {"model", o.model},
                          {"oracle", o.oracle},
                          {"kappa", o.kappa},
                          {"stride", o.stride}})
                        .dump());

    double mean_w = 0.0;
    for (const WeightRow& r : table.rows) mean_w += r.w;
    if (!table.rows.empty()) mean_w /= static_cast<double>(table.rows.size());
    log("weighed " + std::to_string(table.rows.size()) + " chunks, mean weight " +
        std::to_string(mean_w) + ", skipped " + std::to_string(table.skipped.size()) +
        " trajectories");
}

// ---- train-bc -------------------------------------------------------------------

struct TrainBCOpts {
    std::string data, out, model, oracle;
    std::string mode = "ra-bc", source = "offline";
    bool force_unit = false;
    uint64_t seed = 0;
    int hidden = 64, batch = 16, epochs = 10;
    double lr = 0.05, momentum = 0.0, clip = 10.0;
    double kappa = 0.01, eps_div = 1e-6, eps_var = 1e-6;
    int64_t stride = 25;
};

void run_train_bc(const TrainBCOpts& o) {
    std::vector<Trajectory> trajs = io::load_trajectories_jsonl(o.data + "/trajectories.jsonl");
    if (trajs.empty()) throw ValidationError("train-bc: empty dataset");
    const Frame& first = trajs.front().frames.front();
    if (first.action.empty())
        throw ValidationError("train-bc: dataset records no actions");

    BCConfig cfg;
    cfg.feature_dim = static_cast<int>(first.features.size());
    cfg.action_dim = static_cast<int>(first.action.size());
    cfg.hidden = o.hidden;
    cfg.learning_rate = o.lr;
    cfg.momentum = o.momentum;
    cfg.grad_clip_norm = o.clip;
    cfg.batch_size = o.batch;
    cfg.epochs = o.epochs;
    cfg.seed = o.seed;
    if (o.mode == "uniform") cfg.mode = BCMode::uniform;
    else if (o.mode == "ra-bc") cfg.mode = BCMode::ra_bc;
    else throw UsageError("--mode must be uniform|ra-bc");
    if (o.source == "offline") cfg.source = WeightSource::offline;
    else if (o.source == "online") cfg.source = WeightSource::online;
    else throw UsageError("--source must be offline|online");
    cfg.force_unit_weights = o.force_unit;
    cfg.weight.kappa = o.kappa;
    cfg.weight.eps_div = o.eps_div;
    cfg.weight.eps_var = o.eps_var;
    cfg.weight.chunk_stride = o.stride;
    cfg.validate();

    std::unique_ptr<ProgressPredictor> oracle;
    std::unique_ptr<EstimatorModel> model;
    std::unique_ptr<EstimatorPredictor> est;
    const ProgressPredictor* predictor = nullptr;
    if (!o.oracle.empty()) {
        oracle = oracle_from_truth(o.oracle);
        predictor = oracle.get();
    } else if (!o.model.empty()) {
        model = std::make_unique<EstimatorModel>(io::load_estimator(o.model));
        est = std::make_unique<EstimatorPredictor>(*model, model->config().scheme_id);
        predictor = est.get();
    }

    PolicyModel policy(cfg.feature_dim, cfg.action_dim, cfg.hidden, cfg.seed);
    BCTrainReport report = train_bc(policy, trajs, cfg, predictor);
    for (const BCEpoch& e : report.epochs)
        log("epoch " + std::to_string(e.epoch) + ": loss=" + std::to_string(e.loss) +
            " mean_w=" + std::to_string(e.weight_mean) +
            " zero=" + std::to_string(e.frac_zero));

    io::save_policy(o.out, policy, cfg);
    io::save_bc_report_tsv(o.out + ".train.tsv", report, cfg);
    io::write_stamp(o.out + ".stamp.json", "train-bc", o.seed,
                    json({{"data", o.data},
                          {"mode", o.mode},
                          {"source", o.source},
                          {"force_unit_weights", o.force_unit},
                          {"model", o.model},
                          {"oracle", o.oracle},
                          {"stride", o.stride},
                          {"epochs", o.epochs}})
                        .dump());
    log("saved policy to " + o.out);
}

// ---- report -----------------------------------------------------------------------

struct ReportOpts {
    std::string data, weights, traces;
};

void run_report(const ReportOpts& o) {
    if (o.data.empty() && o.weights.empty() && o.traces.empty())
        throw UsageError("report needs at least one of --data/--weights/--traces");

    if (!o.data.empty()) {
        std::vector<io::TruthRecord> truth = io::load_truth_jsonl(o.data + "/truth.jsonl");
        std::map<std::string, int> per_quality;
        for (const io::TruthRecord& r : truth) per_quality[r.quality] += 1;
        std::cout << "dataset " << o.data << ": " << truth.size() << " trajectories\n";
        for (const auto& [q, n] : per_quality) std::cout << "  " << q << ": " << n << "\n";
        if (fs::exists(o.data + "/priors.json")) {
            PriorProfile priors = io::load_priors(o.data + "/priors.json");
            std::cout << "  priors (" << priors.scheme_id << ", "
                      << priors.trajectory_count << " annotations):";
            for (double a : priors.alpha) std::cout << ' ' << a;
            std::cout << "\n";
        }
    }

    if (!o.weights.empty()) {
        WeightTable table = io::load_weight_table_tsv(o.weights);
        int64_t zeros = 0, ones = 0;
        double mean = 0.0;
        std::vector<int64_t> hist(10, 0);
        for (const WeightRow& r : table.rows) {
            mean += r.w;
            if (r.w == 0.0) ++zeros;
            if (r.w == 1.0) ++ones;
            size_t bin = std::min<size_t>(9, static_cast<size_t>(r.w * 10.0));
            hist[bin] += 1;
        }
        if (!table.rows.empty()) mean /= static_cast<double>(table.rows.size());
        std::cout << "weights " << o.weights << ": " << table.rows.size() << " chunks from "
                  << table.predictor_id << "\n  mean " << mean << ", zero " << zeros
                  << ", one " << ones << "\n  histogram";
        for (int64_t h : hist) std::cout << ' ' << h;
        std::cout << "\n";
        for (const auto& [id, reason] : table.skipped)
            std::cout << "  skipped " << id << ": " << reason << "\n";
    }

    if (!o.traces.empty()) {
        std::vector<RolloutTrace> traces = io::load_traces_jsonl(o.traces);
        EvalReport report = classify_rollouts(traces);
        std::cout << "traces " << o.traces << ": " << traces.size() << " rollouts\n";
        if (report.xi) std::cout << "  xi " << *report.xi << "\n";
        if (report.rho) std::cout << "  rho " << *report.rho << "\n";
        for (const auto& [name, count] : report.per_class)
            std::cout << "  " << name << ": " << count.correct << "/" << count.total
                      << " correct\n";
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"stage-aware progress estimation and reward-aligned behavior cloning"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "0.1.0");
    app.set_config("--config", "", "INI file with per-subcommand sections; flags win");

    GenOpts gen;
    CLI::App* cgen = app.add_subcommand("gen", "generate a synthetic dataset or rollout set");
    cgen->add_option("--out", gen.out, "output directory")->required();
    cgen->add_option("--count", gen.count, "number of trajectories");
    cgen->add_option("--seed", gen.seed, "generation seed")->envname("STAGERM_SEED");
    cgen->add_option("--threads", gen.threads, "emission worker threads");
    cgen->add_option("--stall", gen.stall, "fraction of stalled demos");
    cgen->add_option("--misgrasp", gen.misgrasp, "fraction of misgrasp demos");
    cgen->add_option("--regression", gen.regression, "fraction of regression demos");
    cgen->add_option("--premature", gen.premature, "fraction of premature stops");
    cgen->add_option("--stages", gen.stages, "stages per task");
    cgen->add_option("--feature-dim", gen.feature_dim, "observed feature dimension");
    cgen->add_option("--fps", gen.fps, "frames per second");
    cgen->add_option("--sigma-obs", gen.sigma_obs, "observation noise stddev");
    cgen->add_option("--min-stage", gen.min_stage, "minimum planned frames per stage");
    cgen->add_option("--max-stage", gen.max_stage, "maximum planned frames per stage");
    cgen->add_option("--task", gen.task, "task id");
    cgen->add_option("--scheme", gen.scheme, "annotation scheme id");
    cgen->add_option("--prefix", gen.prefix, "trajectory id prefix");
    cgen->add_flag("--rollouts", gen.rollouts, "generate a rollout evaluation set instead");
    cgen->add_option("--se", gen.se, "rollouts: success count");
    cgen->add_option("--pse", gen.pse, "rollouts: partial-success count");
    cgen->add_option("--fe", gen.fe, "rollouts: failure count");
    cgen->callback([&gen] { run_gen(gen); });

    std::string label_data, label_out;
    CLI::App* clabel = app.add_subcommand("label", "filter annotations, fit priors, write labels");
    clabel->add_option("--data", label_data, "dataset directory")->required();
    clabel->add_option("--out", label_out, "output directory")->required();
    clabel->callback([&] { run_label(label_data, label_out); });

    SampleOpts sample;
    CLI::App* csample = app.add_subcommand("sample", "draw augmented training windows");
    csample->add_option("--data", sample.data, "dataset directory")->required();
    csample->add_option("--labels", sample.labels, "labels.jsonl path")->required();
    csample->add_option("--out", sample.out, "output samples.jsonl")->required();
    csample->add_option("--trajectory", sample.trajectory, "restrict to one trajectory id");
    csample->add_option("--draws", sample.draws, "draws per trajectory");
    csample->add_option("--seed", sample.seed, "sampling seed")->envname("STAGERM_SEED");
    csample->add_option("--length", sample.length, "window length N");
    csample->add_option("--gap", sample.gap, "frame gap G");
    csample->add_option("--max-rewind", sample.max_rewind, "max rewound positions");
    csample->add_option("--p-rewind", sample.p_rewind, "rewind probability");
    csample->add_option("--p-perturb", sample.p_perturb, "instruction perturbation probability");
    csample->add_option("--min-length-policy", sample.policy, "error | shrink-gap");
    csample->callback([&sample] { run_sample(sample); });

    TrainRewardOpts tr;
    CLI::App* ctr = app.add_subcommand("train-reward", "train the stage/progress estimator");
    ctr->add_option("--data", tr.data, "dataset directory")->required();
    ctr->add_option("--out", tr.out, "output model path")->required();
    ctr->add_option("--seed", tr.seed, "training seed")->envname("STAGERM_SEED");
    ctr->add_option("--holdout", tr.holdout, "held-out fraction of demos");
    ctr->add_option("--draws", tr.draws, "window draws per trajectory");
    ctr->add_option("--epochs", tr.epochs, "training epochs");
    ctr->add_option("--batch", tr.batch, "minibatch size");
    ctr->add_option("--d-model", tr.d_model, "projection width");
    ctr->add_option("--hidden", tr.hidden, "head hidden width");
    ctr->add_option("--lr", tr.lr, "learning rate");
    ctr->add_option("--momentum", tr.momentum, "SGD momentum");
    ctr->add_option("--clip", tr.clip, "gradient clip norm");
    ctr->add_option("--mse-weight", tr.mse_weight, "within-stage regression weight");
    ctr->add_option("--length", tr.length, "window length N");
    ctr->add_option("--gap", tr.gap, "frame gap G");
    ctr->add_option("--max-rewind", tr.max_rewind, "max rewound positions");
    ctr->add_option("--p-rewind", tr.p_rewind, "rewind probability");
    ctr->add_option("--p-perturb", tr.p_perturb, "instruction perturbation probability");
    ctr->add_option("--min-length-policy", tr.policy, "error | shrink-gap");
    ctr->add_flag("--use-joints", tr.use_joints, "feed joint state to the estimator");
    ctr->callback([&tr] { run_train_reward(tr); });

    EvalDemoOpts ed;
    CLI::App* ced = app.add_subcommand("eval-demo", "progress MSE against labels on demos");
    ced->add_option("--model", ed.model, "estimator checkpoint")->required();
    ced->add_option("--data", ed.data, "dataset directory")->required();
    ced->add_option("--out", ed.out, "optional output json");
    ced->add_option("--subset", ed.subset, "all | train | test");
    ced->add_option("--holdout", ed.holdout, "held-out fraction used at training time");
    ced->add_option("--split-seed", ed.split_seed, "seed the split was made with");
    ced->callback([&ed] { run_eval_demo(ed); });

    EvalRolloutOpts er;
    CLI::App* cer = app.add_subcommand("eval-rollout", "classify rollouts from progress traces");
    cer->add_option("--rollouts", er.rollouts, "rollout set directory")->required();
    cer->add_option("--model", er.model, "estimator checkpoint");
    cer->add_option("--out", er.out, "optional eval report json");
    cer->add_flag("--use-truth", er.use_truth, "classify the true traces instead of predictions");
    cer->callback([&er] { run_eval_rollout(er); });

    WeighOpts wo;
    CLI::App* cweigh = app.add_subcommand("weigh", "compute chunk weights for a dataset");
    cweigh->add_option("--data", wo.data, "dataset directory")->required();
    cweigh->add_option("--out", wo.out, "output weights tsv")->required();
    cweigh->add_option("--model", wo.model, "estimator checkpoint");
    cweigh->add_option("--oracle", wo.oracle, "truth.jsonl to use as a perfect predictor");
    cweigh->add_option("--kappa", wo.kappa, "certainty threshold");
    cweigh->add_option("--eps-div", wo.eps_div, "loss denominator guard");
    cweigh->add_option("--eps-var", wo.eps_var, "ramp denominator guard");
    cweigh->add_option("--stride", wo.stride, "chunk stride (lookahead)");
    cweigh->callback([&wo] { run_weigh(wo); });

    TrainBCOpts tb;
    CLI::App* ctb = app.add_subcommand("train-bc", "behavior cloning, optionally reward-aligned");
    ctb->add_option("--data", tb.data, "dataset directory")->required();
    ctb->add_option("--out", tb.out, "output policy path")->required();
    ctb->add_option("--model", tb.model, "estimator checkpoint for weights");
    ctb->add_option("--oracle", tb.oracle, "truth.jsonl for oracle weights");
    ctb->add_option("--mode", tb.mode, "uniform | ra-bc");
    ctb->add_option("--source", tb.source, "offline | online weighting");
    ctb->add_flag("--force-unit-weights", tb.force_unit, "pin every weight to 1");
    ctb->add_option("--seed", tb.seed, "training seed")->envname("STAGERM_SEED");
    ctb->add_option("--hidden", tb.hidden, "policy hidden width");
    ctb->add_option("--batch", tb.batch, "minibatch size (chunks)");
    ctb->add_option("--epochs", tb.epochs, "training epochs");
    ctb->add_option("--lr", tb.lr, "learning rate");
    ctb->add_option("--momentum", tb.momentum, "SGD momentum");
    ctb->add_option("--clip", tb.clip, "gradient clip norm");
    ctb->add_option("--kappa", tb.kappa, "certainty threshold");
    ctb->add_option("--eps-div", tb.eps_div, "loss denominator guard");
    ctb->add_option("--eps-var", tb.eps_var, "ramp denominator guard");
    ctb->add_option("--stride", tb.stride, "chunk stride (lookahead)");
    ctb->callback([&tb] { run_train_bc(tb); });

    ReportOpts ro;
    CLI::App* crep = app.add_subcommand("report", "summarize datasets, weights, or traces");
    crep->add_option("--data", ro.data, "dataset directory");
    crep->add_option("--weights", ro.weights, "weights tsv");
    crep->add_option("--traces", ro.traces, "traces jsonl");
    crep->callback([&ro] { run_report(ro); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help / --version
        std::cerr << "error\tusage\t" << e.what() << std::endl;
        return static_cast<int>(ErrorCategory::usage);
    } catch (const Error& e) {
        std::cerr << "error\t" << to_string(e.category()) << '\t' << e.what() << std::endl;
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error\tinternal\t" << e.what() << std::endl;
        return 1;
    }
    return 0;
}
