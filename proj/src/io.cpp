#include "stagerm/io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "stagerm/errors.hpp"

namespace stagerm::io {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kToolVersion = "0.1.0";

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return in;
}

void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw IoError("write to '" + path + "' failed");
}

json parse_or_throw(const std::string& text, const std::string& where) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw IoError("cannot parse " + where + ": " + e.what());
    }
}

json parse_file(const std::string& path) {
    std::ifstream in = open_in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_or_throw(buf.str(), "'" + path + "'");
}

template <typename Fn>
void each_jsonl(const std::string& path, Fn&& fn) {
    std::ifstream in = open_in(path);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        fn(parse_or_throw(line, "'" + path + "' line " + std::to_string(lineno)));
    }
}

// %.17g: shortest form is a different string per compiler, 17 significant
// digits round-trips everywhere
std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json frame_to_json(const Frame& f) {
    return {{"index", f.index},
            {"time_s", f.time_s},
            {"features", f.features},
            {"joint_state", f.joint_state},
            {"action", f.action}};
}

Frame frame_from_json(const json& j) {
    Frame f;
    f.index = j.at("index").get<int64_t>();
    f.time_s = j.at("time_s").get<double>();
    f.features = j.at("features").get<std::vector<double>>();
    f.joint_state = j.at("joint_state").get<std::vector<double>>();
    f.action = j.at("action").get<std::vector<double>>();
    return f;
}

json annotation_to_json(const TrajectoryAnnotation& a) {
    json segs = json::array();
    for (const Segment& s : a.segments)
        segs.push_back({{"label", s.label}, {"start", s.start}, {"end", s.end}});
    json mistakes = json::array();
    for (const Span& m : a.mistakes) mistakes.push_back({{"start", m.start}, {"end", m.end}});
    return {{"trajectory_id", a.trajectory_id},
            {"scheme_id", a.scheme_id},
            {"segments", segs},
            {"mistakes", mistakes}};
}

TrajectoryAnnotation annotation_from_json(const json& j) {
    TrajectoryAnnotation a;
    a.trajectory_id = j.at("trajectory_id").get<std::string>();
    a.scheme_id = j.at("scheme_id").get<std::string>();
    for (const json& s : j.at("segments"))
        a.segments.push_back({s.at("label").get<std::string>(), s.at("start").get<int64_t>(),
                              s.at("end").get<int64_t>()});
    for (const json& m : j.at("mistakes"))
        a.mistakes.push_back({m.at("start").get<int64_t>(), m.at("end").get<int64_t>()});
    return a;
}

json priors_to_json(const PriorProfile& p) {
    return {{"scheme_id", p.scheme_id},
            {"alpha", p.alpha},
            {"cumulative", p.cumulative},
            {"trajectory_count", p.trajectory_count}};
}

PriorProfile priors_from_json(const json& j) {
    PriorProfile p;
    p.scheme_id = j.at("scheme_id").get<std::string>();
    p.alpha = j.at("alpha").get<std::vector<double>>();
    p.cumulative = j.at("cumulative").get<std::vector<double>>();
    p.trajectory_count = j.at("trajectory_count").get<int64_t>();
    p.validate();
    return p;
}

json estimator_config_to_json(const EstimatorConfig& c) {
    return {{"stage_count", c.stage_count},
            {"feature_dim", c.feature_dim},
            {"joint_dim", c.joint_dim},
            {"d_model", c.d_model},
            {"head_hidden", c.head_hidden},
            {"learning_rate", c.learning_rate},
            {"momentum", c.momentum},
            {"grad_clip_norm", c.grad_clip_norm},
            {"mse_weight", c.mse_weight},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"scheme_id", c.scheme_id},
            {"window_length", c.window_length},
            {"window_gap", c.window_gap}};
}

EstimatorConfig estimator_config_from_json(const json& j) {
    EstimatorConfig c;
    c.stage_count = j.at("stage_count").get<int>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.joint_dim = j.at("joint_dim").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.head_hidden = j.at("head_hidden").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.momentum = j.at("momentum").get<double>();
    c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
    c.mse_weight = j.at("mse_weight").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    c.scheme_id = j.at("scheme_id").get<std::string>();
    c.window_length = j.at("window_length").get<int>();
    c.window_gap = j.at("window_gap").get<int>();
    return c;
}

json weight_config_to_json(const WeightConfig& c) {
    return {{"kappa", c.kappa},
            {"eps_div", c.eps_div},
            {"eps_var", c.eps_var},
            {"chunk_stride", c.chunk_stride}};
}

WeightConfig weight_config_from_json(const json& j) {
    WeightConfig c;
    c.kappa = j.at("kappa").get<double>();
    c.eps_div = j.at("eps_div").get<double>();
    c.eps_var = j.at("eps_var").get<double>();
    c.chunk_stride = j.at("chunk_stride").get<int64_t>();
    return c;
}

json bc_config_to_json(const BCConfig& c) {
    return {{"feature_dim", c.feature_dim},
            {"action_dim", c.action_dim},
            {"hidden", c.hidden},
            {"learning_rate", c.learning_rate},
            {"momentum", c.momentum},
            {"grad_clip_norm", c.grad_clip_norm},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"mode", to_string(c.mode)},
            {"source", to_string(c.source)},
            {"force_unit_weights", c.force_unit_weights},
            {"weight", weight_config_to_json(c.weight)}};
}

BCConfig bc_config_from_json(const json& j) {
    BCConfig c;
    c.feature_dim = j.at("feature_dim").get<int>();
    c.action_dim = j.at("action_dim").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.momentum = j.at("momentum").get<double>();
    c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "uniform") c.mode = BCMode::uniform;
    else if (mode == "ra-bc") c.mode = BCMode::ra_bc;
    else throw ValidationError("policy file: unknown mode '" + mode + "'");
    const std::string source = j.at("source").get<std::string>();
    if (source == "offline") c.source = WeightSource::offline;
    else if (source == "online") c.source = WeightSource::online;
    else throw ValidationError("policy file: unknown source '" + source + "'");
    c.force_unit_weights = j.at("force_unit_weights").get<bool>();
    c.weight = weight_config_from_json(j.at("weight"));
    return c;
}

void require_version(const json& j, const std::string& kind, const std::string& path) {
    if (!j.contains("format_version") || !j.at("format_version").is_number_integer())
        throw IoError("'" + path + "': missing format_version");
    const int v = j.at("format_version").get<int>();
    if (v != kFormatVersion)
        throw IoError("'" + path + "': format_version " + std::to_string(v) +
                      " not supported (this build reads " + std::to_string(kFormatVersion) + ")");
    if (j.value("kind", "") != kind)
        throw IoError("'" + path + "': expected a " + kind + " file, found '" +
                      j.value("kind", "<none>") + "'");
}

} // namespace

void save_trajectories_jsonl(const std::string& path, const std::vector<Trajectory>& trajs) {
    std::ofstream out = open_out(path);
    for (const Trajectory& t : trajs) {
        json frames = json::array();
        for (const Frame& f : t.frames) frames.push_back(frame_to_json(f));
        json j = {{"id", t.id}, {"task_id", t.task_id}, {"fps", t.fps}, {"frames", frames}};
        out << j.dump() << '\n';
    }
    finish(out, path);
}

std::vector<Trajectory> load_trajectories_jsonl(const std::string& path) {
    std::vector<Trajectory> trajs;
    each_jsonl(path, [&](const json& j) {
        Trajectory t;
        t.id = j.at("id").get<std::string>();
        t.task_id = j.at("task_id").get<std::string>();
        t.fps = j.at("fps").get<int>();
        for (const json& f : j.at("frames")) t.frames.push_back(frame_from_json(f));
        t.validate();
        trajs.push_back(std::move(t));
    });
    return trajs;
}

void save_annotations(const std::string& path, const AnnotationProtocol& protocol,
                      const std::vector<TrajectoryAnnotation>& annotations) {
    json anns = json::array();
    for (const TrajectoryAnnotation& a : annotations) anns.push_back(annotation_to_json(a));
    json j = {{"protocol", {{"scheme_id", protocol.scheme_id}, {"subtasks", protocol.subtasks}}},
              {"annotations", anns}};
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
    finish(out, path);
}

AnnotationFile load_annotations(const std::string& path) {
    json j = parse_file(path);
    AnnotationFile file;
    file.protocol.scheme_id = j.at("protocol").at("scheme_id").get<std::string>();
    file.protocol.subtasks = j.at("protocol").at("subtasks").get<std::vector<std::string>>();
    file.protocol.validate();
    for (const json& a : j.at("annotations"))
        file.annotations.push_back(annotation_from_json(a));
    return file;
}

void save_priors(const std::string& path, const PriorProfile& priors) {
    std::ofstream out = open_out(path);
    out << priors_to_json(priors).dump(2) << '\n';
    finish(out, path);
}

PriorProfile load_priors(const std::string& path) { return priors_from_json(parse_file(path)); }

void save_labels_jsonl(const std::string& path, const DatasetLabels& labels) {
    std::ofstream out = open_out(path);
    for (const auto& [id, labs] : labels.by_trajectory) {
        json rows = json::array();
        for (const ProgressLabel& l : labs) rows.push_back({l.t, l.stage, l.tau, l.y});
        json j = {{"trajectory_id", id}, {"columns", {"t", "stage", "tau", "y"}},
                  {"labels", rows}};
        out << j.dump() << '\n';
    }
    finish(out, path);
}

std::map<std::string, std::vector<ProgressLabel>> load_labels_jsonl(const std::string& path) {
    std::map<std::string, std::vector<ProgressLabel>> out;
    each_jsonl(path, [&](const json& j) {
        const std::string id = j.at("trajectory_id").get<std::string>();
        std::vector<ProgressLabel> labs;
        for (const json& row : j.at("labels")) {
            ProgressLabel l;
            l.t = row.at(0).get<int64_t>();
            l.stage = row.at(1).get<int>();
            l.tau = row.at(2).get<double>();
            l.y = row.at(3).get<double>();
            labs.push_back(l);
        }
        if (!out.emplace(id, std::move(labs)).second)
            throw ValidationError("labels file: duplicate trajectory '" + id + "'");
    });
    return out;
}

void save_truth_jsonl(const std::string& path, const std::vector<SimTrajectory>& items) {
    std::ofstream out = open_out(path);
    for (const SimTrajectory& s : items) {
        json j = {{"trajectory_id", s.trajectory.id},
                  {"quality", to_string(s.quality)},
                  {"stage", s.stage_true},
                  {"tau", s.tau_true},
                  {"y", s.y_true},
                  {"corrupted", s.corrupted}};
        out << j.dump() << '\n';
    }
    finish(out, path);
}

std::vector<TruthRecord> load_truth_jsonl(const std::string& path) {
    std::vector<TruthRecord> records;
    each_jsonl(path, [&](const json& j) {
        TruthRecord r;
        r.trajectory_id = j.at("trajectory_id").get<std::string>();
        r.quality = j.at("quality").get<std::string>();
        r.stage = j.at("stage").get<std::vector<int>>();
        r.tau = j.at("tau").get<std::vector<double>>();
        r.y = j.at("y").get<std::vector<double>>();
        r.corrupted = j.at("corrupted").get<std::vector<uint8_t>>();
        records.push_back(std::move(r));
    });
    return records;
}

void save_traces_jsonl(const std::string& path, const std::vector<RolloutTrace>& traces) {
    std::ofstream out = open_out(path);
    for (const RolloutTrace& tr : traces) {
        json j = {{"rollout_id", tr.rollout_id}, {"progress", tr.progress}};
        j["truth"] = tr.truth ? json(to_string(*tr.truth)) : json(nullptr);
        out << j.dump() << '\n';
    }
    finish(out, path);
}

std::vector<RolloutTrace> load_traces_jsonl(const std::string& path) {
    std::vector<RolloutTrace> traces;
    each_jsonl(path, [&](const json& j) {
        RolloutTrace tr;
        tr.rollout_id = j.at("rollout_id").get<std::string>();
        tr.progress = j.at("progress").get<std::vector<double>>();
        if (j.contains("truth") && !j.at("truth").is_null())
            tr.truth = rollout_class_from_string(j.at("truth").get<std::string>());
        traces.push_back(std::move(tr));
    });
    return traces;
}

void save_samples_jsonl(const std::string& path, const std::vector<SequenceSample>& samples) {
    std::ofstream out = open_out(path);
    for (const SequenceSample& s : samples) {
        json j = {{"trajectory_id", s.trajectory_id},
                  {"frame_indices", s.frame_indices},
                  {"features", s.features},
                  {"joint_states", s.joint_states},
                  {"stage_targets", s.stage_targets},
                  {"tau_targets", s.tau_targets},
                  {"progress_targets", s.progress_targets},
                  {"rewind_mask", s.rewind_mask},
                  {"instruction_match", s.instruction_match},
                  {"task_id_presented", s.task_id_presented}};
        out << j.dump() << '\n';
    }
    finish(out, path);
}

std::vector<SequenceSample> load_samples_jsonl(const std::string& path) {
    std::vector<SequenceSample> samples;
    each_jsonl(path, [&](const json& j) {
        SequenceSample s;
        s.trajectory_id = j.at("trajectory_id").get<std::string>();
        s.frame_indices = j.at("frame_indices").get<std::vector<int64_t>>();
        s.features = j.at("features").get<std::vector<std::vector<double>>>();
        s.joint_states = j.at("joint_states").get<std::vector<std::vector<double>>>();
        s.stage_targets = j.at("stage_targets").get<std::vector<int>>();
        s.tau_targets = j.at("tau_targets").get<std::vector<double>>();
        s.progress_targets = j.at("progress_targets").get<std::vector<double>>();
        s.rewind_mask = j.at("rewind_mask").get<std::vector<bool>>();
        s.instruction_match = j.at("instruction_match").get<bool>();
        s.task_id_presented = j.at("task_id_presented").get<std::string>();
        samples.push_back(std::move(s));
    });
    return samples;
}

void save_eval_report(const std::string& path, const EvalReport& report) {
    json predicted = json::array();
    for (const auto& [id, c] : report.predicted)
        predicted.push_back({{"rollout_id", id}, {"class", to_string(c)}});
    json per_class = json::object();
    for (const auto& [name, count] : report.per_class)
        per_class[name] = {{"correct", count.correct}, {"total", count.total}};
    json j = {{"predicted", predicted},
              {"xi", report.xi ? json(*report.xi) : json(nullptr)},
              {"rho", report.rho ? json(*report.rho) : json(nullptr)},
              {"per_class", per_class}};
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
    finish(out, path);
}

void save_estimator(const std::string& path, const EstimatorModel& model) {
    json schemes = json::array();
    for (const std::string& id : model.scheme_order())
        schemes.push_back({{"scheme_id", id}, {"priors", priors_to_json(model.priors(id))}});
    json j = {{"format_version", kFormatVersion},
              {"kind", "estimator"},
              {"config", estimator_config_to_json(model.config())},
              {"schemes", schemes},
              {"params", model.params()}};
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
    finish(out, path);
}

EstimatorModel load_estimator(const std::string& path) {
    json j = parse_file(path);
    require_version(j, "estimator", path);
    EstimatorConfig config = estimator_config_from_json(j.at("config"));
    const json& schemes = j.at("schemes");
    if (schemes.empty()) throw ValidationError("estimator file: no schemes");
    if (schemes.at(0).at("scheme_id").get<std::string>() != config.scheme_id)
        throw ValidationError("estimator file: first scheme does not match config.scheme_id");

    EstimatorModel model(config, priors_from_json(schemes.at(0).at("priors")));
    for (size_t i = 1; i < schemes.size(); ++i)
        model.add_scheme(schemes.at(i).at("scheme_id").get<std::string>(),
                         priors_from_json(schemes.at(i).at("priors")));

    std::vector<double> params = j.at("params").get<std::vector<double>>();
    if (params.size() != model.params().size())
        throw ValidationError("estimator file: parameter count " +
                              std::to_string(params.size()) + " does not match the " +
                              std::to_string(model.params().size()) +
                              " the architecture implies");
    model.params() = std::move(params);
    return model;
}

void save_policy(const std::string& path, const PolicyModel& policy, const BCConfig& config) {
    json j = {{"format_version", kFormatVersion},
              {"kind", "policy"},
              {"config", bc_config_to_json(config)},
              {"params", policy.params()}};
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
    finish(out, path);
}

PolicyFile load_policy(const std::string& path) {
    json j = parse_file(path);
    require_version(j, "policy", path);
    BCConfig config = bc_config_from_json(j.at("config"));
    PolicyModel policy(config.feature_dim, config.action_dim, config.hidden, config.seed);
    std::vector<double> params = j.at("params").get<std::vector<double>>();
    if (params.size() != policy.params().size())
        throw ValidationError("policy file: parameter count mismatch");
    policy.params() = std::move(params);
    return {std::move(policy), config};
}

void save_train_report_tsv(const std::string& path, const TrainReport& report,
                           const EstimatorConfig& config) {
    std::ofstream out = open_out(path);
    out << "# " << json({{"kind", "estimator-train"},
                         {"config", estimator_config_to_json(config)}})
                       .dump()
        << '\n';
    out << "epoch\tstage_ce\tsubtask_mse\tval_mse\n";
    for (const TrainEpoch& e : report.epochs)
        out << e.epoch << '\t' << fmt_double(e.stage_ce) << '\t' << fmt_double(e.subtask_mse)
            << '\t' << fmt_double(e.val_mse) << '\n';
    finish(out, path);
}

void save_bc_report_tsv(const std::string& path, const BCTrainReport& report,
                        const BCConfig& config) {
    std::ofstream out = open_out(path);
    out << "# " << json({{"kind", "bc-train"}, {"config", bc_config_to_json(config)}}).dump()
        << '\n';
    out << "epoch\tloss\tweight_mean\tfrac_zero\tfrac_one\n";
    for (const BCEpoch& e : report.epochs)
        out << e.epoch << '\t' << fmt_double(e.loss) << '\t' << fmt_double(e.weight_mean)
            << '\t' << fmt_double(e.frac_zero) << '\t' << fmt_double(e.frac_one) << '\n';
    finish(out, path);
}

void save_weight_table_tsv(const std::string& path, const WeightTable& table) {
    json skipped = json::array();
    for (const auto& [id, reason] : table.skipped)
        skipped.push_back({{"trajectory_id", id}, {"reason", reason}});
    json header = {{"kind", "weight-table"},
                   {"config", weight_config_to_json(table.config)},
                   {"predictor", table.predictor_id},
                   {"stats",
                    {{"count", table.stats.count()},
                     {"mean", table.stats.mean()},
                     {"m2", table.stats.m2()}}},
                   {"skipped", skipped}};
    std::ofstream out = open_out(path);
    out << "# " << header.dump() << '\n';
    out << "trajectory_id\tt\tr_hat\tw\n";
    for (const WeightRow& r : table.rows)
        out << r.trajectory_id << '\t' << r.t << '\t' << fmt_double(r.r_hat) << '\t'
            << fmt_double(r.w) << '\n';
    finish(out, path);
}

WeightTable load_weight_table_tsv(const std::string& path) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || line.size() < 2 || line[0] != '#')
        throw IoError("'" + path + "': missing header line");
    json header = parse_or_throw(line.substr(2), "'" + path + "' header");
    if (header.value("kind", "") != "weight-table")
        throw IoError("'" + path + "': not a weight table");

    WeightTable table;
    table.config = weight_config_from_json(header.at("config"));
    table.predictor_id = header.at("predictor").get<std::string>();
    table.stats = RunningStats::from_moments(header.at("stats").at("count").get<int64_t>(),
                                             header.at("stats").at("mean").get<double>(),
                                             header.at("stats").at("m2").get<double>());
    for (const json& s : header.at("skipped"))
        table.skipped.emplace_back(s.at("trajectory_id").get<std::string>(),
                                   s.at("reason").get<std::string>());

    if (!std::getline(in, line))
        throw IoError("'" + path + "': missing column line");
    size_t lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        WeightRow r;
        std::string r_hat, w;
        if (!std::getline(row, r.trajectory_id, '\t'))
            throw IoError("'" + path + "' line " + std::to_string(lineno) + ": bad row");
        std::string t;
        if (!std::getline(row, t, '\t') || !std::getline(row, r_hat, '\t') ||
            !std::getline(row, w, '\t'))
            throw IoError("'" + path + "' line " + std::to_string(lineno) + ": bad row");
        try {
            r.t = std::stoll(t);
            r.r_hat = std::stod(r_hat);
            r.w = std::stod(w);
        } catch (const std::exception&) {
            throw IoError("'" + path + "' line " + std::to_string(lineno) +
                          ": unparseable number");
        }
        table.rows.push_back(std::move(r));
    }
    return table;
}

void write_stamp(const std::string& path, const std::string& subcommand, uint64_t seed,
                 const std::string& config_json) {
    json j = {{"subcommand", subcommand},
              {"seed", seed},
              {"version", kToolVersion},
              {"config", parse_or_throw(config_json, "stamp config")}};
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
    finish(out, path);
}

} // namespace stagerm::io
