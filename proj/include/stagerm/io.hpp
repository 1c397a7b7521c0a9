#pragma once

#include <map>
#include <string>
#include <vector>

#include "stagerm/bc.hpp"
#include "stagerm/estimator.hpp"
#include "stagerm/labeling.hpp"
#include "stagerm/rollout_eval.hpp"
#include "stagerm/sampler.hpp"
#include "stagerm/simulator.hpp"
#include "stagerm/trajectory.hpp"
#include "stagerm/weighting.hpp"

// File formats. Documents are JSON (keys sorted, stable layout), bulk records
// are JSONL (one record per line), tabular reports are TSV with a '#' header
// line holding the config snapshot as JSON. Doubles survive a round trip
// bit for bit. All failures surface as IoError (unreadable / unparseable) or
// ValidationError (parseable but inconsistent).

namespace stagerm::io {

void save_trajectories_jsonl(const std::string& path, const std::vector<Trajectory>& trajs);
std::vector<Trajectory> load_trajectories_jsonl(const std::string& path);

struct AnnotationFile {
    AnnotationProtocol protocol;
    std::vector<TrajectoryAnnotation> annotations;
};

void save_annotations(const std::string& path, const AnnotationProtocol& protocol,
                      const std::vector<TrajectoryAnnotation>& annotations);
AnnotationFile load_annotations(const std::string& path);

void save_priors(const std::string& path, const PriorProfile& priors);
PriorProfile load_priors(const std::string& path);

void save_labels_jsonl(const std::string& path, const DatasetLabels& labels);
std::map<std::string, std::vector<ProgressLabel>> load_labels_jsonl(const std::string& path);

// simulator ground truth, one record per trajectory
struct TruthRecord {
    std::string trajectory_id;
    std::string quality;
    std::vector<int> stage;
    std::vector<double> tau;
    std::vector<double> y;
    std::vector<uint8_t> corrupted;
};

void save_truth_jsonl(const std::string& path, const std::vector<SimTrajectory>& items);
std::vector<TruthRecord> load_truth_jsonl(const std::string& path);

void save_traces_jsonl(const std::string& path, const std::vector<RolloutTrace>& traces);
std::vector<RolloutTrace> load_traces_jsonl(const std::string& path);

void save_samples_jsonl(const std::string& path, const std::vector<SequenceSample>& samples);
std::vector<SequenceSample> load_samples_jsonl(const std::string& path);

void save_eval_report(const std::string& path, const EvalReport& report);

// Versioned checkpoints. The loader rebuilds the model deterministically and
// then overwrites the flat parameter vector, so save/load round-trips are
// exact. Unknown format versions are rejected, not guessed at.
void save_estimator(const std::string& path, const EstimatorModel& model);
EstimatorModel load_estimator(const std::string& path);

void save_policy(const std::string& path, const PolicyModel& policy, const BCConfig& config);
struct PolicyFile {
    PolicyModel policy;
    BCConfig config;
};
PolicyFile load_policy(const std::string& path);

void save_train_report_tsv(const std::string& path, const TrainReport& report,
                           const EstimatorConfig& config);
void save_bc_report_tsv(const std::string& path, const BCTrainReport& report,
                        const BCConfig& config);
void save_weight_table_tsv(const std::string& path, const WeightTable& table);
WeightTable load_weight_table_tsv(const std::string& path);

// Run record written next to every artifact: which subcommand made it, from
// which seed and config. Deliberately no timestamps, so identical runs
// produce identical bytes.
void write_stamp(const std::string& path, const std::string& subcommand, uint64_t seed,
                 const std::string& config_json);

} // namespace stagerm::io
