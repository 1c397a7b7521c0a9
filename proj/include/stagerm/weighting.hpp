#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stagerm/predictor.hpp"
#include "stagerm/trajectory.hpp"

namespace stagerm {

// Streaming mean/variance (Welford). Mergeable, so parallel workers can keep
// private accumulators and combine them afterwards.
class RunningStats {
public:
    void update(double x);

    static RunningStats merge(const RunningStats& a, const RunningStats& b);
    static RunningStats from_moments(int64_t count, double mean, double m2);

    int64_t count() const { return n_; }
    double mean() const { return n_ > 0 ? mean_ : 0.0; }
    double m2() const { return m2_; }
    // sample variance (n-1 denominator); defined as 0 for n <= 1
    double variance() const;
    double stddev() const;

private:
    int64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

struct WeightConfig {
    double kappa = 0.01;      // progress threshold for the certainty override
    double eps_div = 1e-6;    // guard for the weighted-loss denominator
    double eps_var = 1e-6;    // guard for the ramp denominator
    int64_t chunk_stride = 25; // frames per action chunk (the lookahead delta)

    void validate() const;
};

// Linear ramp over [mu - 2*sigma, mu + 2*sigma] with mu clamped to >= 0 first:
//   w = clip((r_hat - (mu - 2*sigma)) / (4*sigma + eps_var), 0, 1)
double soft_weight(double r_hat, double mean, double stddev, double eps_var);

// Certainty override on top of the ramp: progress beyond kappa is certainly
// useful (w = 1) and any regression is certainly not (w = 0).
//   w = 1[r_hat > kappa] + 1[0 <= r_hat <= kappa] * soft_w
double apply_prior(double r_hat, double soft_w, double kappa);

// ramp + override in one step, using the stats accumulated so far
double chunk_weight(double r_hat, const RunningStats& stats, const WeightConfig& config);

// sum(w_i * l_i) / (sum(w_i) + eps_div)
double weighted_loss(std::span<const double> losses, std::span<const double> weights,
                     double eps_div);

// r_hat = phi(o_{t+stride}) - phi(o_t); both frames must exist.
double progress_delta(const ProgressPredictor& predictor, const Trajectory& trajectory,
                      int64_t t, int64_t stride);

struct WeightRow {
    std::string trajectory_id;
    int64_t t = 0; // chunk start frame
    double r_hat = 0.0;
    double w = 0.0;
};

struct WeightTable {
    std::vector<WeightRow> rows;
    RunningStats stats;       // over every r_hat in the table
    WeightConfig config;
    std::string predictor_id;
    std::vector<std::pair<std::string, std::string>> skipped; // trajectory id -> reason
};

// Offline weighting pass. Chunks start at t = 0, stride, 2*stride, ... and the
// last chunk needing a frame past the end is dropped. Deltas are accumulated
// in a deterministic order (trajectory id, then t) and every weight is
// computed from the final statistics, so the table is self-consistent and
// reproducible. A predictor failure skips that trajectory's chunks and is
// recorded, not fatal.
WeightTable weight_dataset(const ProgressPredictor& predictor,
                           const std::vector<Trajectory>& trajectories,
                           const WeightConfig& config);

} // namespace stagerm
