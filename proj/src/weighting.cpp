#include "stagerm/weighting.hpp"

#include <algorithm>
#include <cmath>

#include "stagerm/errors.hpp"

namespace stagerm {

void RunningStats::update(double x) {
    n_ += 1;
    double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
}

RunningStats RunningStats::merge(const RunningStats& a, const RunningStats& b) {
    if (a.n_ == 0) return b;
    if (b.n_ == 0) return a;
    RunningStats out;
    out.n_ = a.n_ + b.n_;
    double delta = b.mean_ - a.mean_;
    double nb_over_n = static_cast<double>(b.n_) / static_cast<double>(out.n_);
    out.mean_ = a.mean_ + delta * nb_over_n;
    out.m2_ = a.m2_ + b.m2_ + delta * delta * static_cast<double>(a.n_) * nb_over_n;
    return out;
}

RunningStats RunningStats::from_moments(int64_t count, double mean, double m2) {
    if (count < 0) throw ValidationError("running stats: negative count");
    if (m2 < 0.0) throw ValidationError("running stats: negative m2");
    RunningStats out;
    out.n_ = count;
    out.mean_ = mean;
    out.m2_ = m2;
    return out;
}

double RunningStats::variance() const {
    if (n_ <= 1) return 0.0;
    return m2_ / static_cast<double>(n_ - 1);
}

double RunningStats::stddev() const { return std::sqrt(variance()); }

void WeightConfig::validate() const {
    if (!(kappa >= 0.0)) throw ValidationError("weighting: kappa must be >= 0");
    if (!(eps_div > 0.0)) throw ValidationError("weighting: eps_div must be > 0");
    if (!(eps_var > 0.0)) throw ValidationError("weighting: eps_var must be > 0");
    if (chunk_stride < 1) throw ValidationError("weighting: chunk_stride must be >= 1");
}

double soft_weight(double r_hat, double mean, double stddev, double eps_var) {
    if (!(eps_var > 0.0)) throw ValidationError("soft_weight: eps_var must be > 0");
    if (!(stddev >= 0.0)) throw ValidationError("soft_weight: negative stddev");
    double mu = std::max(mean, 0.0); // clamp before the window is formed
    double w = (r_hat - (mu - 2.0 * stddev)) / (4.0 * stddev + eps_var);
    return std::clamp(w, 0.0, 1.0);
}

double apply_prior(double r_hat, double soft_w, double kappa) {
    if (r_hat > kappa) return 1.0;
    if (r_hat < 0.0) return 0.0;
    return soft_w;
}

double chunk_weight(double r_hat, const RunningStats& stats, const WeightConfig& config) {
    config.validate();
    double soft = soft_weight(r_hat, stats.mean(), stats.stddev(), config.eps_var);
    return apply_prior(r_hat, soft, config.kappa);
}

double weighted_loss(std::span<const double> losses, std::span<const double> weights,
                     double eps_div) {
    if (losses.size() != weights.size())
        throw ValidationError("weighted_loss: " + std::to_string(losses.size()) + " losses vs " +
                              std::to_string(weights.size()) + " weights");
    if (!(eps_div > 0.0)) throw ValidationError("weighted_loss: eps_div must be > 0");
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < losses.size(); ++i) {
        num += weights[i] * losses[i];
        den += weights[i];
    }
    return num / (den + eps_div);
}

double progress_delta(const ProgressPredictor& predictor, const Trajectory& trajectory,
                      int64_t t, int64_t stride) {
    if (stride < 1) throw ValidationError("progress_delta: stride must be >= 1");
    if (t < 0 || t + stride > trajectory.length() - 1)
        throw ValidationError("progress_delta: window [" + std::to_string(t) + ", " +
                              std::to_string(t + stride) + "] outside trajectory '" +
                              trajectory.id + "' of length " +
                              std::to_string(trajectory.length()));
    double a = predictor.predict_at(trajectory, t);
    double b = predictor.predict_at(trajectory, t + stride);
    if (!std::isfinite(a) || !std::isfinite(b))
        throw NumericalError("progress_delta: predictor produced a non-finite value");
    return std::clamp(b, 0.0, 1.0) - std::clamp(a, 0.0, 1.0);
}

WeightTable weight_dataset(const ProgressPredictor& predictor,
                           const std::vector<Trajectory>& trajectories,
                           const WeightConfig& config) {
    config.validate();

    std::vector<const Trajectory*> sorted;
    sorted.reserve(trajectories.size());
    for (const Trajectory& t : trajectories) sorted.push_back(&t);
    std::sort(sorted.begin(), sorted.end(),
              [](const Trajectory* a, const Trajectory* b) { return a->id < b->id; });
    for (size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i]->id == sorted[i - 1]->id)
            throw ValidationError("weight_dataset: duplicate trajectory id '" + sorted[i]->id + "'");

    WeightTable table;
    table.config = config;
    table.predictor_id = predictor.id();

    // first pass: deltas and stats
    for (const Trajectory* traj : sorted) {
        std::vector<double> p;
        try {
            p = predict_progress(predictor, *traj);
        } catch (const Error& e) {
            table.skipped.emplace_back(traj->id, e.what());
            continue;
        }
        for (int64_t t = 0; t + config.chunk_stride <= traj->length() - 1;
             t += config.chunk_stride) {
            WeightRow row;
            row.trajectory_id = traj->id;
            row.t = t;
            row.r_hat = p[static_cast<size_t>(t + config.chunk_stride)] - p[static_cast<size_t>(t)];
            table.stats.update(row.r_hat);
            table.rows.push_back(std::move(row));
        }
    }

    // second pass: weights from the final statistics
    for (WeightRow& row : table.rows)
        row.w = chunk_weight(row.r_hat, table.stats, config);

    return table;
}

} // namespace stagerm
