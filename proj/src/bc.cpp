#include "stagerm/bc.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "stagerm/errors.hpp"
#include "stagerm/rng.hpp"

namespace stagerm {

std::string to_string(BCMode m) {
    return m == BCMode::uniform ? "uniform" : "ra-bc";
}

std::string to_string(WeightSource s) {
    return s == WeightSource::offline ? "offline" : "online";
}

void BCConfig::validate() const {
    if (feature_dim < 1) throw ValidationError("bc: feature_dim must be >= 1");
    if (action_dim < 1) throw ValidationError("bc: action_dim must be >= 1");
    if (hidden < 1) throw ValidationError("bc: hidden must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("bc: learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw ValidationError("bc: momentum must lie in [0, 1)");
    if (!(grad_clip_norm > 0.0)) throw ValidationError("bc: grad_clip_norm must be > 0");
    if (batch_size < 1) throw ValidationError("bc: batch_size must be >= 1");
    if (epochs < 0) throw ValidationError("bc: epochs must be >= 0");
    weight.validate();
}

PolicyModel::PolicyModel(int feature_dim, int action_dim, int hidden, uint64_t seed)
    : feature_dim_(feature_dim), action_dim_(action_dim), hidden_(hidden) {
    if (feature_dim < 1 || action_dim < 1 || hidden < 1)
        throw ValidationError("policy: dims must be >= 1");
    const size_t in = static_cast<size_t>(feature_dim);
    const size_t h = static_cast<size_t>(hidden);
    const size_t out = static_cast<size_t>(action_dim);

    w1_ = 0;
    b1_ = w1_ + h * in;
    w2_ = b1_ + h;
    b2_ = w2_ + out * h;
    params_.assign(b2_ + out, 0.0);

    Rng rng = derive_stream(seed, "bc-init");
    const double bound1 = 1.0 / std::sqrt(static_cast<double>(in));
    for (size_t i = 0; i < h * in; ++i) params_[w1_ + i] = rng.uniform(-bound1, bound1);
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(h));
    for (size_t i = 0; i < out * h; ++i) params_[w2_ + i] = rng.uniform(-bound2, bound2);
}

std::vector<ParamSlice> PolicyModel::slices() const {
    const size_t in = static_cast<size_t>(feature_dim_);
    const size_t h = static_cast<size_t>(hidden_);
    const size_t out = static_cast<size_t>(action_dim_);
    return {{"policy.w1", w1_, h, in},
            {"policy.b1", b1_, h, 1},
            {"policy.w2", w2_, out, h},
            {"policy.b2", b2_, out, 1}};
}

std::vector<double> PolicyModel::act(const std::vector<double>& features) const {
    if (static_cast<int>(features.size()) != feature_dim_)
        throw ValidationError("policy: feature dim " + std::to_string(features.size()) +
                              ", expected " + std::to_string(feature_dim_));
    const size_t in = static_cast<size_t>(feature_dim_);
    const size_t h = static_cast<size_t>(hidden_);
    const size_t out = static_cast<size_t>(action_dim_);

    std::vector<double> hid(h, 0.0);
    for (size_t r = 0; r < h; ++r) {
        double acc = params_[b1_ + r];
        const double* row = params_.data() + w1_ + r * in;
        for (size_t c = 0; c < in; ++c) acc += row[c] * features[c];
        hid[r] = std::tanh(acc);
    }
    std::vector<double> a(out, 0.0);
    for (size_t r = 0; r < out; ++r) {
        double acc = params_[b2_ + r];
        const double* row = params_.data() + w2_ + r * h;
        for (size_t c = 0; c < h; ++c) acc += row[c] * hid[c];
        a[r] = acc;
    }
    return a;
}

std::vector<BCItem> chunk_items(const std::vector<Trajectory>& demos, int64_t stride) {
    if (stride < 1) throw ValidationError("chunk_items: stride must be >= 1");
    std::vector<BCItem> items;
    for (const Trajectory& traj : demos) {
        for (int64_t t = 0; t + stride <= traj.length() - 1; t += stride)
            items.push_back({&traj, t, stride});
    }
    return items;
}

namespace {

// per-frame squared error and, optionally, its gradient scaled by coeff
double frame_loss_grad(const PolicyModel& policy, const std::vector<double>& params,
                       const Frame& frame, double coeff, std::vector<double>* grad,
                       size_t w1, size_t b1, size_t w2, size_t b2) {
    const size_t in = static_cast<size_t>(policy.feature_dim());
    const size_t h = static_cast<size_t>(policy.hidden());
    const size_t out = static_cast<size_t>(policy.action_dim());
    if (frame.features.size() != in)
        throw ValidationError("bc: frame feature dim mismatch");
    if (frame.action.size() != out)
        throw ValidationError("bc: frame action dim mismatch (trajectory carries no usable "
                              "actions?)");

    std::vector<double> hid(h), pre(out);
    for (size_t r = 0; r < h; ++r) {
        double acc = params[b1 + r];
        const double* row = params.data() + w1 + r * in;
        for (size_t c = 0; c < in; ++c) acc += row[c] * frame.features[c];
        hid[r] = std::tanh(acc);
    }
    double loss = 0.0;
    std::vector<double> dout(out);
    for (size_t r = 0; r < out; ++r) {
        double acc = params[b2 + r];
        const double* row = params.data() + w2 + r * h;
        for (size_t c = 0; c < h; ++c) acc += row[c] * hid[c];
        const double diff = acc - frame.action[r];
        loss += diff * diff;
        dout[r] = 2.0 * diff;
    }
    if (!grad) return loss;

    std::vector<double> dhid(h, 0.0);
    for (size_t r = 0; r < out; ++r) {
        const double g = dout[r] * coeff;
        double* dw2 = grad->data() + w2 + r * h;
        const double* row = params.data() + w2 + r * h;
        for (size_t c = 0; c < h; ++c) {
            dw2[c] += g * hid[c];
            dhid[c] += row[c] * g;
        }
        (*grad)[b2 + r] += g;
    }
    for (size_t r = 0; r < h; ++r) {
        const double g = dhid[r] * (1.0 - hid[r] * hid[r]);
        double* dw1 = grad->data() + w1 + r * in;
        for (size_t c = 0; c < in; ++c) dw1[c] += g * frame.features[c];
        (*grad)[b1 + r] += g;
    }
    return loss;
}

struct Offsets {
    size_t w1, b1, w2, b2;
};

Offsets offsets_of(const PolicyModel& policy) {
    Offsets o{};
    for (const ParamSlice& s : policy.slices()) {
        if (s.name == "policy.w1") o.w1 = s.offset;
        if (s.name == "policy.b1") o.b1 = s.offset;
        if (s.name == "policy.w2") o.w2 = s.offset;
        if (s.name == "policy.b2") o.b2 = s.offset;
    }
    return o;
}

double item_loss(const PolicyModel& policy, const BCItem& item, double coeff,
                 std::vector<double>* grad, const Offsets& o) {
    const Trajectory& traj = *item.trajectory;
    double acc = 0.0;
    const double frame_coeff = coeff / static_cast<double>(item.stride);
    for (int64_t t = item.start; t < item.start + item.stride; ++t)
        acc += frame_loss_grad(policy, policy.params(), traj.frames[static_cast<size_t>(t)],
                               frame_coeff, grad, o.w1, o.b1, o.w2, o.b2);
    return acc / static_cast<double>(item.stride);
}

} // namespace

double bc_batch_gradient(const PolicyModel& policy, const std::vector<BCItem>& items,
                         const std::vector<double>& weights, double eps_div,
                         std::vector<double>& grad) {
    if (items.empty()) throw ValidationError("bc: empty batch");
    if (weights.size() != items.size())
        throw ValidationError("bc: weight count does not match item count");
    grad.assign(policy.params().size(), 0.0);
    const Offsets o = offsets_of(policy);

    double weight_sum = 0.0;
    for (double w : weights) weight_sum += w;
    const double denom = weight_sum + eps_div;

    double loss = 0.0;
    for (size_t i = 0; i < items.size(); ++i) {
        if (weights[i] == 0.0) continue; // zero weight contributes nothing
        loss += weights[i] * item_loss(policy, items[i], weights[i] / denom, &grad, o);
    }
    return loss / denom;
}

double bc_batch_loss(const PolicyModel& policy, const std::vector<BCItem>& items,
                     const std::vector<double>& weights, double eps_div) {
    if (items.empty()) throw ValidationError("bc: empty batch");
    if (weights.size() != items.size())
        throw ValidationError("bc: weight count does not match item count");
    const Offsets o = offsets_of(policy);
    double weight_sum = 0.0;
    for (double w : weights) weight_sum += w;
    const double denom = weight_sum + eps_div;
    double loss = 0.0;
    for (size_t i = 0; i < items.size(); ++i) {
        if (weights[i] == 0.0) continue;
        loss += weights[i] * item_loss(policy, items[i], 0.0, nullptr, o);
    }
    return loss / denom;
}

BCTrainReport train_bc(PolicyModel& policy, const std::vector<Trajectory>& demos,
                       const BCConfig& config, const ProgressPredictor* predictor) {
    config.validate();
    if (policy.feature_dim() != config.feature_dim || policy.action_dim() != config.action_dim ||
        policy.hidden() != config.hidden)
        throw ValidationError("train_bc: policy dims differ from config");
    if (demos.empty()) throw ValidationError("train_bc: no demonstrations");

    const bool weighted = config.mode == BCMode::ra_bc && !config.force_unit_weights;
    if (weighted && predictor == nullptr)
        throw ValidationError("train_bc: reward-aligned mode needs a progress predictor");

    std::vector<BCItem> items = chunk_items(demos, config.weight.chunk_stride);
    if (items.empty())
        throw ValidationError("train_bc: no complete chunks; demos shorter than the stride?");

    BCTrainReport report;

    // offline: one weighting pass over everything, weights frozen for training
    std::map<std::pair<std::string, int64_t>, double> offline;
    if (weighted && config.source == WeightSource::offline) {
        WeightTable table = weight_dataset(*predictor, demos, config.weight);
        if (!table.skipped.empty())
            throw ValidationError("train_bc: predictor failed on trajectory '" +
                                  table.skipped.front().first + "': " +
                                  table.skipped.front().second);
        for (const WeightRow& row : table.rows)
            offline[{row.trajectory_id, row.t}] = row.w;
        report.stats = table.stats;
    }

    Rng shuffle_rng = derive_stream(config.seed, "bc-train/shuffle");
    std::vector<size_t> order(items.size());
    std::iota(order.begin(), order.end(), size_t{0});

    std::vector<double> grad, velocity(policy.params().size(), 0.0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0, wsum = 0.0;
        int64_t visits = 0, zeros = 0, ones = 0;
        size_t batches = 0;

        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            const size_t stop = std::min(order.size(), start + config.batch_size);
            std::vector<BCItem> batch;
            std::vector<double> weights;
            batch.reserve(stop - start);
            for (size_t i = start; i < stop; ++i) {
                const BCItem& item = items[order[i]];
                batch.push_back(item);
                double w = 1.0;
                if (weighted && config.source == WeightSource::offline) {
                    auto it = offline.find({item.trajectory->id, item.start});
                    if (it == offline.end())
                        throw ValidationError("train_bc: no offline weight for chunk " +
                                              std::to_string(item.start) + " of '" +
                                              item.trajectory->id + "'");
                    w = it->second;
                } else if (weighted) {
                    const double r_hat = progress_delta(*predictor, *item.trajectory,
                                                        item.start, item.stride);
                    report.stats.update(r_hat);
                    w = chunk_weight(r_hat, report.stats, config.weight);
                }
                weights.push_back(w);
                wsum += w;
                ++visits;
                if (w == 0.0) ++zeros;
                if (w == 1.0) ++ones;
            }

            const double loss =
                bc_batch_gradient(policy, batch, weights, config.weight.eps_div, grad);

            double norm_sq = 0.0;
            for (double g : grad) norm_sq += g * g;
            if (!std::isfinite(loss) || !std::isfinite(norm_sq))
                throw NumericalError("train_bc: non-finite loss or gradient at epoch " +
                                     std::to_string(epoch) + ", batch " +
                                     std::to_string(batches));
            const double norm = std::sqrt(norm_sq);
            if (norm > config.grad_clip_norm) {
                const double s = config.grad_clip_norm / norm;
                for (double& g : grad) g *= s;
            }

            std::vector<double>& params = policy.params();
            if (config.momentum > 0.0) {
                for (size_t i = 0; i < params.size(); ++i) {
                    velocity[i] = config.momentum * velocity[i] + grad[i];
                    params[i] -= config.learning_rate * velocity[i];
                }
            } else {
                for (size_t i = 0; i < params.size(); ++i)
                    params[i] -= config.learning_rate * grad[i];
            }

            epoch_loss += loss;
            ++batches;
        }

        BCEpoch row;
        row.epoch = epoch + 1;
        row.loss = epoch_loss / static_cast<double>(batches);
        row.weight_mean = wsum / static_cast<double>(visits);
        row.frac_zero = static_cast<double>(zeros) / static_cast<double>(visits);
        row.frac_one = static_cast<double>(ones) / static_cast<double>(visits);
        report.epochs.push_back(row);
    }
    return report;
}

double eval_policy(const PolicyModel& policy, const std::vector<Trajectory>& trajectories) {
    double acc = 0.0;
    int64_t frames = 0;
    for (const Trajectory& traj : trajectories) {
        for (const Frame& frame : traj.frames) {
            if (static_cast<int>(frame.action.size()) != policy.action_dim())
                throw ValidationError("eval_policy: trajectory '" + traj.id +
                                      "' has no usable actions");
            std::vector<double> a = policy.act(frame.features);
            for (size_t r = 0; r < a.size(); ++r) {
                const double d = a[r] - frame.action[r];
                acc += d * d;
            }
            ++frames;
        }
    }
    if (frames == 0) throw ValidationError("eval_policy: no frames");
    return acc / static_cast<double>(frames);
}

} // namespace stagerm
