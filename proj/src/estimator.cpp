#include "stagerm/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stagerm/errors.hpp"

namespace stagerm {

void EstimatorConfig::validate() const {
    if (stage_count < 1) throw ValidationError("estimator: stage_count must be >= 1");
    if (feature_dim < 1) throw ValidationError("estimator: feature_dim must be >= 1");
    if (joint_dim < 0) throw ValidationError("estimator: joint_dim must be >= 0");
    if (d_model < 1) throw ValidationError("estimator: d_model must be >= 1");
    if (head_hidden < 1) throw ValidationError("estimator: head_hidden must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("estimator: learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw ValidationError("estimator: momentum must lie in [0, 1)");
    if (!(grad_clip_norm > 0.0)) throw ValidationError("estimator: grad_clip_norm must be > 0");
    if (!(mse_weight >= 0.0)) throw ValidationError("estimator: mse_weight must be >= 0");
    if (batch_size < 1) throw ValidationError("estimator: batch_size must be >= 1");
    if (epochs < 0) throw ValidationError("estimator: epochs must be >= 0");
    if (scheme_id.empty()) throw ValidationError("estimator: empty scheme id");
    if (window_length < 2) throw ValidationError("estimator: window_length must be >= 2");
    if (window_gap < 1) throw ValidationError("estimator: window_gap must be >= 1");
}

ObservationWindow window_from_sample(const SequenceSample& sample) {
    ObservationWindow w;
    w.features = sample.features;
    w.joints = sample.joint_states;
    return w;
}

namespace {

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// y += W x (+ b), row-major W
inline void affine(const double* w, const double* b, const double* x, double* y,
                   size_t rows, size_t cols) {
    for (size_t r = 0; r < rows; ++r) {
        double acc = b ? b[r] : 0.0;
        const double* row = w + r * cols;
        for (size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
}

// gradient pieces of y = W x + b given upstream dy
inline void affine_backward(const double* w, const double* x, const double* dy,
                            double* dw, double* db, double* dx, size_t rows, size_t cols) {
    for (size_t r = 0; r < rows; ++r) {
        const double g = dy[r];
        double* dwrow = dw + r * cols;
        const double* wrow = w + r * cols;
        for (size_t c = 0; c < cols; ++c) dwrow[c] += g * x[c];
        if (db) db[r] += g;
        if (dx)
            for (size_t c = 0; c < cols; ++c) dx[c] += wrow[c] * g;
    }
}

} // namespace

// ---- model plumbing --------------------------------------------------------

EstimatorModel::MatRef EstimatorModel::allocate(size_t rows, size_t cols) {
    MatRef m{params_.size(), rows, cols};
    params_.resize(params_.size() + rows * cols, 0.0);
    return m;
}

void EstimatorModel::init_uniform(const MatRef& m, double bound, Rng& rng) {
    for (size_t i = 0; i < m.rows * m.cols; ++i)
        params_[m.offset + i] = rng.uniform(-bound, bound);
}

EstimatorModel::EstimatorModel(const EstimatorConfig& config, const PriorProfile& priors)
    : config_(config) {
    config_.validate();
    const size_t in = static_cast<size_t>(config_.input_dim());
    const size_t d = static_cast<size_t>(config_.d_model);

    trunk_.proj_w = allocate(d, in);
    trunk_.proj_b = allocate(d, 1);
    trunk_.pos0_b = allocate(d, 1);
    Rng rng = derive_stream(config_.seed, "estimator-init/trunk");
    init_uniform(trunk_.proj_w, 1.0 / std::sqrt(static_cast<double>(in)), rng);

    add_scheme(config_.scheme_id, priors);
}

void EstimatorModel::add_scheme(const std::string& scheme_id, const PriorProfile& priors) {
    priors.validate();
    if (scheme_id.empty()) throw ValidationError("estimator: empty scheme id");
    if (schemes_.count(scheme_id))
        throw ValidationError("estimator already has a head for scheme '" + scheme_id + "'");
    if (priors.scheme_id != scheme_id)
        throw ValidationError("estimator: priors for '" + priors.scheme_id +
                              "' attached to scheme '" + scheme_id + "'");
    if (priors.stage_count() != config_.stage_count)
        throw ValidationError("estimator: priors have " + std::to_string(priors.stage_count()) +
                              " stages, model expects " + std::to_string(config_.stage_count));

    const size_t d = static_cast<size_t>(config_.d_model);
    const size_t h = static_cast<size_t>(config_.head_hidden);
    const size_t k = static_cast<size_t>(config_.stage_count);
    const size_t u_dim = 3 * d;
    const size_t v_dim = u_dim + k;

    SchemeHead head;
    head.priors = priors;
    head.stage_w1 = allocate(h, u_dim);
    head.stage_b1 = allocate(h, 1);
    head.stage_w2 = allocate(k, h);
    head.stage_b2 = allocate(k, 1);
    head.sub_w1 = allocate(h, v_dim);
    head.sub_b1 = allocate(h, 1);
    head.sub_w2 = allocate(1, h);
    head.sub_b2 = allocate(1, 1);

    Rng rng = derive_stream(config_.seed, "estimator-init/scheme/" + scheme_id);
    init_uniform(head.stage_w1, 1.0 / std::sqrt(static_cast<double>(u_dim)), rng);
    init_uniform(head.stage_w2, 1.0 / std::sqrt(static_cast<double>(h)), rng);
    init_uniform(head.sub_w1, 1.0 / std::sqrt(static_cast<double>(v_dim)), rng);
    init_uniform(head.sub_w2, 1.0 / std::sqrt(static_cast<double>(h)), rng);

    schemes_.emplace(scheme_id, std::move(head));
    scheme_order_.push_back(scheme_id);
}

bool EstimatorModel::has_scheme(const std::string& scheme_id) const {
    return schemes_.count(scheme_id) > 0;
}

const PriorProfile& EstimatorModel::priors(const std::string& scheme_id) const {
    return head(scheme_id).priors;
}

const EstimatorModel::SchemeHead& EstimatorModel::head(const std::string& scheme_id) const {
    auto it = schemes_.find(scheme_id);
    if (it == schemes_.end())
        throw ValidationError("estimator has no head for scheme '" + scheme_id + "'");
    return it->second;
}

std::vector<ParamSlice> EstimatorModel::slices() const {
    std::vector<ParamSlice> out;
    auto push = [&out](const std::string& name, const MatRef& m) {
        out.push_back({name, m.offset, m.rows, m.cols});
    };
    push("trunk.proj_w", trunk_.proj_w);
    push("trunk.proj_b", trunk_.proj_b);
    push("trunk.pos0_b", trunk_.pos0_b);
    for (const std::string& s : scheme_order_) {
        const SchemeHead& hd = schemes_.at(s);
        push("scheme." + s + ".stage_w1", hd.stage_w1);
        push("scheme." + s + ".stage_b1", hd.stage_b1);
        push("scheme." + s + ".stage_w2", hd.stage_w2);
        push("scheme." + s + ".stage_b2", hd.stage_b2);
        push("scheme." + s + ".sub_w1", hd.sub_w1);
        push("scheme." + s + ".sub_b1", hd.sub_b1);
        push("scheme." + s + ".sub_w2", hd.sub_w2);
        push("scheme." + s + ".sub_b2", hd.sub_b2);
    }
    return out;
}

// ---- forward ----------------------------------------------------------------

struct EstimatorModel::Cache {
    size_t n = 0;
    std::vector<std::vector<double>> x;  // N x in
    std::vector<std::vector<double>> p;  // N x d, projection (pos 0 biased)
    std::vector<double> c;               // d, mean context
    std::vector<std::vector<double>> u;  // N x 3d
    std::vector<std::vector<double>> h;  // N x H, stage hidden (post-tanh)
    std::vector<std::vector<double>> z;  // N x K, logits
    std::vector<std::vector<double>> pi; // N x K, softmax
    std::vector<std::vector<double>> v;  // N x (3d+K)
    std::vector<std::vector<double>> g;  // N x H, subtask hidden (post-tanh)
    std::vector<double> s;               // N, subtask scalar pre-squash
    std::vector<double> tau;             // N
};

void EstimatorModel::forward_cached(const ObservationWindow& window, const SchemeHead& head,
                                    Cache& cache) const {
    const size_t n = window.features.size();
    if (n == 0) throw ValidationError("estimator forward: empty window");
    const size_t fdim = static_cast<size_t>(config_.feature_dim);
    const size_t jdim = static_cast<size_t>(config_.joint_dim);
    const size_t in = fdim + jdim;
    const size_t d = static_cast<size_t>(config_.d_model);
    const size_t hidden = static_cast<size_t>(config_.head_hidden);
    const size_t k = static_cast<size_t>(config_.stage_count);

    if (jdim > 0 && window.joints.size() != n)
        throw ValidationError("estimator forward: model expects joint states but the window "
                              "carries none");

    cache.n = n;
    cache.x.assign(n, std::vector<double>(in, 0.0));
    for (size_t t = 0; t < n; ++t) {
        if (window.features[t].size() != fdim)
            throw ValidationError("estimator forward: feature dim " +
                                  std::to_string(window.features[t].size()) + " at position " +
                                  std::to_string(t) + ", model expects " + std::to_string(fdim));
        std::copy(window.features[t].begin(), window.features[t].end(), cache.x[t].begin());
        if (jdim > 0) {
            if (window.joints[t].size() != jdim)
                throw ValidationError("estimator forward: joint dim mismatch at position " +
                                      std::to_string(t));
            std::copy(window.joints[t].begin(), window.joints[t].end(),
                      cache.x[t].begin() + static_cast<ptrdiff_t>(fdim));
        }
    }

    cache.p.assign(n, std::vector<double>(d, 0.0));
    for (size_t t = 0; t < n; ++t) {
        affine(data(trunk_.proj_w), data(trunk_.proj_b), cache.x[t].data(), cache.p[t].data(),
               d, in);
        if (t == 0) {
            const double* b0 = data(trunk_.pos0_b);
            for (size_t r = 0; r < d; ++r) cache.p[t][r] += b0[r];
        }
    }

    cache.c.assign(d, 0.0);
    for (size_t t = 0; t < n; ++t)
        for (size_t r = 0; r < d; ++r) cache.c[r] += cache.p[t][r];
    for (size_t r = 0; r < d; ++r) cache.c[r] /= static_cast<double>(n);

    cache.u.assign(n, std::vector<double>(3 * d, 0.0));
    for (size_t t = 0; t < n; ++t) {
        std::copy(cache.p[t].begin(), cache.p[t].end(), cache.u[t].begin());
        std::copy(cache.c.begin(), cache.c.end(), cache.u[t].begin() + static_cast<ptrdiff_t>(d));
        std::copy(cache.p[0].begin(), cache.p[0].end(),
                  cache.u[t].begin() + static_cast<ptrdiff_t>(2 * d));
    }

    cache.h.assign(n, std::vector<double>(hidden, 0.0));
    cache.z.assign(n, std::vector<double>(k, 0.0));
    cache.pi.assign(n, std::vector<double>(k, 0.0));
    cache.v.assign(n, std::vector<double>(3 * d + k, 0.0));
    cache.g.assign(n, std::vector<double>(hidden, 0.0));
    cache.s.assign(n, 0.0);
    cache.tau.assign(n, 0.0);

    for (size_t t = 0; t < n; ++t) {
        affine(data(head.stage_w1), data(head.stage_b1), cache.u[t].data(), cache.h[t].data(),
               hidden, 3 * d);
        for (double& a : cache.h[t]) a = std::tanh(a);
        affine(data(head.stage_w2), data(head.stage_b2), cache.h[t].data(), cache.z[t].data(),
               k, hidden);

        double zmax = *std::max_element(cache.z[t].begin(), cache.z[t].end());
        double zsum = 0.0;
        for (size_t i = 0; i < k; ++i) {
            cache.pi[t][i] = std::exp(cache.z[t][i] - zmax);
            zsum += cache.pi[t][i];
        }
        for (size_t i = 0; i < k; ++i) cache.pi[t][i] /= zsum;

        std::copy(cache.u[t].begin(), cache.u[t].end(), cache.v[t].begin());
        std::copy(cache.pi[t].begin(), cache.pi[t].end(),
                  cache.v[t].begin() + static_cast<ptrdiff_t>(3 * d));
        affine(data(head.sub_w1), data(head.sub_b1), cache.v[t].data(), cache.g[t].data(),
               hidden, 3 * d + k);
        for (double& a : cache.g[t]) a = std::tanh(a);
        affine(data(head.sub_w2), data(head.sub_b2), cache.g[t].data(), &cache.s[t], 1, hidden);
        cache.tau[t] = sigmoid(cache.s[t]);
    }
}

ForwardResult EstimatorModel::forward(const ObservationWindow& window,
                                      const std::string& scheme_id) const {
    const SchemeHead& hd = head(scheme_id);
    Cache cache;
    forward_cached(window, hd, cache);

    ForwardResult out;
    out.stage_logits = cache.z;
    out.stage_probs = cache.pi;
    out.tau_hat = cache.tau;
    out.stage_pred.resize(cache.n);
    out.y_hat.resize(cache.n);
    for (size_t t = 0; t < cache.n; ++t) {
        // ties break toward the lower stage index, deterministically
        size_t arg = 0;
        for (size_t i = 1; i < cache.z[t].size(); ++i)
            if (cache.z[t][i] > cache.z[t][arg]) arg = i;
        out.stage_pred[t] = static_cast<int>(arg) + 1;
        out.y_hat[t] = compose_progress(hd.priors, out.stage_pred[t], cache.tau[t]);
    }
    return out;
}

// ---- loss and gradient -------------------------------------------------------

EstimatorModel::LossBreakdown EstimatorModel::loss(const ForwardResult& outputs,
                                                   const SequenceSample& targets) const {
    const size_t n = outputs.stage_logits.size();
    if (targets.stage_targets.size() != n || targets.tau_targets.size() != n)
        throw ValidationError("estimator loss: target length mismatch");
    LossBreakdown b;
    for (size_t t = 0; t < n; ++t) {
        int k_star = targets.stage_targets[t];
        if (k_star < 1 || k_star > config_.stage_count)
            throw ValidationError("estimator loss: stage target out of range");
        const std::vector<double>& z = outputs.stage_logits[t];
        double zmax = *std::max_element(z.begin(), z.end());
        double lse = 0.0;
        for (double zi : z) lse += std::exp(zi - zmax);
        lse = zmax + std::log(lse);
        b.stage_ce += lse - z[static_cast<size_t>(k_star - 1)];
        double d = outputs.tau_hat[t] - targets.tau_targets[t];
        b.subtask_mse += d * d;
    }
    b.stage_ce /= static_cast<double>(n);
    b.subtask_mse /= static_cast<double>(n);
    b.total = b.stage_ce + config_.mse_weight * b.subtask_mse;
    return b;
}

EstimatorModel::LossBreakdown EstimatorModel::batch_gradient(
    const std::vector<const SequenceSample*>& batch, const std::string& scheme_id,
    std::vector<double>& grad) const {
    if (batch.empty()) throw ValidationError("estimator: empty batch");
    const SchemeHead& hd = head(scheme_id);
    const size_t d = static_cast<size_t>(config_.d_model);
    const size_t hidden = static_cast<size_t>(config_.head_hidden);
    const size_t k = static_cast<size_t>(config_.stage_count);
    const size_t in = static_cast<size_t>(config_.input_dim());
    const double lambda = config_.mse_weight;

    grad.assign(params_.size(), 0.0);
    double* g_proj_w = grad.data() + trunk_.proj_w.offset;
    double* g_proj_b = grad.data() + trunk_.proj_b.offset;
    double* g_pos0_b = grad.data() + trunk_.pos0_b.offset;
    double* g_sw1 = grad.data() + hd.stage_w1.offset;
    double* g_sb1 = grad.data() + hd.stage_b1.offset;
    double* g_sw2 = grad.data() + hd.stage_w2.offset;
    double* g_sb2 = grad.data() + hd.stage_b2.offset;
    double* g_pw1 = grad.data() + hd.sub_w1.offset;
    double* g_pb1 = grad.data() + hd.sub_b1.offset;
    double* g_pw2 = grad.data() + hd.sub_w2.offset;
    double* g_pb2 = grad.data() + hd.sub_b2.offset;

    LossBreakdown total;
    Cache cache;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

    for (const SequenceSample* sample : batch) {
        ObservationWindow window = window_from_sample(*sample);
        forward_cached(window, hd, cache);
        const size_t n = cache.n;
        if (sample->stage_targets.size() != n || sample->tau_targets.size() != n)
            throw ValidationError("estimator: target length mismatch in batch");
        const double inv_n = 1.0 / static_cast<double>(n);

        std::vector<std::vector<double>> dp(n, std::vector<double>(d, 0.0));
        std::vector<double> dc(d, 0.0);
        std::vector<double> dp0_extra(d, 0.0);

        std::vector<double> dz(k), dpi(k), dh(hidden), da(hidden), dg(hidden), dq(hidden);
        std::vector<double> du(3 * d), dv(3 * d + k);

        for (size_t t = 0; t < n; ++t) {
            const int k_star = sample->stage_targets[t];
            if (k_star < 1 || k_star > static_cast<int>(k))
                throw ValidationError("estimator: stage target out of range");

            // loss bookkeeping
            {
                const std::vector<double>& z = cache.z[t];
                double zmax = *std::max_element(z.begin(), z.end());
                double lse = 0.0;
                for (double zi : z) lse += std::exp(zi - zmax);
                total.stage_ce += (zmax + std::log(lse) - z[static_cast<size_t>(k_star - 1)]) *
                                  inv_n * inv_batch;
                double dtau = cache.tau[t] - sample->tau_targets[t];
                total.subtask_mse += dtau * dtau * inv_n * inv_batch;
            }

            // subtask head first: its input contains pi, so the stage logits
            // collect gradient from both heads before their own backward pass
            const double scale = inv_n * inv_batch;
            double ds = lambda * 2.0 * (cache.tau[t] - sample->tau_targets[t]) * cache.tau[t] *
                        (1.0 - cache.tau[t]) * scale;

            std::fill(dg.begin(), dg.end(), 0.0);
            const double* pw2 = data(hd.sub_w2);
            for (size_t i = 0; i < hidden; ++i) {
                g_pw2[i] += ds * cache.g[t][i];
                dg[i] = pw2[i] * ds;
            }
            g_pb2[0] += ds;
            for (size_t i = 0; i < hidden; ++i)
                dq[i] = dg[i] * (1.0 - cache.g[t][i] * cache.g[t][i]);

            std::fill(dv.begin(), dv.end(), 0.0);
            affine_backward(data(hd.sub_w1), cache.v[t].data(), dq.data(), g_pw1, g_pb1,
                            dv.data(), hidden, 3 * d + k);

            std::fill(du.begin(), du.end(), 0.0);
            std::copy(dv.begin(), dv.begin() + static_cast<ptrdiff_t>(3 * d), du.begin());
            std::copy(dv.begin() + static_cast<ptrdiff_t>(3 * d), dv.end(), dpi.begin());

            // cross-entropy plus the softmax-jacobian path from the subtask head
            double dot = 0.0;
            for (size_t i = 0; i < k; ++i) dot += dpi[i] * cache.pi[t][i];
            for (size_t i = 0; i < k; ++i) {
                double ce_part = (cache.pi[t][i] - (static_cast<int>(i) == k_star - 1 ? 1.0 : 0.0)) *
                                 scale;
                dz[i] = ce_part + cache.pi[t][i] * (dpi[i] - dot);
            }

            std::fill(dh.begin(), dh.end(), 0.0);
            affine_backward(data(hd.stage_w2), cache.h[t].data(), dz.data(), g_sw2, g_sb2,
                            dh.data(), k, hidden);
            for (size_t i = 0; i < hidden; ++i)
                da[i] = dh[i] * (1.0 - cache.h[t][i] * cache.h[t][i]);
            affine_backward(data(hd.stage_w1), cache.u[t].data(), da.data(), g_sw1, g_sb1,
                            du.data(), hidden, 3 * d);

            for (size_t r = 0; r < d; ++r) {
                dp[t][r] += du[r];
                dc[r] += du[d + r];
                dp0_extra[r] += du[2 * d + r];
            }
        }

        for (size_t r = 0; r < d; ++r) dp[0][r] += dp0_extra[r];
        const double inv_len = 1.0 / static_cast<double>(n);
        for (size_t t = 0; t < n; ++t)
            for (size_t r = 0; r < d; ++r) dp[t][r] += dc[r] * inv_len;

        for (size_t t = 0; t < n; ++t)
            affine_backward(data(trunk_.proj_w), cache.x[t].data(), dp[t].data(), g_proj_w,
                            g_proj_b, nullptr, d, in);
        for (size_t r = 0; r < d; ++r) g_pos0_b[r] += dp[0][r];
    }

    total.total = total.stage_ce + lambda * total.subtask_mse;
    return total;
}

double EstimatorModel::batch_loss(const std::vector<const SequenceSample*>& batch,
                                  const std::string& scheme_id) const {
    if (batch.empty()) throw ValidationError("estimator: empty batch");
    double acc = 0.0;
    for (const SequenceSample* sample : batch) {
        ForwardResult out = forward(window_from_sample(*sample), scheme_id);
        acc += loss(out, *sample).total;
    }
    return acc / static_cast<double>(batch.size());
}

// ---- training -----------------------------------------------------------------

double one_step_mse(const EstimatorModel& model, const std::string& scheme_id,
                    const std::vector<SequenceSample>& samples) {
    if (samples.empty()) throw ValidationError("one_step_mse: no samples");
    double sum = 0.0;
    int64_t count = 0;
    for (const SequenceSample& s : samples) {
        ForwardResult out = model.forward(window_from_sample(s), scheme_id);
        for (size_t t = 0; t < out.y_hat.size(); ++t) {
            double d = out.y_hat[t] - s.progress_targets[t];
            sum += d * d;
            ++count;
        }
    }
    return sum / static_cast<double>(count);
}

TrainReport train(EstimatorModel& model, const std::vector<SequenceSample>& train_samples,
                  const std::vector<SequenceSample>& val_samples,
                  const EstimatorConfig& config) {
    config.validate();
    const EstimatorConfig& mc = model.config();
    if (config.stage_count != mc.stage_count || config.feature_dim != mc.feature_dim ||
        config.joint_dim != mc.joint_dim || config.d_model != mc.d_model ||
        config.head_hidden != mc.head_hidden)
        throw ValidationError("train: architecture fields differ from the model's");
    if (train_samples.empty()) throw ValidationError("train: no training samples");
    if (!model.has_scheme(config.scheme_id))
        throw ValidationError("train: model has no head for scheme '" + config.scheme_id + "'");

    Rng shuffle_rng = derive_stream(config.seed, "estimator-train/shuffle");
    std::vector<size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), size_t{0});

    std::vector<double> grad, velocity(model.params().size(), 0.0);
    TrainReport report;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_ce = 0.0, epoch_mse = 0.0;
        size_t batches = 0;

        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            const size_t stop = std::min(order.size(), start + config.batch_size);
            std::vector<const SequenceSample*> batch;
            batch.reserve(stop - start);
            for (size_t i = start; i < stop; ++i) batch.push_back(&train_samples[order[i]]);

            EstimatorModel::LossBreakdown lb =
                model.batch_gradient(batch, config.scheme_id, grad);

            double norm_sq = 0.0;
            for (double g : grad) norm_sq += g * g;
            if (!std::isfinite(lb.total) || !std::isfinite(norm_sq)) {
                double pnorm = 0.0;
                for (double p : model.params()) pnorm += p * p;
                throw NumericalError(
                    "train: non-finite loss or gradient at epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(batches) + " (loss " + std::to_string(lb.total) +
                    ", |params| " + std::to_string(std::sqrt(pnorm)) + "); aborting");
            }
            double norm = std::sqrt(norm_sq);
            if (norm > config.grad_clip_norm) {
                double s = config.grad_clip_norm / norm;
                for (double& g : grad) g *= s;
            }

            std::vector<double>& params = model.params();
            if (config.momentum > 0.0) {
                for (size_t i = 0; i < params.size(); ++i) {
                    velocity[i] = config.momentum * velocity[i] + grad[i];
                    params[i] -= config.learning_rate * velocity[i];
                }
            } else {
                for (size_t i = 0; i < params.size(); ++i)
                    params[i] -= config.learning_rate * grad[i];
            }

            epoch_ce += lb.stage_ce;
            epoch_mse += lb.subtask_mse;
            ++batches;
        }

        TrainEpoch row;
        row.epoch = epoch + 1;
        row.stage_ce = epoch_ce / static_cast<double>(batches);
        row.subtask_mse = epoch_mse / static_cast<double>(batches);
        row.val_mse = val_samples.empty()
                          ? std::numeric_limits<double>::quiet_NaN()
                          : one_step_mse(model, config.scheme_id, val_samples);
        report.epochs.push_back(row);
    }
    return report;
}

GradientCheckReport gradient_check(EstimatorModel& model, const std::string& scheme_id,
                                   const std::vector<SequenceSample>& batch, double h,
                                   size_t n_checks, uint64_t seed) {
    if (!(h > 0.0)) throw ValidationError("gradient_check: h must be > 0");
    std::vector<const SequenceSample*> refs;
    refs.reserve(batch.size());
    for (const SequenceSample& s : batch) refs.push_back(&s);

    std::vector<double> grad;
    model.batch_gradient(refs, scheme_id, grad);

    std::vector<size_t> indices(model.params().size());
    std::iota(indices.begin(), indices.end(), size_t{0});
    if (n_checks < indices.size()) {
        Rng rng = derive_stream(seed, "gradient-check");
        rng.shuffle(indices);
        indices.resize(n_checks);
    }

    GradientCheckReport report;
    std::vector<double>& params = model.params();
    for (size_t idx : indices) {
        const double saved = params[idx];
        params[idx] = saved + h;
        double up = model.batch_loss(refs, scheme_id);
        params[idx] = saved - h;
        double down = model.batch_loss(refs, scheme_id);
        params[idx] = saved;

        double numeric = (up - down) / (2.0 * h);
        double denom = std::max({std::abs(grad[idx]), std::abs(numeric), 1e-6});
        double rel = std::abs(grad[idx] - numeric) / denom;
        ++report.checked;
        if (rel >= report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst = {idx, grad[idx], numeric, rel};
        }
    }
    return report;
}

// ---- trajectory predictor -------------------------------------------------------

EstimatorPredictor::EstimatorPredictor(const EstimatorModel& model, std::string scheme_id)
    : model_(model), scheme_(std::move(scheme_id)) {
    if (!model_.has_scheme(scheme_))
        throw ValidationError("estimator predictor: no head for scheme '" + scheme_ + "'");
}

ObservationWindow EstimatorPredictor::window_ending_at(const Trajectory& trajectory,
                                                       int64_t t) const {
    const EstimatorConfig& cfg = model_.config();
    const int64_t n = cfg.window_length;
    const int64_t g = cfg.window_gap;
    const bool with_joints =
        cfg.joint_dim > 0 && !trajectory.frames.front().joint_state.empty();

    ObservationWindow w;
    w.features.reserve(static_cast<size_t>(n));
    auto push = [&](int64_t idx) {
        const Frame& f = trajectory.frames[static_cast<size_t>(idx)];
        w.features.push_back(f.features);
        if (with_joints) w.joints.push_back(f.joint_state);
    };
    push(0);
    for (int64_t j = 1; j < n; ++j) push(std::max<int64_t>(0, t - (n - 1 - j) * g));
    return w;
}

std::vector<double> EstimatorPredictor::predict(const Trajectory& trajectory) const {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(trajectory.length()));
    for (int64_t t = 0; t < trajectory.length(); ++t) out.push_back(predict_at(trajectory, t));
    return out;
}

double EstimatorPredictor::predict_at(const Trajectory& trajectory, int64_t t) const {
    if (t < 0 || t >= trajectory.length())
        throw ValidationError("predict_at: frame " + std::to_string(t) + " out of range");
    ObservationWindow w = window_ending_at(trajectory, t);
    ForwardResult r = model_.forward(w, scheme_);
    return r.y_hat.back();
}

} // namespace stagerm
