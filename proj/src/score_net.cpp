#include "mixlab/score_net.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace mixlab {

using nlohmann::json;

namespace {

// C (n x p) += A (n x m) * B (m x p), all row-major.
void gemm_nn(const double* A, const double* B, double* C, int n, int m, int p) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const double* a = A + static_cast<std::size_t>(i) * m;
        double* c = C + static_cast<std::size_t>(i) * p;
        for (int k = 0; k < m; ++k) {
            const double aik = a[k];
            const double* b = B + static_cast<std::size_t>(k) * p;
            for (int j = 0; j < p; ++j) c[j] += aik * b[j];
        }
    }
}

// C (m x p) += A^T * B with A (n x m), B (n x p). Each output row is owned by
// one thread and accumulates over the batch in index order, so results do not
// depend on the thread count.
void gemm_at(const double* A, const double* B, double* C, int n, int m, int p) {
#pragma omp parallel for schedule(static)
    for (int k = 0; k < m; ++k) {
        double* c = C + static_cast<std::size_t>(k) * p;
        for (int i = 0; i < n; ++i) {
            const double aik = A[static_cast<std::size_t>(i) * m + k];
            const double* b = B + static_cast<std::size_t>(i) * p;
            for (int j = 0; j < p; ++j) c[j] += aik * b[j];
        }
    }
}

void transpose_into(const Matrix& w, std::vector<double>& wt) {
    wt.resize(static_cast<std::size_t>(w.rows) * w.cols);
    for (int i = 0; i < w.rows; ++i)
        for (int j = 0; j < w.cols; ++j) wt[static_cast<std::size_t>(j) * w.rows + i] = w.a[static_cast<std::size_t>(i) * w.cols + j];
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void compute_time_features(double t, int f, double* out) {
    const int pairs = f / 2;
    for (int k = 0; k < pairs; ++k) {
        const double freq = pairs > 1 ? std::exp(-std::log(10000.0) * k / (pairs - 1)) : 1.0;
        out[2 * k] = std::sin(t * freq);
        out[2 * k + 1] = std::cos(t * freq);
    }
}

struct Workspace {
    int n = 0;
    std::vector<double> feat;  // n x F
    std::vector<double> temb;  // n x E
    std::vector<double> input; // n x (2+E)
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> sig; // sigmoid(pre), reused in backward
    std::vector<std::vector<double>> act;
    std::vector<double> out; // n x 2

    std::vector<double> dout, dcur, dnext, wt;

    // Every array is fully overwritten before use (gemm targets are
    // bias-initialized first), so resize() is enough.
    void ensure(const ScoreNetParams& p, int batch) {
        const int f = p.shape.time_features;
        const int e = p.shape.emb_dim;
        n = batch;
        feat.resize(static_cast<std::size_t>(n) * f);
        temb.resize(static_cast<std::size_t>(n) * e);
        input.resize(static_cast<std::size_t>(n) * (2 + e));
        const std::size_t layers = p.shape.hidden.size();
        pre.resize(layers);
        sig.resize(layers);
        act.resize(layers);
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t width = static_cast<std::size_t>(p.shape.hidden[l]);
            pre[l].resize(static_cast<std::size_t>(n) * width);
            sig[l].resize(static_cast<std::size_t>(n) * width);
            act[l].resize(static_cast<std::size_t>(n) * width);
        }
        out.resize(static_cast<std::size_t>(n) * 2);
    }
};

// Forward pass with per-sample timesteps and label indices (training shape).
void forward_general(const ScoreNetParams& p, std::span<const Vec2> xs, std::span<const int> ts,
                     std::span<const int> labels, Workspace& ws) {
    const int n = static_cast<int>(xs.size());
    const int f = p.shape.time_features;
    const int e = p.shape.emb_dim;
    ws.ensure(p, n);

    for (int i = 0; i < n; ++i) compute_time_features(static_cast<double>(ts[i]), f, ws.feat.data() + static_cast<std::size_t>(i) * f);
    for (int i = 0; i < n; ++i) std::memcpy(ws.temb.data() + static_cast<std::size_t>(i) * e, p.time_b.data(), sizeof(double) * e);
    gemm_nn(ws.feat.data(), p.time_w.a.data(), ws.temb.data(), n, f, e);

    for (int i = 0; i < n; ++i) {
        double* in = ws.input.data() + static_cast<std::size_t>(i) * (2 + e);
        in[0] = xs[i].x;
        in[1] = xs[i].y;
        const double* emb = p.embed.row(labels[i]);
        const double* tb = ws.temb.data() + static_cast<std::size_t>(i) * e;
        for (int j = 0; j < e; ++j) in[2 + j] = tb[j] + emb[j];
    }

    const double* cur = ws.input.data();
    int cur_dim = 2 + e;
    for (std::size_t l = 0; l < p.shape.hidden.size(); ++l) {
        const int width = p.shape.hidden[l];
        double* pre = ws.pre[l].data();
        for (int i = 0; i < n; ++i)
            std::memcpy(pre + static_cast<std::size_t>(i) * width, p.b[l].data(), sizeof(double) * width);
        gemm_nn(cur, p.w[l].a.data(), pre, n, cur_dim, width);
        double* sg = ws.sig[l].data();
        double* act = ws.act[l].data();
        const std::size_t total = static_cast<std::size_t>(n) * width;
#pragma omp parallel for schedule(static)
        for (long long idx = 0; idx < static_cast<long long>(total); ++idx) {
            const double v = pre[idx];
            const double s = sigmoid(v);
            sg[idx] = s;
            act[idx] = v * s;
        }
        cur = act;
        cur_dim = width;
    }
    const std::size_t last = p.shape.hidden.size();
    for (int i = 0; i < n; ++i) std::memcpy(ws.out.data() + static_cast<std::size_t>(i) * 2, p.b[last].data(), sizeof(double) * 2);
    gemm_nn(cur, p.w[last].a.data(), ws.out.data(), n, cur_dim, 2);
}

// Backward for the mean squared epsilon loss; ws must hold the forward state.
void backward_general(const ScoreNetParams& p, std::span<const Vec2> eps, std::span<const int> labels,
                      Workspace& ws, ScoreNetGrads& g) {
    const int n = ws.n;
    const int e = p.shape.emb_dim;
    const int f = p.shape.time_features;
    const std::size_t layers = p.shape.hidden.size();

    ws.dout.assign(static_cast<std::size_t>(n) * 2, 0.0);
    for (int i = 0; i < n; ++i) {
        ws.dout[static_cast<std::size_t>(i) * 2] = 2.0 * (ws.out[static_cast<std::size_t>(i) * 2] - eps[i].x) / n;
        ws.dout[static_cast<std::size_t>(i) * 2 + 1] = 2.0 * (ws.out[static_cast<std::size_t>(i) * 2 + 1] - eps[i].y) / n;
    }

    // Output layer.
    const double* last_act = layers > 0 ? ws.act[layers - 1].data() : ws.input.data();
    const int last_dim = layers > 0 ? p.shape.hidden[layers - 1] : 2 + e;
    gemm_at(last_act, ws.dout.data(), g.w[layers].a.data(), n, last_dim, 2);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 2; ++j) g.b[layers][static_cast<std::size_t>(j)] += ws.dout[static_cast<std::size_t>(i) * 2 + j];

    ws.dcur.assign(static_cast<std::size_t>(n) * last_dim, 0.0);
    transpose_into(p.w[layers], ws.wt);
    gemm_nn(ws.dout.data(), ws.wt.data(), ws.dcur.data(), n, 2, last_dim);

    for (std::size_t l = layers; l-- > 0;) {
        const int width = p.shape.hidden[l];
        // dcur currently holds d(act_l); convert to d(pre_l) via the SiLU
        // derivative sig (1 + v (1 - sig)).
        double* d = ws.dcur.data();
        const double* pre = ws.pre[l].data();
        const double* sg = ws.sig[l].data();
        const std::size_t total = static_cast<std::size_t>(n) * width;
#pragma omp parallel for schedule(static)
        for (long long idx = 0; idx < static_cast<long long>(total); ++idx) {
            const double s = sg[idx];
            d[idx] *= s * (1.0 + pre[idx] * (1.0 - s));
        }
        const double* below_act = l > 0 ? ws.act[l - 1].data() : ws.input.data();
        const int below_dim = l > 0 ? p.shape.hidden[l - 1] : 2 + e;
        gemm_at(below_act, d, g.w[l].a.data(), n, below_dim, width);
        for (int i = 0; i < n; ++i) {
            const double* drow = d + static_cast<std::size_t>(i) * width;
            for (int j = 0; j < width; ++j) g.b[l][static_cast<std::size_t>(j)] += drow[j];
        }
        ws.dnext.assign(static_cast<std::size_t>(n) * below_dim, 0.0);
        transpose_into(p.w[l], ws.wt);
        gemm_nn(d, ws.wt.data(), ws.dnext.data(), n, width, below_dim);
        std::swap(ws.dcur, ws.dnext);
    }

    // dcur now holds d(input); columns 2.. are the shared embedding signal.
    std::vector<double> dz(static_cast<std::size_t>(n) * e);
    for (int i = 0; i < n; ++i)
        std::memcpy(dz.data() + static_cast<std::size_t>(i) * e,
                    ws.dcur.data() + static_cast<std::size_t>(i) * (2 + e) + 2, sizeof(double) * e);

    gemm_at(ws.feat.data(), dz.data(), g.time_w.a.data(), n, f, e);
    for (int i = 0; i < n; ++i) {
        const double* drow = dz.data() + static_cast<std::size_t>(i) * e;
        for (int j = 0; j < e; ++j) g.time_b[static_cast<std::size_t>(j)] += drow[j];
    }
    for (int i = 0; i < n; ++i) {
        double* erow = g.embed.row(labels[i]);
        const double* drow = dz.data() + static_cast<std::size_t>(i) * e;
        for (int j = 0; j < e; ++j) erow[j] += drow[j];
    }
    // The null/unconditional token is pinned at zero and never trained.
    std::memset(g.embed.row(p.null_index()), 0, sizeof(double) * static_cast<std::size_t>(e));
}

thread_local Workspace tl_ws;

} // namespace

int ScoreNetParams::label_index(const std::optional<std::string>& condition) const {
    if (!condition) return null_index();
    const auto it = std::lower_bound(labels.begin(), labels.end(), *condition);
    if (it == labels.end() || *it != *condition)
        throw DataError("unknown-label: \"" + *condition + "\" is not in the checkpoint vocabulary");
    return static_cast<int>(it - labels.begin());
}

std::size_t ScoreNetParams::param_count() const {
    std::size_t c = embed.a.size() + time_w.a.size() + time_b.size();
    for (const auto& m : w) c += m.a.size();
    for (const auto& v : b) c += v.size();
    return c;
}

ScoreNetGrads ScoreNetGrads::like(const ScoreNetParams& p) {
    ScoreNetGrads g;
    g.embed = Matrix(p.embed.rows, p.embed.cols);
    g.time_w = Matrix(p.time_w.rows, p.time_w.cols);
    g.time_b.assign(p.time_b.size(), 0.0);
    for (const auto& m : p.w) g.w.emplace_back(m.rows, m.cols);
    for (const auto& v : p.b) g.b.emplace_back(v.size(), 0.0);
    return g;
}

void ScoreNetGrads::zero() {
    embed.zero();
    time_w.zero();
    std::fill(time_b.begin(), time_b.end(), 0.0);
    for (auto& m : w) m.zero();
    for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
}

ScoreNetParams init_params(const NetShape& shape, std::vector<std::string> labels, RngStream& rng,
                           bool zero_final_layer) {
    if (shape.emb_dim < 1 || shape.time_features < 2 || shape.time_features % 2 != 0)
        throw UsageError("invalid-shape: emb_dim >= 1 and even time_features >= 2 required");
    if (shape.hidden.empty()) throw UsageError("invalid-shape: at least one hidden layer required");
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());

    ScoreNetParams p;
    p.shape = shape;
    p.labels = std::move(labels);
    p.embed = Matrix(static_cast<int>(p.labels.size()) + 1, shape.emb_dim); // zero-init
    p.time_w = Matrix(shape.time_features, shape.emb_dim);
    p.time_b.assign(static_cast<std::size_t>(shape.emb_dim), 0.0);

    auto fill_uniform = [&rng](Matrix& m, int fan_in) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : m.a) v = (2.0 * rng.uniform() - 1.0) * scale;
    };
    fill_uniform(p.time_w, shape.time_features);

    int in_dim = 2 + shape.emb_dim;
    for (int width : shape.hidden) {
        Matrix m(in_dim, width);
        fill_uniform(m, in_dim);
        p.w.push_back(std::move(m));
        p.b.emplace_back(static_cast<std::size_t>(width), 0.0);
        in_dim = width;
    }
    Matrix head(in_dim, 2);
    if (!zero_final_layer) fill_uniform(head, in_dim);
    p.w.push_back(std::move(head));
    p.b.emplace_back(2, 0.0);
    return p;
}

Vec2 predict_eps(const ScoreNetParams& p, Vec2 x, int t, const std::optional<std::string>& condition) {
    Vec2 out;
    predict_eps_batch(p, std::span<const Vec2>(&x, 1), t, p.label_index(condition), std::span<Vec2>(&out, 1));
    return out;
}

void predict_eps_batch(const ScoreNetParams& p, std::span<const Vec2> xs, int t, int label_idx,
                       std::span<Vec2> out) {
    if (label_idx < 0 || label_idx > p.null_index()) throw DataError("unknown-label: embedding index out of range");
    const int n = static_cast<int>(xs.size());
    const int f = p.shape.time_features;
    const int e = p.shape.emb_dim;
    Workspace& ws = tl_ws;
    ws.ensure(p, n);

    // The conditioning block is shared by the whole batch: fold it through
    // the first layer once instead of per sample.
    std::vector<double> feat(static_cast<std::size_t>(f));
    compute_time_features(static_cast<double>(t), f, feat.data());
    std::vector<double> z(p.time_b);
    for (int k = 0; k < f; ++k) {
        const double fk = feat[static_cast<std::size_t>(k)];
        const double* wrow = p.time_w.row(k);
        for (int j = 0; j < e; ++j) z[static_cast<std::size_t>(j)] += fk * wrow[j];
    }
    const double* emb = p.embed.row(label_idx);
    for (int j = 0; j < e; ++j) z[static_cast<std::size_t>(j)] += emb[j];

    const int h0 = p.shape.hidden[0];
    std::vector<double> zw(p.b[0]); // b1 + z * W1[2:, :]
    for (int k = 0; k < e; ++k) {
        const double zk = z[static_cast<std::size_t>(k)];
        const double* wrow = p.w[0].row(2 + k);
        for (int j = 0; j < h0; ++j) zw[static_cast<std::size_t>(j)] += zk * wrow[j];
    }

    double* pre0 = ws.pre[0].data();
    double* sig0 = ws.sig[0].data();
    double* act0 = ws.act[0].data();
    const double* w1x = p.w[0].row(0);
    const double* w1y = p.w[0].row(1);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        double* row = pre0 + static_cast<std::size_t>(i) * h0;
        const double xv = xs[i].x;
        const double yv = xs[i].y;
        for (int j = 0; j < h0; ++j) row[j] = zw[static_cast<std::size_t>(j)] + xv * w1x[j] + yv * w1y[j];
        double* sg = sig0 + static_cast<std::size_t>(i) * h0;
        double* ac = act0 + static_cast<std::size_t>(i) * h0;
        for (int j = 0; j < h0; ++j) {
            const double s = sigmoid(row[j]);
            sg[j] = s;
            ac[j] = row[j] * s;
        }
    }

    const double* cur = act0;
    int cur_dim = h0;
    for (std::size_t l = 1; l < p.shape.hidden.size(); ++l) {
        const int width = p.shape.hidden[l];
        double* pre = ws.pre[l].data();
        for (int i = 0; i < n; ++i)
            std::memcpy(pre + static_cast<std::size_t>(i) * width, p.b[l].data(), sizeof(double) * width);
        gemm_nn(cur, p.w[l].a.data(), pre, n, cur_dim, width);
        double* sg = ws.sig[l].data();
        double* ac = ws.act[l].data();
        const std::size_t total = static_cast<std::size_t>(n) * width;
#pragma omp parallel for schedule(static)
        for (long long idx = 0; idx < static_cast<long long>(total); ++idx) {
            const double s = sigmoid(pre[idx]);
            sg[idx] = s;
            ac[idx] = pre[idx] * s;
        }
        cur = ac;
        cur_dim = width;
    }
    const std::size_t last = p.shape.hidden.size();
    for (int i = 0; i < n; ++i) std::memcpy(ws.out.data() + static_cast<std::size_t>(i) * 2, p.b[last].data(), sizeof(double) * 2);
    gemm_nn(cur, p.w[last].a.data(), ws.out.data(), n, cur_dim, 2);
    for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = {ws.out[static_cast<std::size_t>(i) * 2], ws.out[static_cast<std::size_t>(i) * 2 + 1]};
}

namespace {

double forward_batch_loss(const ScoreNetParams& p, std::span<const TrainSample> batch, const NoiseSchedule& s,
                          Workspace& ws, std::vector<Vec2>& xt, std::vector<int>& ts, std::vector<int>& labels,
                          std::vector<Vec2>& eps) {
    const int n = static_cast<int>(batch.size());
    xt.resize(static_cast<std::size_t>(n));
    ts.resize(static_cast<std::size_t>(n));
    labels.resize(static_cast<std::size_t>(n));
    eps.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const TrainSample& smp = batch[static_cast<std::size_t>(i)];
        xt[static_cast<std::size_t>(i)] = forward_noise(smp.x0, smp.t, smp.eps, s);
        ts[static_cast<std::size_t>(i)] = smp.t;
        labels[static_cast<std::size_t>(i)] = smp.label_idx;
        eps[static_cast<std::size_t>(i)] = smp.eps;
    }
    forward_general(p, xt, ts, labels, ws);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dx = ws.out[static_cast<std::size_t>(i) * 2] - eps[static_cast<std::size_t>(i)].x;
        const double dy = ws.out[static_cast<std::size_t>(i) * 2 + 1] - eps[static_cast<std::size_t>(i)].y;
        loss += dx * dx + dy * dy;
    }
    return loss / n;
}

} // namespace

double loss_and_gradients(const ScoreNetParams& p, std::span<const TrainSample> batch, const NoiseSchedule& s,
                          ScoreNetGrads& grads) {
    if (batch.empty()) throw UsageError("empty-request: loss needs a nonempty batch");
    grads.zero();
    std::vector<Vec2> xt, eps;
    std::vector<int> ts, labels;
    const double loss = forward_batch_loss(p, batch, s, tl_ws, xt, ts, labels, eps);
    backward_general(p, eps, labels, tl_ws, grads);
    return loss;
}

std::pair<ScoreNetParams, TrainReport> train(const Mixture& world, const ConceptVocabulary& vocab, TrainMode mode,
                                             const TrainConfig& cfg, const NoiseSchedule& s) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    // Embedding table carries the full vocabulary; only the mode's labels are
    // ever used as training conditions.
    std::vector<std::string> all_labels;
    for (const auto& [label, idx] : vocab.entries) all_labels.push_back(label);
    RngStream init_rng(substream_seed(cfg.seed, "train-init"));
    ScoreNetParams params = init_params(cfg.shape, all_labels, init_rng);

    // Dataset: world draws plus the per-sample label pool.
    RngStream data_rng(substream_seed(cfg.seed, "train-data"));
    std::vector<Vec2> xs(static_cast<std::size_t>(cfg.dataset_size));
    std::vector<std::vector<int>> label_pool(static_cast<std::size_t>(cfg.dataset_size));
    for (int i = 0; i < cfg.dataset_size; ++i) {
        const int comp = draw_component_index(world, data_rng);
        xs[static_cast<std::size_t>(i)] = draw_gaussian(world.components[static_cast<std::size_t>(comp)], data_rng);
        if (mode == TrainMode::FineGrained) {
            label_pool[static_cast<std::size_t>(i)] = {params.label_index(vocab.fine_label_of(comp))};
        } else {
            std::vector<int> pool;
            for (const auto& gl : vocab.general_labels_of(comp)) pool.push_back(params.label_index(gl));
            if (pool.empty()) throw DataError("invalid-vocabulary: component has no covering general label");
            label_pool[static_cast<std::size_t>(i)] = std::move(pool);
        }
    }

    ScoreNetGrads grads = ScoreNetGrads::like(params);
    ScoreNetGrads adam_m = ScoreNetGrads::like(params);
    ScoreNetGrads adam_v = ScoreNetGrads::like(params);
    std::vector<std::vector<double>*> P, G, M, V;
    for_each_array(params, [&](std::vector<double>& a) { P.push_back(&a); });
    for_each_array(grads, [&](std::vector<double>& a) { G.push_back(&a); });
    for_each_array(adam_m, [&](std::vector<double>& a) { M.push_back(&a); });
    for_each_array(adam_v, [&](std::vector<double>& a) { V.push_back(&a); });

    RngStream epoch_rng(substream_seed(cfg.seed, "train-epoch"));
    std::vector<int> order(static_cast<std::size_t>(cfg.dataset_size));
    std::iota(order.begin(), order.end(), 0);
    std::vector<TrainSample> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));

    TrainReport report;
    long long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int i = cfg.dataset_size - 1; i > 0; --i) {
            const int j = static_cast<int>(epoch_rng.below(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
        const double lr_epoch = cfg.learning_rate * std::pow(cfg.decay_gamma, epoch);
        double epoch_loss = 0.0;
        for (int start = 0; start < cfg.dataset_size; start += cfg.batch_size) {
            const int count = std::min(cfg.batch_size, cfg.dataset_size - start);
            batch.clear();
            for (int k = 0; k < count; ++k) {
                const int idx = order[static_cast<std::size_t>(start + k)];
                TrainSample smp;
                smp.x0 = xs[static_cast<std::size_t>(idx)];
                smp.t = static_cast<int>(epoch_rng.below(static_cast<std::uint64_t>(s.T)));
                smp.eps = epoch_rng.gauss2();
                const bool drop = epoch_rng.uniform() < cfg.cond_drop_prob;
                if (drop) {
                    smp.label_idx = params.null_index();
                } else {
                    const auto& pool = label_pool[static_cast<std::size_t>(idx)];
                    smp.label_idx = pool.size() == 1
                                        ? pool[0]
                                        : pool[epoch_rng.below(static_cast<std::uint64_t>(pool.size()))];
                }
                batch.push_back(smp);
            }
            const double loss = loss_and_gradients(params, batch, s, grads);
            epoch_loss += loss * count;

            ++step;
            const double warm = cfg.warmup_steps > 0
                                    ? std::min(1.0, static_cast<double>(step) / cfg.warmup_steps)
                                    : 1.0;
            const double lr_t = lr_epoch * warm;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            for (std::size_t blk = 0; blk < P.size(); ++blk) {
                std::vector<double>& pa = *P[blk];
                std::vector<double>& ga = *G[blk];
                std::vector<double>& ma = *M[blk];
                std::vector<double>& va = *V[blk];
                for (std::size_t j = 0; j < pa.size(); ++j) {
                    const double gj = ga[j];
                    ma[j] = cfg.adam_beta1 * ma[j] + (1.0 - cfg.adam_beta1) * gj;
                    va[j] = cfg.adam_beta2 * va[j] + (1.0 - cfg.adam_beta2) * gj * gj;
                    pa[j] -= lr_t * (ma[j] / bc1) / (std::sqrt(va[j] / bc2) + cfg.adam_eps);
                }
            }
        }
        report.epoch_loss.push_back(epoch_loss / cfg.dataset_size);
    }
    report.final_loss = report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back();
    report.wall_time_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(params), std::move(report)};
}

void TrainConfig::validate() const {
    if (batch_size < 1 || epochs < 1 || dataset_size < 1)
        throw UsageError("invalid-train-config: counts must be positive");
    if (!(learning_rate > 0.0) || !(decay_gamma > 0.0) || warmup_steps < 0)
        throw UsageError("invalid-train-config: bad optimizer settings");
    if (cond_drop_prob < 0.0 || cond_drop_prob > 1.0)
        throw UsageError("invalid-train-config: cond_drop_prob must be in [0,1]");
}

namespace {

json matrix_to_json(const Matrix& m) { return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.a}}; }

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
    m.a = j.at("data").get<std::vector<double>>();
    if (m.a.size() != static_cast<std::size_t>(m.rows) * m.cols) throw DataError("checkpoint: matrix size mismatch");
    return m;
}

} // namespace

void save_checkpoint(const ScoreNetParams& p, TrainMode mode, const TrainConfig& cfg, const std::string& path) {
    json j;
    j["format"] = "mixlab-scorenet";
    j["version"] = 1;
    j["mode"] = mode == TrainMode::FineGrained ? "fine_grained" : "general";
    j["config"] = {
        {"batch_size", cfg.batch_size},   {"learning_rate", cfg.learning_rate},
        {"warmup_steps", cfg.warmup_steps}, {"decay_gamma", cfg.decay_gamma},
        {"epochs", cfg.epochs},           {"cond_drop_prob", cfg.cond_drop_prob},
        {"seed", cfg.seed},               {"dataset_size", cfg.dataset_size},
    };
    j["shape"] = {{"emb_dim", p.shape.emb_dim}, {"time_features", p.shape.time_features}, {"hidden", p.shape.hidden}};
    j["labels"] = p.labels;
    j["weights"] = {{"embed", matrix_to_json(p.embed)},
                    {"time_w", matrix_to_json(p.time_w)},
                    {"time_b", p.time_b}};
    json layers = json::array();
    for (std::size_t l = 0; l < p.w.size(); ++l) layers.push_back({{"w", matrix_to_json(p.w[l])}, {"b", p.b[l]}});
    j["weights"]["layers"] = layers;
    std::ofstream out(path);
    if (!out) throw DataError("io-error: cannot open \"" + path + "\" for writing");
    out << j.dump() << "\n";
}

ScoreNetParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("io-error: cannot open \"" + path + "\"");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("io-error: \"" + path + "\" is not valid JSON: " + e.what());
    }
    if (j.value("format", "") != "mixlab-scorenet") throw DataError("checkpoint: unrecognized format");
    if (j.value("version", 0) != 1) throw DataError("checkpoint: unsupported version");
    ScoreNetParams p;
    p.shape.emb_dim = j.at("shape").at("emb_dim").get<int>();
    p.shape.time_features = j.at("shape").at("time_features").get<int>();
    p.shape.hidden = j.at("shape").at("hidden").get<std::vector<int>>();
    p.labels = j.at("labels").get<std::vector<std::string>>();
    const auto& wts = j.at("weights");
    p.embed = matrix_from_json(wts.at("embed"));
    p.time_w = matrix_from_json(wts.at("time_w"));
    p.time_b = wts.at("time_b").get<std::vector<double>>();
    for (const auto& layer : wts.at("layers")) {
        p.w.push_back(matrix_from_json(layer.at("w")));
        p.b.push_back(layer.at("b").get<std::vector<double>>());
    }
    if (p.w.size() != p.shape.hidden.size() + 1) throw DataError("checkpoint: layer count mismatch");
    return p;
}

NetScoreField::NetScoreField(ScoreNetParams params, NoiseSchedule schedule)
    : params_(std::move(params)), schedule_(std::move(schedule)) {}

Vec2 NetScoreField::score(Vec2 x, int t, const std::optional<std::string>& condition) const {
    schedule_.check_step(t);
    const Vec2 eps = predict_eps(params_, x, t, condition);
    const double c = -1.0 / std::sqrt(1.0 - schedule_.alpha_bar(t));
    return {c * eps.x, c * eps.y};
}

void NetScoreField::score_batch(std::span<const Vec2> xs, int t, const std::optional<std::string>& condition,
                                std::span<Vec2> out) const {
    schedule_.check_step(t);
    predict_eps_batch(params_, xs, t, params_.label_index(condition), out);
    const double c = -1.0 / std::sqrt(1.0 - schedule_.alpha_bar(t));
    for (auto& v : out) v = {c * v.x, c * v.y};
}

} // namespace mixlab
