#ifndef MIXLAB_SCORE_NET_HPP
#define MIXLAB_SCORE_NET_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixlab/mixture.hpp"
#include "mixlab/rng.hpp"
#include "mixlab/schedule.hpp"
#include "mixlab/score_field.hpp"

namespace mixlab {

// Dense row-major matrix; weight matrices are stored input x output so the
// batched forward pass is a plain row-major GEMM.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
    double* row(int i) { return a.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<std::size_t>(i) * cols; }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }
};

struct NetShape {
    int emb_dim = 64;
    int time_features = 64; // sinusoidal feature count (even)
    std::vector<int> hidden = {128, 128};
};

// Noise-prediction network: input concat(x, time embedding + condition
// embedding) through SiLU dense layers to a 2D epsilon head. The null
// (unconditional) token is a fixed zero embedding row excluded from
// training, so dropping the condition removes the signal entirely.
struct ScoreNetParams {
    NetShape shape;
    std::vector<std::string> labels; // sorted; null token index == labels.size()

    Matrix embed;                       // (labels+1) x emb_dim
    Matrix time_w;                      // time_features x emb_dim
    std::vector<double> time_b;         // emb_dim
    std::vector<Matrix> w;              // layer weights, input x output
    std::vector<std::vector<double>> b; // layer biases

    int null_index() const { return static_cast<int>(labels.size()); }
    int label_index(const std::optional<std::string>& condition) const;
    std::size_t param_count() const;
};

struct ScoreNetGrads {
    Matrix embed;
    Matrix time_w;
    std::vector<double> time_b;
    std::vector<Matrix> w;
    std::vector<std::vector<double>> b;

    static ScoreNetGrads like(const ScoreNetParams& p);
    void zero();
};

// Visit every parameter (or gradient) array in a fixed order.
template <typename Params, typename F>
void for_each_array(Params& p, F&& f) {
    f(p.embed.a);
    f(p.time_w.a);
    f(p.time_b);
    for (auto& m : p.w) f(m.a);
    for (auto& v : p.b) f(v);
}

ScoreNetParams init_params(const NetShape& shape, std::vector<std::string> labels, RngStream& rng,
                           bool zero_final_layer = true);

struct TrainConfig {
    int batch_size = 512;
    double learning_rate = 1e-4;
    int warmup_steps = 500;
    double decay_gamma = 0.99; // per-epoch exponential decay
    int epochs = 250;
    double cond_drop_prob = 0.5;
    std::uint64_t seed = 0;
    int dataset_size = 100000;
    NetShape shape;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

enum class TrainMode { FineGrained, General };

struct TrainReport {
    std::vector<double> epoch_loss;
    double final_loss = 0.0;
    double wall_time_sec = 0.0;
};

struct TrainSample {
    Vec2 x0;
    int t = 0;
    Vec2 eps;
    int label_idx = 0; // already resolved; null index when dropped
};

Vec2 predict_eps(const ScoreNetParams& p, Vec2 x, int t, const std::optional<std::string>& condition);

// Batched epsilon prediction at a single timestep (the sampler's shape).
void predict_eps_batch(const ScoreNetParams& p, std::span<const Vec2> xs, int t, int label_idx,
                       std::span<Vec2> out);

// Mean ||eps_hat(forward_noise(x0,t,eps), t, c) - eps||^2 and its gradients
// (accumulated into `grads`, which is zeroed first).
double loss_and_gradients(const ScoreNetParams& p, std::span<const TrainSample> batch, const NoiseSchedule& s,
                          ScoreNetGrads& grads);

std::pair<ScoreNetParams, TrainReport> train(const Mixture& world, const ConceptVocabulary& vocab, TrainMode mode,
                                             const TrainConfig& cfg, const NoiseSchedule& s);

void save_checkpoint(const ScoreNetParams& p, TrainMode mode, const TrainConfig& cfg, const std::string& path);
ScoreNetParams load_checkpoint(const std::string& path);

// ScoreField backed by a trained network: score = -eps_hat / sqrt(1 - abar_t).
class NetScoreField : public ScoreField {
public:
    NetScoreField(ScoreNetParams params, NoiseSchedule schedule);

    Vec2 score(Vec2 x, int t, const std::optional<std::string>& condition) const override;
    void score_batch(std::span<const Vec2> xs, int t, const std::optional<std::string>& condition,
                     std::span<Vec2> out) const override;

    const ScoreNetParams& params() const { return params_; }

private:
    ScoreNetParams params_;
    NoiseSchedule schedule_;
};

} // namespace mixlab

#endif
