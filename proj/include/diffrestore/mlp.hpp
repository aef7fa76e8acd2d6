#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffrestore/process.hpp"
#include "diffrestore/rng.hpp"
#include "diffrestore/score.hpp"

namespace diffrestore {

/// Small fully connected score network. The raw network regresses the kernel
/// noise (eps-prediction); the score is -net(x, c, log sigma) / sigma. Input
/// is the concatenation [x; conditioning; log sigma(tau)].
struct MlpScoreModel {
  int x_dim = 0;
  int cond_dim = 0;
  std::vector<Mat> weights;  // weights[l]: out_l x in_l
  std::vector<Vec> biases;

  int input_dim() const { return x_dim + cond_dim + 1; }
  std::size_t layer_count() const { return weights.size(); }
  std::size_t param_count() const;

  static MlpScoreModel init(int x_dim, int cond_dim, int hidden, int depth,
                            RngStream& rng);

  /// Forward pass over a batch (columns are items). Returns eps-hat.
  Mat forward(const Mat& input) const;

  /// Forward pass keeping pre-activations for the backward pass.
  Mat forward_cached(const Mat& input, std::vector<Mat>& pre,
                     std::vector<Mat>& act) const;

  /// Reverse-mode pass. dout is the cotangent of the output; fills parameter
  /// gradients and, when din != nullptr, the input cotangent.
  void backward(const Mat& input, const std::vector<Mat>& pre,
                const std::vector<Mat>& act, const Mat& dout,
                std::vector<Mat>* dweights, std::vector<Vec>* dbiases,
                Mat* din) const;

  void save(const std::string& path) const;
  static MlpScoreModel load(const std::string& path);
};

struct MlpGrads {
  std::vector<Mat> dweights;
  std::vector<Vec> dbiases;
};

struct TrainConfig {
  int batch = 64;
  int steps = 20000;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double cond_dropout = 0.1;
  int hidden = 128;
  int depth = 2;
  // Abort when the windowed loss exceeds this multiple of its initial value.
  double divergence_factor = 10.0;
  int smooth_window = 200;

  void validate() const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Denoising score-matching loss over a batch with sigma^2(tau) weighting,
/// which reduces to || net - eps ||^2 per item. Draw order per item is
/// (tau, dropout, eps), so two calls with equally seeded streams see the
/// same randomness. When grads != nullptr the averaged parameter gradients
/// are filled by reverse-mode accumulation.
double dsm_loss(const MlpScoreModel& model, const DiffusionProcess& process,
                const std::vector<Vec>& x0_batch,
                const std::vector<Vec>* y_batch, RngStream& rng,
                MlpGrads* grads = nullptr, double cond_dropout = 0.0);

/// Draws one training pair. y is filled only when the model is conditional.
using PairSampler = std::function<void(RngStream&, Vec& x0, Vec* y)>;

/// Adam training loop for the score model; deterministic per seed.
MlpScoreModel train_score(const PairSampler& sampler,
                          const DiffusionProcess& process,
                          const TrainConfig& cfg, int x_dim, int cond_dim,
                          std::vector<double>* loss_history = nullptr);

/// ScoreField adapter around a trained model. Missing conditioning is
/// replaced by the zero token (the same token used for dropout in training).
class MlpScoreField : public ScoreField {
 public:
  MlpScoreField(MlpScoreModel model, DiffusionProcess process);

  Eigen::Index dim() const override { return model_.x_dim; }
  Vec evaluate(const Vec& x, double tau, const Vec* cond) const override;
  Vec vjp(const Vec& x, double tau, const Vec& v,
          const Vec* cond) const override;
  const MlpScoreModel& model() const { return model_; }

 private:
  Vec make_input(const Vec& x, double tau, const Vec* cond,
                 double* sigma_out) const;

  MlpScoreModel model_;
  DiffusionProcess process_;
};

}  // namespace diffrestore
