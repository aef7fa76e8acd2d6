#include "diffrestore/mlp.hpp"

#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <numbers>

namespace diffrestore {

namespace {

constexpr char kMagic[5] = {'D', 'F', 'R', 'S', '1'};

double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2)); }

double gelu_prime(double z) {
  const double cdf = 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2));
  const double pdf =
      std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + z * pdf;
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace

std::size_t MlpScoreModel::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += weights[l].size() + biases[l].size();
  return n;
}

MlpScoreModel MlpScoreModel::init(int x_dim, int cond_dim, int hidden,
                                  int depth, RngStream& rng) {
  if (x_dim < 1 || cond_dim < 0 || hidden < 1 || depth < 1)
    throw std::invalid_argument("bad network dimensions");
  MlpScoreModel m;
  m.x_dim = x_dim;
  m.cond_dim = cond_dim;
  std::vector<int> dims;
  dims.push_back(x_dim + cond_dim + 1);
  for (int l = 0; l < depth; ++l) dims.push_back(hidden);
  dims.push_back(x_dim);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    Mat W(out, in);
    const double scale = std::sqrt(2.0 / in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) W(i, j) = scale * rng.normal();
    // Small last layer keeps the initial eps-prediction near zero.
    if (l + 2 == dims.size()) W *= 1e-2;
    m.weights.push_back(std::move(W));
    m.biases.push_back(Vec::Zero(out));
  }
  return m;
}

Mat MlpScoreModel::forward(const Mat& input) const {
  std::vector<Mat> pre, act;
  return forward_cached(input, pre, act);
}

Mat MlpScoreModel::forward_cached(const Mat& input, std::vector<Mat>& pre,
                                  std::vector<Mat>& act) const {
  if (input.rows() != input_dim())
    throw std::invalid_argument("input dim mismatch");
  pre.clear();
  act.clear();
  Mat h = input;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Mat z = (weights[l] * h).colwise() + biases[l];
    if (l + 1 < weights.size()) {
      pre.push_back(z);
      h = z.unaryExpr([](double v) { return gelu(v); });
      act.push_back(h);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

void MlpScoreModel::backward(const Mat& input, const std::vector<Mat>& pre,
                             const std::vector<Mat>& act, const Mat& dout,
                             std::vector<Mat>* dweights,
                             std::vector<Vec>* dbiases, Mat* din) const {
  const std::size_t L = weights.size();
  if (dweights) {
    dweights->resize(L);
    dbiases->resize(L);
  }
  Mat delta = dout;
  for (std::size_t l = L; l-- > 0;) {
    const Mat& below = (l == 0) ? input : act[l - 1];
    if (dweights) {
      (*dweights)[l] = delta * below.transpose();
      (*dbiases)[l] = delta.rowwise().sum();
    }
    if (l == 0) {
      if (din) *din = weights[l].transpose() * delta;
      break;
    }
    Mat back = weights[l].transpose() * delta;
    delta = back.cwiseProduct(
        pre[l - 1].unaryExpr([](double v) { return gelu_prime(v); }));
  }
}

void MlpScoreModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for write: " + path);
  os.write(kMagic, 5);
  write_u32(os, static_cast<std::uint32_t>(x_dim));
  write_u32(os, static_cast<std::uint32_t>(cond_dim));
  write_u32(os, static_cast<std::uint32_t>(weights.size()));
  for (std::size_t l = 0; l < weights.size(); ++l) {
    write_u32(os, static_cast<std::uint32_t>(weights[l].rows()));
    write_u32(os, static_cast<std::uint32_t>(weights[l].cols()));
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Mat& W = weights[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) write_f64(os, W(i, j));
    for (Eigen::Index i = 0; i < biases[l].size(); ++i)
      write_f64(os, biases[l][i]);
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

MlpScoreModel MlpScoreModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, kMagic, 5) != 0)
    throw std::runtime_error("bad checkpoint magic: " + path);
  MlpScoreModel m;
  m.x_dim = static_cast<int>(read_u32(is));
  m.cond_dim = static_cast<int>(read_u32(is));
  const std::uint32_t layers = read_u32(is);
  if (!is || layers == 0 || layers > 64)
    throw std::runtime_error("bad checkpoint header: " + path);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(layers);
  for (auto& s : shapes) {
    s.first = read_u32(is);
    s.second = read_u32(is);
  }
  for (auto& s : shapes) {
    Mat W(s.first, s.second);
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = read_f64(is);
    Vec b(s.first);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = read_f64(is);
    m.weights.push_back(std::move(W));
    m.biases.push_back(std::move(b));
  }
  if (!is) throw std::runtime_error("truncated checkpoint: " + path);
  if (m.weights.front().cols() != m.input_dim() ||
      m.weights.back().rows() != m.x_dim)
    throw std::runtime_error("checkpoint shape header inconsistent: " + path);
  return m;
}

void TrainConfig::validate() const {
  if (batch < 1 || steps < 1 || !(lr > 0) || !(beta1 > 0 && beta1 < 1) ||
      !(beta2 > 0 && beta2 < 1) || hidden < 1 || depth < 1 ||
      cond_dropout < 0 || cond_dropout > 1)
    throw std::invalid_argument("invalid training hyperparameters");
}

double dsm_loss(const MlpScoreModel& model, const DiffusionProcess& process,
                const std::vector<Vec>& x0_batch,
                const std::vector<Vec>* y_batch, RngStream& rng,
                MlpGrads* grads, double cond_dropout) {
  if (x0_batch.empty()) throw std::invalid_argument("empty batch");
  const int B = static_cast<int>(x0_batch.size());
  const int d = model.x_dim;
  if (model.cond_dim > 0 && y_batch == nullptr)
    throw std::invalid_argument("conditional model needs y batch");
  if (y_batch != nullptr && static_cast<int>(y_batch->size()) != B)
    throw std::invalid_argument("y batch size mismatch");

  Mat input(model.input_dim(), B);
  Mat eps(d, B);
  for (int i = 0; i < B; ++i) {
    const Vec& x0 = x0_batch[static_cast<std::size_t>(i)];
    if (x0.size() != d) throw std::invalid_argument("x0 dim mismatch");
    const double tau = rng.uniform(process.tau_eps(), process.horizon());
    const Vec* y =
        y_batch ? &(*y_batch)[static_cast<std::size_t>(i)] : nullptr;
    bool drop = false;
    if (model.cond_dim > 0 && cond_dropout > 0)
      drop = rng.uniform() < cond_dropout;
    const Vec e = rng.normal_vec(d);
    KernelMoments m =
        process.kernel_moments(x0, tau, process.requires_y() ? y : nullptr);
    input.col(i).head(d) = m.mean + m.std * e;
    if (model.cond_dim > 0) {
      if (y->size() != model.cond_dim)
        throw std::invalid_argument("cond dim mismatch");
      input.col(i).segment(d, model.cond_dim) = drop ? Vec::Zero(model.cond_dim) : *y;
    }
    input(model.input_dim() - 1, i) = std::log(process.kernel_std(tau));
    eps.col(i) = e;
  }

  std::vector<Mat> pre, act;
  const Mat out = model.forward_cached(input, pre, act);
  const Mat resid = out - eps;
  const double loss = resid.squaredNorm() / B;
  if (grads) {
    const Mat dout = (2.0 / B) * resid;
    model.backward(input, pre, act, dout, &grads->dweights, &grads->dbiases,
                   nullptr);
  }
  return loss;
}

MlpScoreModel train_score(const PairSampler& sampler,
                          const DiffusionProcess& process,
                          const TrainConfig& cfg, int x_dim, int cond_dim,
                          std::vector<double>* loss_history) {
  cfg.validate();
  RngStream init_rng(derive_seed(cfg.seed, "train-init"));
  MlpScoreModel model =
      MlpScoreModel::init(x_dim, cond_dim, cfg.hidden, cfg.depth, init_rng);
  RngStream rng(derive_seed(cfg.seed, "train"));

  std::vector<Mat> mW, vW;
  std::vector<Vec> mB, vB;
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    mW.push_back(Mat::Zero(model.weights[l].rows(), model.weights[l].cols()));
    vW.push_back(Mat::Zero(model.weights[l].rows(), model.weights[l].cols()));
    mB.push_back(Vec::Zero(model.biases[l].size()));
    vB.push_back(Vec::Zero(model.biases[l].size()));
  }

  std::deque<double> window;
  double window_sum = 0;
  double baseline = -1;

  std::vector<Vec> x0_batch(static_cast<std::size_t>(cfg.batch));
  std::vector<Vec> y_batch;
  const bool conditional = cond_dim > 0;
  if (conditional) y_batch.resize(static_cast<std::size_t>(cfg.batch));

  MlpGrads grads;
  for (int step = 1; step <= cfg.steps; ++step) {
    for (int i = 0; i < cfg.batch; ++i) {
      Vec& x0 = x0_batch[static_cast<std::size_t>(i)];
      Vec* y = conditional ? &y_batch[static_cast<std::size_t>(i)] : nullptr;
      sampler(rng, x0, y);
    }
    const double loss =
        dsm_loss(model, process, x0_batch, conditional ? &y_batch : nullptr,
                 rng, &grads, cfg.cond_dropout);
    if (loss_history) loss_history->push_back(loss);

    window.push_back(loss);
    window_sum += loss;
    if (static_cast<int>(window.size()) > cfg.smooth_window) {
      window_sum -= window.front();
      window.pop_front();
    }
    const double smoothed = window_sum / window.size();
    if (baseline < 0 && static_cast<int>(window.size()) == cfg.smooth_window)
      baseline = smoothed;
    if (baseline > 0 && smoothed > cfg.divergence_factor * baseline)
      throw TrainingDiverged("loss diverged at step " + std::to_string(step));
    if (!std::isfinite(loss))
      throw TrainingDiverged("non-finite loss at step " + std::to_string(step));

    const double bc1 = 1.0 - std::pow(cfg.beta1, step);
    const double bc2 = 1.0 - std::pow(cfg.beta2, step);
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
      mW[l] = cfg.beta1 * mW[l] + (1 - cfg.beta1) * grads.dweights[l];
      vW[l] = cfg.beta2 * vW[l] +
              (1 - cfg.beta2) * grads.dweights[l].cwiseProduct(grads.dweights[l]);
      model.weights[l].array() -=
          cfg.lr * (mW[l] / bc1).array() /
          ((vW[l] / bc2).array().sqrt() + cfg.adam_eps);
      mB[l] = cfg.beta1 * mB[l] + (1 - cfg.beta1) * grads.dbiases[l];
      vB[l] = cfg.beta2 * vB[l] +
              (1 - cfg.beta2) * grads.dbiases[l].cwiseProduct(grads.dbiases[l]);
      model.biases[l].array() -=
          cfg.lr * (mB[l] / bc1).array() /
          ((vB[l] / bc2).array().sqrt() + cfg.adam_eps);
    }
  }
  return model;
}

MlpScoreField::MlpScoreField(MlpScoreModel model, DiffusionProcess process)
    : model_(std::move(model)), process_(std::move(process)) {}

Vec MlpScoreField::make_input(const Vec& x, double tau, const Vec* cond,
                              double* sigma_out) const {
  if (x.size() != model_.x_dim) throw std::invalid_argument("x dim mismatch");
  if (!(tau >= process_.tau_eps() && tau <= process_.horizon()))
    throw std::out_of_range("tau outside schedule range");
  const double sigma = process_.kernel_std(tau);
  if (sigma_out) *sigma_out = sigma;
  Vec in(model_.input_dim());
  in.head(model_.x_dim) = x;
  if (model_.cond_dim > 0) {
    if (cond != nullptr) {
      if (cond->size() != model_.cond_dim)
        throw std::invalid_argument("cond dim mismatch");
      in.segment(model_.x_dim, model_.cond_dim) = *cond;
    } else {
      in.segment(model_.x_dim, model_.cond_dim).setZero();
    }
  }
  in[model_.input_dim() - 1] = std::log(sigma);
  return in;
}

Vec MlpScoreField::evaluate(const Vec& x, double tau, const Vec* cond) const {
  double sigma;
  const Vec in = make_input(x, tau, cond, &sigma);
  return -model_.forward(in).col(0) / sigma;
}

Vec MlpScoreField::vjp(const Vec& x, double tau, const Vec& v,
                       const Vec* cond) const {
  double sigma;
  const Vec in = make_input(x, tau, cond, &sigma);
  std::vector<Mat> pre, act;
  model_.forward_cached(in, pre, act);
  Mat din;
  model_.backward(in, pre, act, v, nullptr, nullptr, &din);
  return -din.col(0).head(model_.x_dim) / sigma;
}

}  // namespace diffrestore
