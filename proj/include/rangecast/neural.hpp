#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rangecast/features.hpp"
#include "rangecast/rng.hpp"

namespace rangecast::neural {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value produced by a forward pass. Training converts this into
// DivergenceError with the offending epoch.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& msg, int epoch_)
      : std::runtime_error(msg), epoch(epoch_) {}
  int epoch;
};

using Vec = std::vector<double>;

// Dense row-major matrix; the only tensor shape the graphs here need beyond
// flat vectors.
struct Matrix {
  int rows = 0, cols = 0;
  Vec data;
  Matrix() = default;
  Matrix(int r, int c)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
  double& operator()(int r, int c) {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  double operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class Activation { identity, relu, sigmoid, tanh_fn };

double sigmoid(double x);
double activate(Activation a, double z);
// Derivative expressed through the activation output (valid for all four).
double activation_grad(Activation a, double y);

// ---------------------------------------------------------------------------
// Affine layer
// ---------------------------------------------------------------------------

struct Dense {
  Matrix W;  // out x in
  Vec b;
  Activation act = Activation::identity;
  Dense() = default;
  Dense(int out, int in, Activation a) : W(out, in), b(out, 0.0), act(a) {}
  int in_size() const { return W.cols; }
  int out_size() const { return W.rows; }
};

struct DenseGrad {
  Matrix W;
  Vec b;
  explicit DenseGrad(const Dense& d) : W(d.W.rows, d.W.cols), b(d.b.size()) {}
};

struct DenseCache {
  Vec x, y;
};

// y = act(Wx + b). Throws ShapeError on size mismatch or non-finite output.
Vec dense_forward(const Dense& layer, const Vec& x,
                  DenseCache* cache = nullptr);
// Accumulates parameter gradients and returns dL/dx.
Vec dense_backward(const Dense& layer, DenseGrad& grad, const DenseCache& c,
                   const Vec& dy);

// ---------------------------------------------------------------------------
// LSTM cell (gate order f, i, o, candidate)
// ---------------------------------------------------------------------------

struct LstmCell {
  int input_size = 0, hidden_size = 0;
  Matrix Wf, Wi, Wo, Wc;  // hidden x input
  Matrix Uf, Ui, Uo, Uc;  // hidden x hidden
  Vec bf, bi, bo, bc;
  LstmCell() = default;
  LstmCell(int input, int hidden);
};

struct LstmGrad {
  Matrix Wf, Wi, Wo, Wc, Uf, Ui, Uo, Uc;
  Vec bf, bi, bo, bc;
  explicit LstmGrad(const LstmCell& c);
};

struct LstmStepCache {
  Vec x, h_prev, c_prev;
  Vec f, i, o, g;  // post-activation gates; g is the tanh candidate
  Vec c, tanh_c;
};

// One cell update:
//   f,i,o = sigmoid(W x + U h_prev + b);  g = tanh(Wc x + Uc h_prev + bc)
//   c = f .* c_prev + i .* g;             h = o .* tanh(c)
void lstm_step(const LstmCell& cell, const Vec& x, const Vec& h_prev,
               const Vec& c_prev, Vec& h_out, Vec& c_out,
               LstmStepCache* cache = nullptr);

// Runs the cell over x_1..x_T from zero initial states and returns h_T.
// The span form reads step-major flattened input (step * input_size + k).
Vec lstm_forward(const LstmCell& cell, std::span<const double> xs,
                 std::vector<LstmStepCache>* caches = nullptr);
Vec lstm_forward(const LstmCell& cell, const std::vector<Vec>& xs,
                 std::vector<LstmStepCache>* caches = nullptr);

// Backpropagation through time from dL/dh_T; accumulates into `grad`.
void lstm_backward(const LstmCell& cell, LstmGrad& grad,
                   const std::vector<LstmStepCache>& caches,
                   const Vec& dh_last);

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

// (1/N) * sum_i |pred_i - target_i|^2 with |.| the Euclidean norm.
double mse_loss(const std::vector<Vec>& predictions,
                const std::vector<Vec>& targets);
double mse_loss(const Vec& predictions, const Vec& targets);

// ---------------------------------------------------------------------------
// Parameter plumbing, Adam, training
// ---------------------------------------------------------------------------

struct ParamBlock {
  double* value = nullptr;
  double* grad = nullptr;
  std::size_t size = 0;
};

class NeuralNet {
 public:
  virtual ~NeuralNet() = default;
  virtual std::string architecture() const = 0;
  virtual int output_size() const = 0;
  // Inference path; does not touch training caches.
  virtual Vec predict(const features::Sample& s) const = 0;
  // Training path: forward with caches, then backward for the same sample.
  virtual Vec forward_cached(const features::Sample& s) = 0;
  virtual void backward(const Vec& d_out) = 0;
  // Parameter/gradient blocks in a fixed enumeration order.
  virtual void collect_params(std::vector<ParamBlock>& out) = 0;

  std::vector<ParamBlock> params();
  std::size_t param_count();
  void zero_grad();
  Vec pack_params();
  void unpack_params(const Vec& flat);
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double clip = 5.0;  // global gradient-norm cap applied before the update
};

struct AdamState {
  Vec m, v;
  long step = 0;
};

void adam_step(std::span<double> params, std::span<double> grads,
               AdamState& state, const AdamConfig& cfg);
void adam_step(std::vector<ParamBlock>& blocks, AdamState& state,
               const AdamConfig& cfg);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 256;
  int max_epochs = 100;
  int patience = 10;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_mse;  // per epoch
  std::vector<double> val_mse;
  int best_epoch = 0;             // 1-based epoch of the kept parameters
  double best_val_mse = 0;
};

// Mini-batch Adam on the training MSE with per-epoch validation, keeping the
// best-validation parameters and stopping after `patience` epochs without
// improvement. Fully reproducible for a fixed seed. Throws DivergenceError
// when a loss goes non-finite.
TrainHistory train(NeuralNet& net, const features::SampleSet& train_set,
                   const features::SampleSet& val_set, const TrainConfig& cfg);

double evaluate_mse(const NeuralNet& net, const features::SampleSet& set);

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
void glorot_init(Matrix& m, SplitMix64& rng);

}  // namespace rangecast::neural
