#include "rangecast/neural.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rangecast::neural {

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566666c65ull;  // "shuffle"

void check_finite(const Vec& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x))
      throw NumericError(std::string("non-finite ") + what);
}

// y += M x
void matvec_acc(const Matrix& m, const double* x, double* y) {
  for (int r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
    double acc = 0;
    for (int c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

// y += M^T x
void matvec_t_acc(const Matrix& m, const double* x, double* y) {
  for (int r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
    const double xr = x[r];
    for (int c = 0; c < m.cols; ++c) y[c] += row[c] * xr;
  }
}

// G += a b^T
void outer_acc(Matrix& g, const double* a, const double* b) {
  for (int r = 0; r < g.rows; ++r) {
    double* row = g.data.data() + static_cast<std::size_t>(r) * g.cols;
    const double ar = a[r];
    for (int c = 0; c < g.cols; ++c) row[c] += ar * b[c];
  }
}

}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double activate(Activation a, double z) {
  switch (a) {
    case Activation::identity: return z;
    case Activation::relu: return z > 0 ? z : 0.0;
    case Activation::sigmoid: return sigmoid(z);
    case Activation::tanh_fn: return std::tanh(z);
  }
  return z;
}

double activation_grad(Activation a, double y) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return y > 0 ? 1.0 : 0.0;
    case Activation::sigmoid: return y * (1.0 - y);
    case Activation::tanh_fn: return 1.0 - y * y;
  }
  return 1.0;
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

Vec dense_forward(const Dense& layer, const Vec& x, DenseCache* cache) {
  if (static_cast<int>(x.size()) != layer.in_size())
    throw ShapeError("dense input size " + std::to_string(x.size()) +
                     " != " + std::to_string(layer.in_size()));
  Vec y(layer.b);
  matvec_acc(layer.W, x.data(), y.data());
  for (double& v : y) v = activate(layer.act, v);
  check_finite(y, "dense output");
  if (cache) {
    cache->x = x;
    cache->y = y;
  }
  return y;
}

Vec dense_backward(const Dense& layer, DenseGrad& grad, const DenseCache& c,
                   const Vec& dy) {
  if (dy.size() != c.y.size()) throw ShapeError("dense backward size mismatch");
  Vec dz(dy.size());
  for (std::size_t i = 0; i < dy.size(); ++i)
    dz[i] = dy[i] * activation_grad(layer.act, c.y[i]);
  outer_acc(grad.W, dz.data(), c.x.data());
  for (std::size_t i = 0; i < dz.size(); ++i) grad.b[i] += dz[i];
  Vec dx(layer.in_size(), 0.0);
  matvec_t_acc(layer.W, dz.data(), dx.data());
  return dx;
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

LstmCell::LstmCell(int input, int hidden)
    : input_size(input),
      hidden_size(hidden),
      Wf(hidden, input), Wi(hidden, input), Wo(hidden, input), Wc(hidden, input),
      Uf(hidden, hidden), Ui(hidden, hidden), Uo(hidden, hidden), Uc(hidden, hidden),
      bf(hidden, 0.0), bi(hidden, 0.0), bo(hidden, 0.0), bc(hidden, 0.0) {
  if (input <= 0 || hidden <= 0) throw ShapeError("LSTM sizes must be positive");
}

LstmGrad::LstmGrad(const LstmCell& c)
    : Wf(c.hidden_size, c.input_size), Wi(c.hidden_size, c.input_size),
      Wo(c.hidden_size, c.input_size), Wc(c.hidden_size, c.input_size),
      Uf(c.hidden_size, c.hidden_size), Ui(c.hidden_size, c.hidden_size),
      Uo(c.hidden_size, c.hidden_size), Uc(c.hidden_size, c.hidden_size),
      bf(c.hidden_size, 0.0), bi(c.hidden_size, 0.0), bo(c.hidden_size, 0.0),
      bc(c.hidden_size, 0.0) {}

void lstm_step(const LstmCell& cell, const Vec& x, const Vec& h_prev,
               const Vec& c_prev, Vec& h_out, Vec& c_out,
               LstmStepCache* cache) {
  const int n = cell.hidden_size;
  if (static_cast<int>(x.size()) != cell.input_size)
    throw ShapeError("lstm input size " + std::to_string(x.size()) + " != " +
                     std::to_string(cell.input_size));
  if (static_cast<int>(h_prev.size()) != n ||
      static_cast<int>(c_prev.size()) != n)
    throw ShapeError("lstm state size mismatch");

  Vec f(cell.bf), i(cell.bi), o(cell.bo), g(cell.bc);
  matvec_acc(cell.Wf, x.data(), f.data());
  matvec_acc(cell.Uf, h_prev.data(), f.data());
  matvec_acc(cell.Wi, x.data(), i.data());
  matvec_acc(cell.Ui, h_prev.data(), i.data());
  matvec_acc(cell.Wo, x.data(), o.data());
  matvec_acc(cell.Uo, h_prev.data(), o.data());
  matvec_acc(cell.Wc, x.data(), g.data());
  matvec_acc(cell.Uc, h_prev.data(), g.data());
  for (int k = 0; k < n; ++k) {
    f[k] = sigmoid(f[k]);
    i[k] = sigmoid(i[k]);
    o[k] = sigmoid(o[k]);
    g[k] = std::tanh(g[k]);
  }
  c_out.resize(n);
  h_out.resize(n);
  Vec tanh_c(n);
  for (int k = 0; k < n; ++k) {
    c_out[k] = f[k] * c_prev[k] + i[k] * g[k];
    tanh_c[k] = std::tanh(c_out[k]);
    h_out[k] = o[k] * tanh_c[k];
  }
  check_finite(h_out, "lstm hidden state");
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->f = std::move(f);
    cache->i = std::move(i);
    cache->o = std::move(o);
    cache->g = std::move(g);
    cache->c = c_out;
    cache->tanh_c = std::move(tanh_c);
  }
}

Vec lstm_forward(const LstmCell& cell, std::span<const double> xs,
                 std::vector<LstmStepCache>* caches) {
  if (xs.empty() || xs.size() % cell.input_size != 0)
    throw ShapeError("lstm sequence length not a multiple of input size");
  const int steps = static_cast<int>(xs.size()) / cell.input_size;
  if (caches) {
    caches->clear();
    caches->resize(steps);
  }
  Vec h(cell.hidden_size, 0.0), c(cell.hidden_size, 0.0);
  Vec x(cell.input_size);
  for (int t = 0; t < steps; ++t) {
    std::copy(xs.begin() + static_cast<std::size_t>(t) * cell.input_size,
              xs.begin() + static_cast<std::size_t>(t + 1) * cell.input_size,
              x.begin());
    Vec h_next, c_next;
    lstm_step(cell, x, h, c, h_next, c_next,
              caches ? &(*caches)[t] : nullptr);
    h = std::move(h_next);
    c = std::move(c_next);
  }
  return h;
}

Vec lstm_forward(const LstmCell& cell, const std::vector<Vec>& xs,
                 std::vector<LstmStepCache>* caches) {
  if (xs.empty()) throw ShapeError("empty lstm sequence");
  Vec flat;
  flat.reserve(xs.size() * cell.input_size);
  for (const Vec& x : xs) {
    if (static_cast<int>(x.size()) != cell.input_size)
      throw ShapeError("lstm step input size mismatch");
    flat.insert(flat.end(), x.begin(), x.end());
  }
  return lstm_forward(cell, std::span<const double>(flat), caches);
}

void lstm_backward(const LstmCell& cell, LstmGrad& grad,
                   const std::vector<LstmStepCache>& caches,
                   const Vec& dh_last) {
  const int n = cell.hidden_size;
  if (static_cast<int>(dh_last.size()) != n)
    throw ShapeError("lstm backward state size mismatch");
  Vec dh(dh_last);
  Vec dc(n, 0.0);
  Vec dzf(n), dzi(n), dzo(n), dzg(n);
  for (int t = static_cast<int>(caches.size()) - 1; t >= 0; --t) {
    const LstmStepCache& s = caches[t];
    for (int k = 0; k < n; ++k) {
      const double dok = dh[k] * s.tanh_c[k];
      dc[k] += dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
      dzo[k] = dok * s.o[k] * (1.0 - s.o[k]);
      dzf[k] = dc[k] * s.c_prev[k] * s.f[k] * (1.0 - s.f[k]);
      dzi[k] = dc[k] * s.g[k] * s.i[k] * (1.0 - s.i[k]);
      dzg[k] = dc[k] * s.i[k] * (1.0 - s.g[k] * s.g[k]);
    }
    outer_acc(grad.Wf, dzf.data(), s.x.data());
    outer_acc(grad.Wi, dzi.data(), s.x.data());
    outer_acc(grad.Wo, dzo.data(), s.x.data());
    outer_acc(grad.Wc, dzg.data(), s.x.data());
    outer_acc(grad.Uf, dzf.data(), s.h_prev.data());
    outer_acc(grad.Ui, dzi.data(), s.h_prev.data());
    outer_acc(grad.Uo, dzo.data(), s.h_prev.data());
    outer_acc(grad.Uc, dzg.data(), s.h_prev.data());
    for (int k = 0; k < n; ++k) {
      grad.bf[k] += dzf[k];
      grad.bi[k] += dzi[k];
      grad.bo[k] += dzo[k];
      grad.bc[k] += dzg[k];
    }
    Vec dh_prev(n, 0.0);
    matvec_t_acc(cell.Uf, dzf.data(), dh_prev.data());
    matvec_t_acc(cell.Ui, dzi.data(), dh_prev.data());
    matvec_t_acc(cell.Uo, dzo.data(), dh_prev.data());
    matvec_t_acc(cell.Uc, dzg.data(), dh_prev.data());
    for (int k = 0; k < n; ++k) dc[k] *= s.f[k];
    dh = std::move(dh_prev);
  }
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

double mse_loss(const std::vector<Vec>& predictions,
                const std::vector<Vec>& targets) {
  if (predictions.size() != targets.size() || predictions.empty())
    throw ShapeError("mse_loss needs equal nonempty lengths");
  double acc = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != targets[i].size())
      throw ShapeError("mse_loss element size mismatch");
    for (std::size_t k = 0; k < predictions[i].size(); ++k) {
      const double d = predictions[i][k] - targets[i][k];
      acc += d * d;
    }
  }
  return acc / static_cast<double>(predictions.size());
}

double mse_loss(const Vec& predictions, const Vec& targets) {
  if (predictions.size() != targets.size() || predictions.empty())
    throw ShapeError("mse_loss needs equal nonempty lengths");
  double acc = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    acc += d * d;
  }
  return acc / static_cast<double>(predictions.size());
}

// ---------------------------------------------------------------------------
// Parameter plumbing
// ---------------------------------------------------------------------------

std::vector<ParamBlock> NeuralNet::params() {
  std::vector<ParamBlock> out;
  collect_params(out);
  return out;
}

std::size_t NeuralNet::param_count() {
  std::size_t n = 0;
  for (const ParamBlock& b : params()) n += b.size;
  return n;
}

void NeuralNet::zero_grad() {
  for (ParamBlock& b : params())
    std::fill(b.grad, b.grad + b.size, 0.0);
}

Vec NeuralNet::pack_params() {
  Vec flat;
  flat.reserve(param_count());
  for (const ParamBlock& b : params())
    flat.insert(flat.end(), b.value, b.value + b.size);
  return flat;
}

void NeuralNet::unpack_params(const Vec& flat) {
  std::size_t off = 0;
  for (ParamBlock& b : params()) {
    if (off + b.size > flat.size()) throw ShapeError("parameter pack too short");
    std::copy(flat.begin() + off, flat.begin() + off + b.size, b.value);
    off += b.size;
  }
  if (off != flat.size()) throw ShapeError("parameter pack too long");
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void adam_step(std::span<double> params, std::span<double> grads,
               AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adam size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw ShapeError("adam state mismatch");

  double norm2 = 0;
  for (double g : grads) norm2 += g * g;
  const double norm = std::sqrt(norm2);
  const double factor = (cfg.clip > 0 && norm > cfg.clip) ? cfg.clip / norm : 1.0;

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k] * factor;
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[k] / bc1;
    const double vhat = state.v[k] / bc2;
    params[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

void adam_step(std::vector<ParamBlock>& blocks, AdamState& state,
               const AdamConfig& cfg) {
  std::size_t total = 0;
  for (const ParamBlock& b : blocks) total += b.size;
  if (state.m.empty()) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
  }
  if (state.m.size() != total) throw ShapeError("adam state mismatch");

  double norm2 = 0;
  for (const ParamBlock& b : blocks)
    for (std::size_t k = 0; k < b.size; ++k) norm2 += b.grad[k] * b.grad[k];
  const double norm = std::sqrt(norm2);
  const double factor = (cfg.clip > 0 && norm > cfg.clip) ? cfg.clip / norm : 1.0;

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  std::size_t off = 0;
  for (ParamBlock& b : blocks) {
    for (std::size_t k = 0; k < b.size; ++k, ++off) {
      const double g = b.grad[k] * factor;
      state.m[off] = cfg.beta1 * state.m[off] + (1.0 - cfg.beta1) * g;
      state.v[off] = cfg.beta2 * state.v[off] + (1.0 - cfg.beta2) * g * g;
      const double mhat = state.m[off] / bc1;
      const double vhat = state.v[off] / bc2;
      b.value[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (learning_rate <= 0 || batch_size <= 0 || max_epochs <= 0 ||
      patience <= 0 || clip_norm <= 0)
    throw std::invalid_argument("train config fields must be positive");
  if (patience > max_epochs)
    throw std::invalid_argument("patience must be <= max_epochs");
}

double evaluate_mse(const NeuralNet& net, const features::SampleSet& set) {
  double acc = 0;
  for (const features::Sample& s : set.samples) {
    const Vec y = net.predict(s);
    for (std::size_t k = 0; k < y.size(); ++k) {
      const double d = y[k] - s.target[k];
      acc += d * d;
    }
  }
  return acc / static_cast<double>(set.samples.size());
}

TrainHistory train(NeuralNet& net, const features::SampleSet& train_set,
                   const features::SampleSet& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train and validation sets must be nonempty");

  auto blocks = net.params();
  AdamState adam;
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.learning_rate;
  adam_cfg.clip = cfg.clip_norm;

  const std::size_t n = train_set.samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0u);

  TrainHistory hist;
  Vec best_params = net.pack_params();
  double best_val = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // Fixed shuffle stream per (seed, epoch).
    SplitMix64 rng(SplitMix64::derive(
        cfg.seed, kShuffleStream + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = rng.next_u64() % i;
      std::swap(order[i - 1], order[j]);
    }

    double epoch_sse = 0;
    double val_mse = 0;
    try {
      for (std::size_t start = 0; start < n; start += cfg.batch_size) {
        const std::size_t stop = std::min(n, start + cfg.batch_size);
        const double inv_batch = 1.0 / static_cast<double>(stop - start);
        net.zero_grad();
        for (std::size_t i = start; i < stop; ++i) {
          const features::Sample& s = train_set.samples[order[i]];
          const Vec y = net.forward_cached(s);
          Vec d(y.size());
          for (std::size_t k = 0; k < y.size(); ++k) {
            const double r = y[k] - s.target[k];
            epoch_sse += r * r;
            d[k] = 2.0 * r * inv_batch;
          }
          net.backward(d);
        }
        adam_step(blocks, adam, adam_cfg);
      }
      val_mse = evaluate_mse(net, val_set);
    } catch (const NumericError& e) {
      throw DivergenceError(std::string(e.what()) + " at epoch " +
                                std::to_string(epoch),
                            epoch);
    }
    const double train_mse = epoch_sse / static_cast<double>(n);
    if (!std::isfinite(train_mse) || !std::isfinite(val_mse))
      throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch),
                            epoch);
    hist.train_mse.push_back(train_mse);
    hist.val_mse.push_back(val_mse);

    if (val_mse < best_val) {
      best_val = val_mse;
      best_params = net.pack_params();
      hist.best_epoch = epoch;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= cfg.patience) break;
    }
  }
  net.unpack_params(best_params);
  hist.best_val_mse = best_val;
  return hist;
}

void glorot_init(Matrix& m, SplitMix64& rng) {
  const double a = std::sqrt(6.0 / (m.rows + m.cols));
  for (double& v : m.data) v = (2.0 * rng.next_uniform() - 1.0) * a;
}

}  // namespace rangecast::neural
