#include "rangecast/model_zoo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rangecast/io_util.hpp"
#include "serialize.hpp"

namespace rangecast::zoo {

using neural::Activation;
using neural::Dense;
using neural::LstmCell;
using neural::Vec;

std::string family_name(Family f) {
  switch (f) {
    case Family::AR: return "AR";
    case Family::GARCH: return "GARCH";
    case Family::PlainDNN: return "PlainDNN";
    case Family::LSTM_t: return "LSTM_t";
    case Family::LSTM_D: return "LSTM_D";
    case Family::TwoLSTM: return "TwoLSTM";
    case Family::PPairsTwoLSTM: return "PPairsTwoLSTM";
  }
  return "?";
}

Family family_from_name(const std::string& name) {
  for (Family f : {Family::AR, Family::GARCH, Family::PlainDNN, Family::LSTM_t,
                   Family::LSTM_D, Family::TwoLSTM, Family::PPairsTwoLSTM})
    if (family_name(f) == name) return f;
  throw SpecError("unknown model family '" + name + "'");
}

bool is_neural(Family f) {
  return f == Family::PlainDNN || f == Family::LSTM_t || f == Family::LSTM_D ||
         f == Family::TwoLSTM || f == Family::PPairsTwoLSTM;
}

void ModelSpec::validate() const {
  switch (family) {
    case Family::PlainDNN:
      if (dnn_layers < 2) throw SpecError("PlainDNN needs >= 2 layers");
      if (dnn_width < 1) throw SpecError("PlainDNN needs positive width");
      break;
    case Family::LSTM_t:
    case Family::LSTM_D:
    case Family::TwoLSTM:
      if (hidden < 1) throw SpecError("hidden size must be positive");
      if (p_t < 1 || p_d < 1) throw SpecError("lags must be positive");
      if (family == Family::TwoLSTM &&
          (head_layers < 2 || head_width < 1))
        throw SpecError("head needs >= 2 layers and positive width");
      break;
    case Family::PPairsTwoLSTM:
      if (n_pairs < 2) throw SpecError("pairs model requires p >= 2");
      if (hidden < 1 || head_layers < 2 || head_width < 1 || p_t < 1 ||
          p_d < 1)
        throw SpecError("invalid pairs-model hyperparameters");
      break;
    case Family::AR:
      if (ar_order < 0) throw SpecError("ar_order must be >= 0");
      break;
    case Family::GARCH:
      break;
  }
}

namespace {

void init_lstm(LstmCell& cell, SplitMix64& rng) {
  neural::glorot_init(cell.Wf, rng);
  neural::glorot_init(cell.Wi, rng);
  neural::glorot_init(cell.Wo, rng);
  neural::glorot_init(cell.Wc, rng);
  neural::glorot_init(cell.Uf, rng);
  neural::glorot_init(cell.Ui, rng);
  neural::glorot_init(cell.Uo, rng);
  neural::glorot_init(cell.Uc, rng);
  // Forget gate starts open so early gradients flow through time.
  std::fill(cell.bf.begin(), cell.bf.end(), 1.0);
}

void collect_dense(Dense& d, neural::DenseGrad& g,
                   std::vector<neural::ParamBlock>& out) {
  out.push_back({d.W.data.data(), g.W.data.data(), d.W.data.size()});
  out.push_back({d.b.data(), g.b.data(), d.b.size()});
}

void collect_lstm(LstmCell& c, neural::LstmGrad& g,
                  std::vector<neural::ParamBlock>& out) {
  auto add = [&out](neural::Matrix& m, neural::Matrix& gm) {
    out.push_back({m.data.data(), gm.data.data(), m.data.size()});
  };
  add(c.Wf, g.Wf);
  add(c.Wi, g.Wi);
  add(c.Wo, g.Wo);
  add(c.Wc, g.Wc);
  add(c.Uf, g.Uf);
  add(c.Ui, g.Ui);
  add(c.Uo, g.Uo);
  add(c.Uc, g.Uc);
  out.push_back({c.bf.data(), g.bf.data(), c.bf.size()});
  out.push_back({c.bi.data(), g.bi.data(), c.bi.size()});
  out.push_back({c.bo.data(), g.bo.data(), c.bo.size()});
  out.push_back({c.bc.data(), g.bc.data(), c.bc.size()});
}

}  // namespace

// ---------------------------------------------------------------------------
// PlainDnnNet
// ---------------------------------------------------------------------------

PlainDnnNet::PlainDnnNet(int layers, int width, int in, int out,
                         std::uint64_t seed, Activation hidden_act) {
  if (layers < 2) throw SpecError("PlainDNN needs >= 2 layers");
  if (width < 1 || in < 1 || out < 1) throw SpecError("invalid widths");
  SplitMix64 rng(SplitMix64::derive(seed, 0xD44));
  layers_.emplace_back(width, in, hidden_act);
  for (int l = 0; l < layers - 2; ++l)
    layers_.emplace_back(width, width, hidden_act);
  layers_.emplace_back(out, width, Activation::identity);
  for (Dense& d : layers_) {
    neural::glorot_init(d.W, rng);
    grads_.emplace_back(d);
  }
  caches_.resize(layers_.size());
}

int PlainDnnNet::output_size() const { return layers_.back().out_size(); }

Vec PlainDnnNet::predict(const features::Sample& s) const {
  Vec x = s.time_features;
  for (const Dense& d : layers_) x = neural::dense_forward(d, x);
  return x;
}

Vec PlainDnnNet::forward_cached(const features::Sample& s) {
  Vec x = s.time_features;
  for (std::size_t l = 0; l < layers_.size(); ++l)
    x = neural::dense_forward(layers_[l], x, &caches_[l]);
  return x;
}

void PlainDnnNet::backward(const Vec& d_out) {
  Vec d = d_out;
  for (std::size_t l = layers_.size(); l-- > 0;)
    d = neural::dense_backward(layers_[l], grads_[l], caches_[l], d);
}

void PlainDnnNet::collect_params(std::vector<neural::ParamBlock>& out) {
  for (std::size_t l = 0; l < layers_.size(); ++l)
    collect_dense(layers_[l], grads_[l], out);
}

// ---------------------------------------------------------------------------
// PlainLstmNet
// ---------------------------------------------------------------------------

PlainLstmNet::PlainLstmNet(int hidden, LstmAxis axis, std::uint64_t seed)
    : axis_(axis),
      cell_(1, hidden),
      cell_grad_(cell_),
      head_(1, hidden, Activation::identity),
      head_grad_(head_) {
  SplitMix64 rng(SplitMix64::derive(seed, 0x157));
  init_lstm(cell_, rng);
  neural::glorot_init(head_.W, rng);
}

Vec PlainLstmNet::predict(const features::Sample& s) const {
  const Vec& window = axis_ == LstmAxis::intraday ? s.intraday : s.interday;
  return neural::dense_forward(
      head_, neural::lstm_forward(cell_, std::span<const double>(window)));
}

Vec PlainLstmNet::forward_cached(const features::Sample& s) {
  const Vec& window = axis_ == LstmAxis::intraday ? s.intraday : s.interday;
  const Vec h =
      neural::lstm_forward(cell_, std::span<const double>(window), &caches_);
  return neural::dense_forward(head_, h, &head_cache_);
}

void PlainLstmNet::backward(const Vec& d_out) {
  const Vec dh = neural::dense_backward(head_, head_grad_, head_cache_, d_out);
  neural::lstm_backward(cell_, cell_grad_, caches_, dh);
}

void PlainLstmNet::collect_params(std::vector<neural::ParamBlock>& out) {
  collect_lstm(cell_, cell_grad_, out);
  collect_dense(head_, head_grad_, out);
}

// ---------------------------------------------------------------------------
// TwoLstmNet
// ---------------------------------------------------------------------------

TwoLstmNet::TwoLstmNet(int width, int hidden, int head_layers, int head_width,
                       std::uint64_t seed, Activation head_act)
    : width_(width),
      intraday_(width, hidden),
      interday_(width, hidden),
      intraday_grad_(intraday_),
      interday_grad_(interday_) {
  if (width < 1) throw SpecError("window width must be positive");
  if (head_layers < 2 || head_width < 1)
    throw SpecError("head needs >= 2 layers and positive width");
  SplitMix64 rng(SplitMix64::derive(seed, 0x215));
  init_lstm(intraday_, rng);
  init_lstm(interday_, rng);
  head_.emplace_back(head_width, 2 * hidden, head_act);
  for (int l = 0; l < head_layers - 2; ++l)
    head_.emplace_back(head_width, head_width, head_act);
  head_.emplace_back(width, head_width, Activation::identity);
  for (Dense& d : head_) {
    neural::glorot_init(d.W, rng);
    head_grads_.emplace_back(d);
  }
  head_caches_.resize(head_.size());
}

Vec TwoLstmNet::predict(const features::Sample& s) const {
  Vec h = neural::lstm_forward(intraday_, std::span<const double>(s.intraday));
  const Vec hz =
      neural::lstm_forward(interday_, std::span<const double>(s.interday));
  h.insert(h.end(), hz.begin(), hz.end());
  for (const Dense& d : head_) h = neural::dense_forward(d, h);
  return h;
}

Vec TwoLstmNet::forward_cached(const features::Sample& s) {
  Vec h = neural::lstm_forward(intraday_, std::span<const double>(s.intraday),
                               &intraday_caches_);
  const Vec hz = neural::lstm_forward(
      interday_, std::span<const double>(s.interday), &interday_caches_);
  h.insert(h.end(), hz.begin(), hz.end());
  for (std::size_t l = 0; l < head_.size(); ++l)
    h = neural::dense_forward(head_[l], h, &head_caches_[l]);
  return h;
}

void TwoLstmNet::backward(const Vec& d_out) {
  Vec d = d_out;
  for (std::size_t l = head_.size(); l-- > 0;)
    d = neural::dense_backward(head_[l], head_grads_[l], head_caches_[l], d);
  const int hid = intraday_.hidden_size;
  const Vec dhy(d.begin(), d.begin() + hid);
  const Vec dhz(d.begin() + hid, d.end());
  neural::lstm_backward(intraday_, intraday_grad_, intraday_caches_, dhy);
  neural::lstm_backward(interday_, interday_grad_, interday_caches_, dhz);
}

void TwoLstmNet::collect_params(std::vector<neural::ParamBlock>& out) {
  collect_lstm(intraday_, intraday_grad_, out);
  collect_lstm(interday_, interday_grad_, out);
  for (std::size_t l = 0; l < head_.size(); ++l)
    collect_dense(head_[l], head_grads_[l], out);
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

std::unique_ptr<neural::NeuralNet> build_plain_dnn(const ModelSpec& spec,
                                                   std::uint64_t seed) {
  if (spec.dnn_layers < 2 || spec.dnn_width < 1)
    throw SpecError("invalid PlainDNN spec");
  return std::make_unique<PlainDnnNet>(spec.dnn_layers, spec.dnn_width, 4, 1,
                                       seed);
}

std::unique_ptr<neural::NeuralNet> build_plain_lstm(const ModelSpec& spec,
                                                    LstmAxis axis,
                                                    std::uint64_t seed) {
  if (spec.hidden < 1) throw SpecError("invalid LSTM spec");
  return std::make_unique<PlainLstmNet>(spec.hidden, axis, seed);
}

std::unique_ptr<neural::NeuralNet> build_two_lstm(const ModelSpec& spec,
                                                  std::uint64_t seed) {
  if (spec.hidden < 1) throw SpecError("invalid 2-LSTM spec");
  return std::make_unique<TwoLstmNet>(1, spec.hidden, spec.head_layers,
                                      spec.head_width, seed);
}

std::unique_ptr<neural::NeuralNet> build_p_pairs(const ModelSpec& spec,
                                                 std::uint64_t seed) {
  if (spec.n_pairs < 2) throw SpecError("pairs model requires p >= 2");
  if (spec.hidden < 1) throw SpecError("invalid pairs-model spec");
  return std::make_unique<TwoLstmNet>(spec.n_pairs, spec.hidden,
                                      spec.head_layers, spec.head_width, seed);
}

std::unique_ptr<neural::NeuralNet> build_network(const ModelSpec& spec,
                                                 std::uint64_t seed) {
  switch (spec.family) {
    case Family::PlainDNN: return build_plain_dnn(spec, seed);
    case Family::LSTM_t: return build_plain_lstm(spec, LstmAxis::intraday, seed);
    case Family::LSTM_D: return build_plain_lstm(spec, LstmAxis::interday, seed);
    case Family::TwoLSTM: return build_two_lstm(spec, seed);
    case Family::PPairsTwoLSTM: return build_p_pairs(spec, seed);
    default: throw SpecError("not a neural family: " + family_name(spec.family));
  }
}

// ---------------------------------------------------------------------------
// Tuning
// ---------------------------------------------------------------------------

features::SampleSet assemble_samples(
    Family family, const ModelSpec& spec,
    const std::vector<market::RangePanel>& panels, features::DayRange days,
    const std::vector<features::Normalizer>& norms) {
  switch (family) {
    case Family::PlainDNN:
      return features::make_time_samples(panels[0], days, norms[0]);
    case Family::LSTM_t:
    case Family::LSTM_D:
    case Family::TwoLSTM:
      return features::make_lag_samples(panels[0], spec.p_t, spec.p_d, days,
                                        norms[0]);
    case Family::PPairsTwoLSTM:
      return features::make_pair_samples(panels, spec.p_t, spec.p_d, days,
                                         norms);
    default:
      throw SpecError("cannot assemble samples for " + family_name(family));
  }
}

double denormalized_mse(const neural::NeuralNet& net,
                        const features::SampleSet& set) {
  double acc = 0;
  for (const features::Sample& s : set.samples) {
    const Vec y = net.predict(s);
    for (std::size_t k = 0; k < y.size(); ++k) {
      const features::Normalizer& nk = set.normalizers[k];
      const double err = nk.inverse(y[k]) - s.target_raw[k];
      acc += err * err;
    }
  }
  return acc / static_cast<double>(set.samples.size());
}

GridTable tune_hyperparameters(Family family, const ModelSpec& base,
                               const std::vector<int>& first_axis,
                               const std::vector<int>& second_axis,
                               const std::vector<market::RangePanel>& panels,
                               const std::vector<TrainValRange>& folds,
                               std::uint64_t seed) {
  if (!is_neural(family)) throw SpecError("tuning covers neural families only");
  if (first_axis.empty()) throw SpecError("empty grid");
  if (folds.empty()) throw SpecError("no folds given");

  GridTable table;
  if (family == Family::PlainDNN) {
    if (second_axis.empty()) throw SpecError("DNN grid needs two axes");
    table.row_axis = "L";
    table.col_axis = "n";
    for (int v : first_axis) table.row_labels.push_back(std::to_string(v));
    for (int v : second_axis) table.col_labels.push_back(std::to_string(v));
  } else {
    table.row_axis = "model";
    table.col_axis = "p";
    table.row_labels.push_back(family_name(family));
    for (int v : first_axis) table.col_labels.push_back(std::to_string(v));
  }

  const std::size_t n_rows = table.row_labels.size();
  const std::size_t n_cols = table.col_labels.size();
  table.cells.assign(n_rows, std::vector<GridCell>(n_cols));

  // Single-pair families tune on the first panel, mirroring the protocol of
  // tuning on one pair and applying the winner elsewhere.
  std::vector<market::RangePanel> used;
  if (family == Family::PPairsTwoLSTM)
    used = panels;
  else
    used = {panels[0]};

  double best_mean = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t c = 0; c < n_cols; ++c) {
      ModelSpec spec = base;
      spec.family = family;
      if (family == Family::PlainDNN) {
        spec.dnn_layers = first_axis[r];
        spec.dnn_width = second_axis[c];
      } else {
        spec.p_t = spec.p_d = first_axis[c];
      }
      if (family == Family::PPairsTwoLSTM)
        spec.n_pairs = static_cast<int>(used.size());

      GridCell& cell = table.cells[r][c];
      cell.label = table.row_labels[r] + "x" + table.col_labels[c];
      try {
        spec.validate();
        for (std::size_t f = 0; f < folds.size(); ++f) {
          std::vector<features::Normalizer> norms;
          for (const auto& panel : used)
            norms.push_back(features::fit_normalizer(panel, folds[f].train));
          const auto train_set =
              assemble_samples(family, spec, used, folds[f].train, norms);
          const auto val_set =
              assemble_samples(family, spec, used, folds[f].val, norms);
          auto net = build_network(
              spec, SplitMix64::derive(seed, (r * 977 + c) * 131 + f));
          neural::TrainConfig tc = spec.train;
          tc.seed = SplitMix64::derive(seed, (r * 977 + c) * 131 + f + 7919);
          neural::train(*net, train_set, val_set, tc);
          cell.fold_mse.push_back(denormalized_mse(*net, val_set));
        }
        double mean = 0;
        for (double v : cell.fold_mse) mean += v;
        mean /= static_cast<double>(cell.fold_mse.size());
        double sd = 0;
        if (cell.fold_mse.size() > 1) {
          for (double v : cell.fold_mse) sd += (v - mean) * (v - mean);
          sd = std::sqrt(sd / static_cast<double>(cell.fold_mse.size() - 1));
        }
        cell.mean = mean;
        cell.stdev = sd;
        if (mean < best_mean) {
          best_mean = mean;
          table.best_row = static_cast<int>(r);
          table.best_col = static_cast<int>(c);
        }
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
    }
  }
  if (table.best_row < 0) throw TuningFailedError("every grid cell failed");
  return table;
}

ModelSpec spec_for_cell(Family family, const ModelSpec& base,
                        const GridTable& table, int row, int col) {
  ModelSpec spec = base;
  spec.family = family;
  if (family == Family::PlainDNN) {
    spec.dnn_layers = std::stoi(table.row_labels[row]);
    spec.dnn_width = std::stoi(table.col_labels[col]);
  } else {
    spec.p_t = spec.p_d = std::stoi(table.col_labels[col]);
  }
  return spec;
}

std::string GridTable::to_csv() const {
  std::string out = row_axis;
  for (const auto& c : col_labels) out += ',' + c;
  out += '\n';
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    out += row_labels[r];
    for (std::size_t c = 0; c < col_labels.size(); ++c) {
      const GridCell& cell = cells[r][c];
      out += ',';
      if (cell.failed)
        out += "failed";
      else
        out += fmt_double(cell.mean) + "±" + fmt_double(cell.stdev);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

using nlohmann::json;

json spec_to_json(const ModelSpec& spec) {
  json j;
  j["family"] = family_name(spec.family);
  j["dnn_layers"] = spec.dnn_layers;
  j["dnn_width"] = spec.dnn_width;
  j["hidden"] = spec.hidden;
  j["head_layers"] = spec.head_layers;
  j["head_width"] = spec.head_width;
  j["p_t"] = spec.p_t;
  j["p_d"] = spec.p_d;
  j["n_pairs"] = spec.n_pairs;
  j["ar_order"] = spec.ar_order;
  j["ar_order_grid"] = spec.ar_order_grid;
  j["train"] = train_config_to_json(spec.train);
  return j;
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec spec;
  spec.family = family_from_name(j.at("family").get<std::string>());
  spec.dnn_layers = j.value("dnn_layers", spec.dnn_layers);
  spec.dnn_width = j.value("dnn_width", spec.dnn_width);
  spec.hidden = j.value("hidden", spec.hidden);
  spec.head_layers = j.value("head_layers", spec.head_layers);
  spec.head_width = j.value("head_width", spec.head_width);
  spec.p_t = j.value("p_t", spec.p_t);
  spec.p_d = j.value("p_d", spec.p_d);
  spec.n_pairs = j.value("n_pairs", spec.n_pairs);
  spec.ar_order = j.value("ar_order", spec.ar_order);
  if (j.contains("ar_order_grid"))
    spec.ar_order_grid = j.at("ar_order_grid").get<std::vector<int>>();
  if (j.contains("train"))
    spec.train = train_config_from_json(j.at("train"));
  return spec;
}

json train_config_to_json(const neural::TrainConfig& cfg) {
  json j;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["max_epochs"] = cfg.max_epochs;
  j["patience"] = cfg.patience;
  j["clip_norm"] = cfg.clip_norm;
  j["seed"] = cfg.seed;
  return j;
}

neural::TrainConfig train_config_from_json(const json& j) {
  neural::TrainConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json j;
  j["spec"] = spec_to_json(ckpt.spec);
  j["axis"] = ckpt.axis == LstmAxis::intraday ? "intraday" : "interday";
  j["pair_ids"] = ckpt.pair_ids;
  json norms = json::array();
  for (const auto& n : ckpt.normalizers)
    norms.push_back({{"min", n.min}, {"max", n.max}});
  j["normalizers"] = std::move(norms);
  j["history"] = {{"train_mse", ckpt.history.train_mse},
                  {"val_mse", ckpt.history.val_mse},
                  {"best_epoch", ckpt.history.best_epoch},
                  {"best_val_mse", ckpt.history.best_val_mse}};
  j["params"] = ckpt.params;
  return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  const json j = json::parse(text);
  Checkpoint ckpt;
  ckpt.spec = spec_from_json(j.at("spec"));
  ckpt.axis = j.value("axis", "intraday") == "interday" ? LstmAxis::interday
                                                        : LstmAxis::intraday;
  ckpt.pair_ids = j.at("pair_ids").get<std::vector<std::string>>();
  for (const auto& n : j.at("normalizers"))
    ckpt.normalizers.push_back(
        {n.at("min").get<double>(), n.at("max").get<double>()});
  const json& h = j.at("history");
  ckpt.history.train_mse = h.at("train_mse").get<std::vector<double>>();
  ckpt.history.val_mse = h.at("val_mse").get<std::vector<double>>();
  ckpt.history.best_epoch = h.at("best_epoch").get<int>();
  ckpt.history.best_val_mse = h.at("best_val_mse").get<double>();
  ckpt.params = j.at("params").get<std::vector<double>>();
  return ckpt;
}

std::unique_ptr<neural::NeuralNet> restore_network(const Checkpoint& ckpt) {
  std::unique_ptr<neural::NeuralNet> net;
  switch (ckpt.spec.family) {
    case Family::LSTM_t:
    case Family::LSTM_D:
      net = build_plain_lstm(ckpt.spec, ckpt.axis, 0);
      break;
    default:
      net = build_network(ckpt.spec, 0);
      break;
  }
  net->unpack_params(ckpt.params);
  return net;
}

}  // namespace rangecast::zoo
