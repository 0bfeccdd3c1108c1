#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "rangecast/baselines.hpp"
#include "rangecast/features.hpp"
#include "rangecast/neural.hpp"

namespace rangecast::zoo {

struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TuningFailedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Family {
  AR,
  GARCH,
  PlainDNN,
  LSTM_t,
  LSTM_D,
  TwoLSTM,
  PPairsTwoLSTM,
};

std::string family_name(Family f);
Family family_from_name(const std::string& name);
bool is_neural(Family f);

// Hyperparameters for every family; families read only their own fields.
struct ModelSpec {
  Family family = Family::TwoLSTM;

  // Plain DNN: layers counts the output layer, so L-1 hidden layers of
  // `dnn_width` neurons feed a 1-unit identity output.
  int dnn_layers = 6;
  int dnn_width = 30;

  // LSTM families.
  int hidden = 64;
  int head_layers = 2;  // counted like dnn_layers
  int head_width = 32;
  int p_t = 20;
  int p_d = 20;
  int n_pairs = 1;  // p for PPairsTwoLSTM, which requires >= 2

  // Classical baselines.
  int ar_order = 0;  // 0 = tune per fold over ar_order_grid
  std::vector<int> ar_order_grid = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  baselines::GarchSettings garch;

  neural::TrainConfig train;

  void validate() const;  // throws SpecError
};

enum class LstmAxis { intraday, interday };

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

// Calendar-feature regressor: relu hidden stack, identity output.
class PlainDnnNet : public neural::NeuralNet {
 public:
  PlainDnnNet(int layers, int width, int in, int out, std::uint64_t seed,
              neural::Activation hidden_act = neural::Activation::relu);
  std::string architecture() const override { return "plain_dnn"; }
  int output_size() const override;
  neural::Vec predict(const features::Sample& s) const override;
  neural::Vec forward_cached(const features::Sample& s) override;
  void backward(const neural::Vec& d_out) override;
  void collect_params(std::vector<neural::ParamBlock>& out) override;

 private:
  std::vector<neural::Dense> layers_;
  std::vector<neural::DenseGrad> grads_;
  std::vector<neural::DenseCache> caches_;
};

// Single LSTM branch over one lag axis, affine head to one output.
class PlainLstmNet : public neural::NeuralNet {
 public:
  PlainLstmNet(int hidden, LstmAxis axis, std::uint64_t seed);
  std::string architecture() const override {
    return axis_ == LstmAxis::intraday ? "lstm_t" : "lstm_d";
  }
  int output_size() const override { return 1; }
  neural::Vec predict(const features::Sample& s) const override;
  neural::Vec forward_cached(const features::Sample& s) override;
  void backward(const neural::Vec& d_out) override;
  void collect_params(std::vector<neural::ParamBlock>& out) override;

  const neural::LstmCell& cell() const { return cell_; }
  neural::LstmCell& cell() { return cell_; }
  const neural::Dense& head() const { return head_; }
  neural::Dense& head() { return head_; }

 private:
  LstmAxis axis_;
  neural::LstmCell cell_;
  neural::LstmGrad cell_grad_;
  neural::Dense head_;
  neural::DenseGrad head_grad_;
  std::vector<neural::LstmStepCache> caches_;
  neural::DenseCache head_cache_;
};

// Two independent LSTM branches (intraday and interday) whose final hidden
// states are concatenated into a small DNN head. width = pairs per window
// column and output entries; width 1 is the single-pair 2-LSTM, width p >= 2
// the p-pairs model.
class TwoLstmNet : public neural::NeuralNet {
 public:
  TwoLstmNet(int width, int hidden, int head_layers, int head_width,
             std::uint64_t seed,
             neural::Activation head_act = neural::Activation::relu);
  std::string architecture() const override {
    return width_ > 1 ? "p_pairs_two_lstm" : "two_lstm";
  }
  int output_size() const override { return width_; }
  neural::Vec predict(const features::Sample& s) const override;
  neural::Vec forward_cached(const features::Sample& s) override;
  void backward(const neural::Vec& d_out) override;
  void collect_params(std::vector<neural::ParamBlock>& out) override;

  neural::LstmCell& intraday_cell() { return intraday_; }
  neural::LstmCell& interday_cell() { return interday_; }
  std::vector<neural::Dense>& head() { return head_; }

 private:
  int width_;
  neural::LstmCell intraday_, interday_;
  neural::LstmGrad intraday_grad_, interday_grad_;
  std::vector<neural::Dense> head_;
  std::vector<neural::DenseGrad> head_grads_;
  std::vector<neural::LstmStepCache> intraday_caches_, interday_caches_;
  std::vector<neural::DenseCache> head_caches_;
};

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

std::unique_ptr<neural::NeuralNet> build_plain_dnn(const ModelSpec& spec,
                                                   std::uint64_t seed);
std::unique_ptr<neural::NeuralNet> build_plain_lstm(const ModelSpec& spec,
                                                    LstmAxis axis,
                                                    std::uint64_t seed);
std::unique_ptr<neural::NeuralNet> build_two_lstm(const ModelSpec& spec,
                                                  std::uint64_t seed);
std::unique_ptr<neural::NeuralNet> build_p_pairs(const ModelSpec& spec,
                                                 std::uint64_t seed);
// Dispatch over the neural families.
std::unique_ptr<neural::NeuralNet> build_network(const ModelSpec& spec,
                                                 std::uint64_t seed);

// ---------------------------------------------------------------------------
// Hyperparameter tuning
// ---------------------------------------------------------------------------

struct TrainValRange {
  features::DayRange train;
  features::DayRange val;
};

// Sample assembly for a neural family: time samples for PlainDNN, lag
// windows for the single-pair LSTM models (panels[0] only), joint windows
// for the pairs model (all panels).
features::SampleSet assemble_samples(
    Family family, const ModelSpec& spec,
    const std::vector<market::RangePanel>& panels, features::DayRange days,
    const std::vector<features::Normalizer>& norms);

// MSE in original log-range units: predictions are inverse-transformed with
// the sample set's per-pair normalizers before scoring.
double denormalized_mse(const neural::NeuralNet& net,
                        const features::SampleSet& set);

struct GridCell {
  std::string label;
  double mean = 0;
  double stdev = 0;
  std::vector<double> fold_mse;  // denormalized validation MSE per fold
  bool failed = false;
  std::string error;
};

struct GridTable {
  std::string row_axis, col_axis;
  std::vector<std::string> row_labels, col_labels;
  std::vector<std::vector<GridCell>> cells;  // row-major
  int best_row = -1, best_col = -1;
  std::string to_csv() const;  // cells rendered "mean±std"
};

// Grid search over the family's hyperparameter grid with per-cell validation
// MSE mean±std across folds; the best cell minimizes the mean, ties toward
// the smaller spec (earlier grid entry). DNN grids are layers x width; LSTM
// family grids are a single p row. Throws TuningFailedError when every cell
// fails.
GridTable tune_hyperparameters(Family family, const ModelSpec& base,
                               const std::vector<int>& first_axis,
                               const std::vector<int>& second_axis,
                               const std::vector<market::RangePanel>& panels,
                               const std::vector<TrainValRange>& folds,
                               std::uint64_t seed);

// The tuned spec corresponding to a table's best cell.
ModelSpec spec_for_cell(Family family, const ModelSpec& base,
                        const GridTable& table, int row, int col);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
  ModelSpec spec;
  LstmAxis axis = LstmAxis::intraday;  // for LSTM_t / LSTM_D
  std::vector<std::string> pair_ids;
  std::vector<features::Normalizer> normalizers;
  neural::TrainHistory history;
  neural::Vec params;  // flat, collect_params order
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
std::unique_ptr<neural::NeuralNet> restore_network(const Checkpoint& ckpt);

}  // namespace rangecast::zoo
