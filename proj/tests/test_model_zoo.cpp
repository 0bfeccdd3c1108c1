#include <cmath>

#include "doctest.h"
#include "rangecast/model_zoo.hpp"
#include "rangecast/synth.hpp"

using namespace rangecast;
using namespace rangecast::zoo;
using neural::Vec;

namespace {

features::Sample window_sample(SplitMix64& rng, int p_t, int p_d, int width) {
  features::Sample s;
  for (int i = 0; i < p_t * width; ++i) s.intraday.push_back(rng.next_uniform());
  for (int i = 0; i < p_d * width; ++i) s.interday.push_back(rng.next_uniform());
  for (int i = 0; i < width; ++i) {
    s.target.push_back(rng.next_uniform());
    s.target_raw.push_back(s.target.back());
  }
  return s;
}

}  // namespace

TEST_CASE("parameter counts match the declared shapes") {
  SUBCASE("plain DNN 6x30 on 4 inputs") {
    PlainDnnNet net(6, 30, 4, 1, 0);
    CHECK(net.param_count() == 4 * 30 + 30 + 4 * (30 * 30 + 30) + 30 + 1);
    CHECK(net.param_count() == 3901);
  }
  SUBCASE("LSTM gate parameters for hidden 64, input width 1") {
    PlainLstmNet net(64, LstmAxis::intraday, 0);
    // four gates, each W (64x1), U (64x64), b (64), plus the affine head
    const std::size_t gates = 4 * (64 * 1 + 64 * 64 + 64);
    CHECK(gates == 16896);
    CHECK(net.param_count() == gates + 64 + 1);
  }
  SUBCASE("2-LSTM head: concat 128 -> 32 -> 1") {
    TwoLstmNet net(1, 64, 2, 32, 0);
    const std::size_t gates = 2 * 4 * (64 * 1 + 64 * 64 + 64);
    const std::size_t head = 128 * 32 + 32 + 32 * 1 + 1;
    CHECK(head == 4161);
    CHECK(net.param_count() == gates + head);
  }
}

TEST_CASE("builder contracts") {
  ModelSpec spec;
  SUBCASE("L=2 degenerates to one hidden layer plus output") {
    PlainDnnNet net(2, 5, 4, 1, 0);
    CHECK(net.param_count() == 4 * 5 + 5 + 5 + 1);
  }
  SUBCASE("invalid widths throw SpecError") {
    spec.family = Family::PlainDNN;
    spec.dnn_width = 0;
    CHECK_THROWS_AS(build_plain_dnn(spec, 0), SpecError);
    spec.dnn_width = 30;
    spec.dnn_layers = 1;
    CHECK_THROWS_AS(build_plain_dnn(spec, 0), SpecError);
  }
  SUBCASE("pairs model requires p >= 2") {
    spec.family = Family::PPairsTwoLSTM;
    spec.n_pairs = 1;
    CHECK_THROWS_AS(build_p_pairs(spec, 0), SpecError);
    CHECK_THROWS_AS(spec.validate(), SpecError);
    spec.n_pairs = 2;
    CHECK(build_p_pairs(spec, 0) != nullptr);
  }
}

TEST_CASE("output shapes hold across the hyperparameter grids") {
  SplitMix64 rng(5);
  for (int L : {2, 4, 6, 8, 10}) {
    for (int n : {5, 10, 20, 30}) {
      PlainDnnNet net(L, n, 4, 1, 3);
      features::Sample s;
      s.time_features = {0.1, 0.2, 0.3, 0.0};
      CHECK(net.predict(s).size() == 1);
    }
  }
  for (int p : {5, 10, 20, 30}) {
    TwoLstmNet net(4, 8, 2, 16, 3);
    const auto s = window_sample(rng, p, p, 4);
    CHECK(net.predict(s).size() == 4);
  }
}

TEST_CASE("axis wiring: LSTM_t ignores interday input and vice versa") {
  SplitMix64 rng(8);
  PlainLstmNet lstm_t(6, LstmAxis::intraday, 4);
  PlainLstmNet lstm_d(6, LstmAxis::interday, 4);
  auto s = window_sample(rng, 5, 7, 1);
  const Vec yt = lstm_t.predict(s);
  const Vec yd = lstm_d.predict(s);
  auto s2 = s;
  for (auto& v : s2.interday) v += 0.5;
  CHECK(lstm_t.predict(s2) == yt);      // z-perturbation invisible to LSTM_t
  CHECK(lstm_d.predict(s2) != yd);
  auto s3 = s;
  for (auto& v : s3.intraday) v += 0.5;
  CHECK(lstm_d.predict(s3) == yd);
}

TEST_CASE("single-step windows are valid (p=1)") {
  SplitMix64 rng(10);
  PlainLstmNet net(4, LstmAxis::intraday, 9);
  auto s = window_sample(rng, 1, 1, 1);
  CHECK(net.predict(s).size() == 1);
  TwoLstmNet two(1, 4, 2, 8, 9);
  CHECK(two.predict(s).size() == 1);
}

TEST_CASE("zeroing the interday head columns silences the z branch") {
  SplitMix64 rng(12);
  TwoLstmNet net(1, 5, 2, 8, 21);
  // zero the columns of the first head layer that read the interday state
  neural::Dense& first = net.head()[0];
  for (int r = 0; r < first.out_size(); ++r)
    for (int c = 5; c < 10; ++c) first.W(r, c) = 0.0;
  auto s = window_sample(rng, 4, 6, 1);
  const Vec y = net.predict(s);
  auto s2 = s;
  for (auto& v : s2.interday) v = 1.0 - v;
  CHECK(net.predict(s2) == y);
}

TEST_CASE("2-LSTM reproduces LSTM_t when the head encodes its affine map") {
  // Copy the intraday branch parameters from a plain LSTM_t, then set the
  // 2-LSTM head to h -> w . h_y + b via a relu layer kept strictly positive.
  SplitMix64 rng(31);
  const int hidden = 4;
  PlainLstmNet reference(hidden, LstmAxis::intraday, 77);
  TwoLstmNet two(1, hidden, 2, 8, 78);

  auto copy_cell = [](const neural::LstmCell& from, neural::LstmCell& to) {
    to = from;
  };
  copy_cell(reference.cell(), two.intraday_cell());

  // head weights: row 0 of layer 1 carries w over the y-branch columns with a
  // large positive bias C; the output layer subtracts C and adds b.
  const neural::Dense& ref_head = reference.head();
  double C = 1.0;
  for (int c = 0; c < hidden; ++c) C += std::abs(ref_head.W(0, c));
  neural::Dense& l1 = two.head()[0];
  std::fill(l1.W.data.begin(), l1.W.data.end(), 0.0);
  std::fill(l1.b.begin(), l1.b.end(), 0.0);
  for (int c = 0; c < hidden; ++c) l1.W(0, c) = ref_head.W(0, c);
  l1.b[0] = C;  // pre-activation stays positive, relu is the identity here
  neural::Dense& l2 = two.head()[1];
  std::fill(l2.W.data.begin(), l2.W.data.end(), 0.0);
  l2.W(0, 0) = 1.0;
  l2.b[0] = ref_head.b[0] - C;

  for (int i = 0; i < 20; ++i) {
    auto s = window_sample(rng, 5, 3, 1);
    const double expect = reference.predict(s)[0];
    const double got = two.predict(s)[0];
    CHECK(std::abs(expect - got) < 1e-12);
  }
}

TEST_CASE("p-pairs predictions are equivariant for a symmetric parameterization") {
  // Identical input-weight columns and identical output rows make the model
  // symmetric under permuting pair columns together with output indices.
  const int p = 3, hidden = 4;
  TwoLstmNet net(p, hidden, 2, 6, 55);
  auto symmetrize_cell = [&](neural::LstmCell& cell) {
    for (neural::Matrix* m : {&cell.Wf, &cell.Wi, &cell.Wo, &cell.Wc})
      for (int r = 0; r < m->rows; ++r)
        for (int c = 1; c < m->cols; ++c) (*m)(r, c) = (*m)(r, 0);
  };
  symmetrize_cell(net.intraday_cell());
  symmetrize_cell(net.interday_cell());
  neural::Dense& out = net.head().back();
  for (int r = 1; r < out.out_size(); ++r) {
    for (int c = 0; c < out.in_size(); ++c) out.W(r, c) = out.W(0, c);
    out.b[r] = out.b[0];
  }

  SplitMix64 rng(66);
  auto s = window_sample(rng, 4, 4, p);
  const Vec y = net.predict(s);

  // permute pair columns (rotate left) in both windows
  auto rotate = [&](std::vector<double>& w, int steps) {
    for (int step = 0; step < steps; ++step) {
      const double first = w[static_cast<std::size_t>(step) * p];
      for (int i = 0; i < p - 1; ++i)
        w[static_cast<std::size_t>(step) * p + i] =
            w[static_cast<std::size_t>(step) * p + i + 1];
      w[static_cast<std::size_t>(step) * p + p - 1] = first;
    }
  };
  auto s2 = s;
  rotate(s2.intraday, 4);
  rotate(s2.interday, 4);
  const Vec y2 = net.predict(s2);
  // outputs permute the same way; with symmetric rows they are all equal
  for (int i = 0; i < p; ++i)
    CHECK(y2[(i + p - 1) % p] == doctest::Approx(y[i]).epsilon(1e-12));
}

TEST_CASE("p=2 pairs model: pair-2 history reaches output 1") {
  SplitMix64 rng(71);
  TwoLstmNet net(2, 4, 2, 6, 92);
  auto s = window_sample(rng, 5, 5, 2);
  const Vec y = net.predict(s);
  auto s2 = s;
  // perturb only pair 2's history (odd offsets within each step)
  for (std::size_t step = 0; step < 5; ++step) {
    s2.intraday[step * 2 + 1] += 0.3;
    s2.interday[step * 2 + 1] += 0.3;
  }
  const Vec y2 = net.predict(s2);
  CHECK(y2[0] != y[0]);  // shared branches propagate cross-pair information
}

TEST_CASE("uniform interface law: fit/predict is deterministic per family") {
  synth::SeasonalSpec sp;
  sp.days = 12;
  sp.T = 40;
  sp.base_level = 5e-4;
  sp.hump_amplitude = 2e-4;
  sp.phi = 0.4;
  sp.noise_sd = 1e-4;
  sp.seed = 5;
  const auto panel = synth::gen_seasonal_ar_panel(sp).panel;
  auto sp2 = sp;
  sp2.seed = 6;
  sp2.pair = "SYN2";
  const auto panel2 = synth::gen_seasonal_ar_panel(sp2).panel;

  ModelSpec spec;
  spec.hidden = 4;
  spec.head_width = 8;
  spec.p_t = spec.p_d = 3;
  spec.dnn_layers = 2;
  spec.dnn_width = 6;
  spec.train.max_epochs = 3;
  spec.train.patience = 3;
  spec.train.batch_size = 64;

  const features::DayRange train{2, 8}, val{8, 10};
  const std::vector<market::RangePanel> single = {panel};
  const std::vector<market::RangePanel> both = {panel, panel2};

  for (Family family : {Family::PlainDNN, Family::LSTM_t, Family::LSTM_D,
                        Family::TwoLSTM, Family::PPairsTwoLSTM}) {
    spec.family = family;
    spec.n_pairs = family == Family::PPairsTwoLSTM ? 2 : 1;
    const auto& panels = family == Family::PPairsTwoLSTM ? both : single;
    std::vector<features::Normalizer> norms;
    for (const auto& p : panels)
      norms.push_back(features::fit_normalizer(p, train));
    const auto train_set = assemble_samples(family, spec, panels, train, norms);
    const auto val_set = assemble_samples(family, spec, panels, val, norms);

    auto run = [&]() {
      auto net = build_network(spec, 11);
      auto tc = spec.train;
      tc.seed = 22;
      neural::train(*net, train_set, val_set, tc);
      Vec out;
      for (const auto& s : val_set.samples) {
        const Vec y = net->predict(s);
        out.insert(out.end(), y.begin(), y.end());
      }
      return out;
    };
    CHECK(run() == run());
  }
}

TEST_CASE("checkpoint round trip restores the exact function") {
  SplitMix64 rng(81);
  ModelSpec spec;
  spec.family = Family::TwoLSTM;
  spec.hidden = 5;
  spec.head_width = 8;
  spec.p_t = spec.p_d = 4;
  auto net = build_network(spec, 33);

  Checkpoint ckpt;
  ckpt.spec = spec;
  ckpt.pair_ids = {"EURUSD"};
  ckpt.normalizers = {features::Normalizer{1e-4, 9e-4}};
  ckpt.history.train_mse = {0.5, 0.4};
  ckpt.history.val_mse = {0.6, 0.5};
  ckpt.history.best_epoch = 2;
  ckpt.history.best_val_mse = 0.5;
  ckpt.params = net->pack_params();

  const auto restored = restore_network(checkpoint_from_json(
      checkpoint_to_json(ckpt)));
  for (int i = 0; i < 10; ++i) {
    auto s = window_sample(rng, 4, 4, 1);
    CHECK(restored->predict(s) == net->predict(s));
  }
}

TEST_CASE("tune_hyperparameters grids") {
  synth::SeasonalSpec sp;
  sp.days = 15;
  sp.T = 30;
  sp.base_level = 5e-4;
  sp.hump_amplitude = 3e-4;
  sp.phi = 0.3;
  sp.noise_sd = 1e-4;
  sp.seed = 3;
  const auto panel = synth::gen_seasonal_ar_panel(sp).panel;

  ModelSpec base;
  base.hidden = 3;
  base.head_width = 4;
  base.train.max_epochs = 2;
  base.train.patience = 2;
  base.train.batch_size = 128;

  const std::vector<TrainValRange> folds = {{{2, 9}, {9, 12}},
                                            {{5, 12}, {12, 15}}};

  SUBCASE("DNN grid table has |L| x |n| shape") {
    const auto table = tune_hyperparameters(Family::PlainDNN, base, {2, 4},
                                            {5, 10}, {panel}, folds, 1);
    CHECK(table.row_labels.size() == 2);
    CHECK(table.col_labels.size() == 2);
    CHECK(table.cells.size() == 2);
    CHECK(table.cells[0].size() == 2);
    CHECK(table.best_row >= 0);
    const std::string csv = table.to_csv();
    CHECK(csv.rfind("L,5,10\n", 0) == 0);
  }
  SUBCASE("LSTM grid is a single row over p") {
    const auto table = tune_hyperparameters(Family::LSTM_t, base, {2, 3}, {},
                                            {panel}, folds, 1);
    CHECK(table.row_labels == std::vector<std::string>{"LSTM_t"});
    CHECK(table.col_labels.size() == 2);
    const auto spec = spec_for_cell(Family::LSTM_t, base, table, 0, 1);
    CHECK(spec.p_t == 3);
    CHECK(spec.p_d == 3);
  }
  SUBCASE("singleton grid returns that spec with a measured MSE") {
    const auto table = tune_hyperparameters(Family::TwoLSTM, base, {2}, {},
                                            {panel}, folds, 1);
    CHECK(table.col_labels == std::vector<std::string>{"2"});
    CHECK(!table.cells[0][0].failed);
    CHECK(table.cells[0][0].fold_mse.size() == 2);
    CHECK(table.best_col == 0);
  }
}

TEST_CASE("tuning prefers the longer lag on long-memory data") {
  synth::SeasonalSpec sp;
  sp.days = 40;
  sp.T = 100;
  sp.base_level = 5e-4;
  sp.phi = 0.7;
  sp.intraday_lag = 8;  // dependence invisible to a 1-lag window
  sp.noise_sd = 1e-4;
  sp.seed = 12;
  const auto panel = synth::gen_seasonal_ar_panel(sp).panel;

  ModelSpec base;
  base.hidden = 8;
  base.head_width = 8;
  base.train.learning_rate = 5e-3;
  base.train.batch_size = 256;
  base.train.max_epochs = 30;
  base.train.patience = 30;
  const std::vector<TrainValRange> folds = {{{8, 28}, {28, 36}}};
  const auto table = tune_hyperparameters(Family::LSTM_t, base, {1, 8}, {},
                                          {panel}, folds, 1);
  CHECK(table.cells[0][1].mean <= table.cells[0][0].mean);
  CHECK(table.best_col == 1);
}

TEST_CASE("family names round trip") {
  for (Family f : {Family::AR, Family::GARCH, Family::PlainDNN, Family::LSTM_t,
                   Family::LSTM_D, Family::TwoLSTM, Family::PPairsTwoLSTM})
    CHECK(family_from_name(family_name(f)) == f);
  CHECK_THROWS_AS(family_from_name("nope"), SpecError);
}
