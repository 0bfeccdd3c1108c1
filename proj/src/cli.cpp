#include "rangecast/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "rangecast/analysis.hpp"
#include "rangecast/baselines.hpp"
#include "rangecast/evaluation.hpp"
#include "rangecast/io_util.hpp"
#include "rangecast/market_data.hpp"
#include "rangecast/model_zoo.hpp"
#include "rangecast/synth.hpp"
#include "serialize.hpp"

namespace rangecast::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct PairConfig {
  std::string id;
  std::string file;
  market::BarFormat format = market::BarFormat::canonical_csv;
};

struct RunConfig {
  std::string config_path;
  json raw;  // snapshot for manifests
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  double min_coverage = 0.8;
  int timezone_offset = 0;
  int jobs = 1;
  std::vector<PairConfig> pairs;

  int split_k = 3;
  double train_ratio = 0.6, val_ratio = 0.3;

  int acf_max_lag = 60;
  int interday_minute = 0;
  int interday_max_lag = 20;
  std::vector<int> cross_lags = {0, 1, 2, 4, 8};

  std::vector<zoo::Family> families;
  json models;  // defaults + per-family overrides

  std::vector<int> dnn_layers_grid = {2, 4, 6, 8, 10};
  std::vector<int> dnn_width_grid = {5, 10, 20, 30};
  std::vector<int> lstm_p_grid = {5, 10, 20, 30};
  std::vector<zoo::Family> tune_families;

  std::vector<int> sensitivity_grid = {5, 10, 20, 30};
};

market::BarFormat format_from_name(const std::string& name) {
  if (name == "canonical_csv") return market::BarFormat::canonical_csv;
  if (name == "histdata_ascii") return market::BarFormat::histdata_ascii;
  throw UsageError("unknown format '" + name + "'");
}

RunConfig load_config(const std::string& path, const std::string& out_flag,
                      std::uint64_t seed_flag, bool seed_set, int jobs,
                      const std::vector<std::string>& pair_filter,
                      const std::string& format_flag) {
  if (path.empty()) throw UsageError("--config is required");
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  RunConfig cfg;
  cfg.config_path = path;
  try {
    cfg.raw = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw DataError(std::string("config parse error: ") + e.what());
  }
  const json& j = cfg.raw;
  cfg.seed = seed_set ? seed_flag : j.value("seed", std::uint64_t{0});
  cfg.jobs = jobs > 0 ? jobs : 1;

  if (!out_flag.empty())
    cfg.output_dir = out_flag;
  else if (j.contains("output_dir"))
    cfg.output_dir = j.at("output_dir").get<std::string>();
  else if (const char* env = std::getenv("RANGECAST_OUT"); env && *env)
    cfg.output_dir = env;

  cfg.min_coverage = j.value("min_coverage", cfg.min_coverage);
  cfg.timezone_offset = j.value("timezone_offset_minutes", cfg.timezone_offset);

  if (!j.contains("pairs") || j.at("pairs").empty())
    throw DataError("config lists no pairs");
  std::map<std::string, bool> seen;
  for (const auto& p : j.at("pairs")) {
    PairConfig pc;
    pc.id = p.at("id").get<std::string>();
    pc.file = p.at("file").get<std::string>();
    pc.format = format_from_name(
        !format_flag.empty() ? format_flag
                             : p.value("format", std::string("canonical_csv")));
    if (seen[pc.id]) throw DataError("duplicate pair id '" + pc.id + "'");
    seen[pc.id] = true;
    if (!pair_filter.empty()) {
      bool keep = false;
      for (const auto& want : pair_filter) keep = keep || want == pc.id;
      if (!keep) continue;
    }
    cfg.pairs.push_back(std::move(pc));
  }
  if (cfg.pairs.empty()) throw UsageError("--pair filter matched nothing");

  if (j.contains("splits")) {
    const json& s = j.at("splits");
    cfg.split_k = s.value("k", cfg.split_k);
    cfg.train_ratio = s.value("train_ratio", cfg.train_ratio);
    cfg.val_ratio = s.value("val_ratio", cfg.val_ratio);
  }
  if (j.contains("analysis")) {
    const json& a = j.at("analysis");
    cfg.acf_max_lag = a.value("acf_max_lag", cfg.acf_max_lag);
    cfg.interday_minute = a.value("interday_minute", cfg.interday_minute);
    cfg.interday_max_lag = a.value("interday_max_lag", cfg.interday_max_lag);
    if (a.contains("cross_lags"))
      cfg.cross_lags = a.at("cross_lags").get<std::vector<int>>();
  }
  cfg.models = j.value("models", json::object());
  if (cfg.models.contains("families")) {
    for (const auto& f : cfg.models.at("families"))
      cfg.families.push_back(zoo::family_from_name(f.get<std::string>()));
  } else {
    cfg.families = {zoo::Family::AR,       zoo::Family::GARCH,
                    zoo::Family::PlainDNN, zoo::Family::LSTM_t,
                    zoo::Family::LSTM_D,   zoo::Family::TwoLSTM,
                    zoo::Family::PPairsTwoLSTM};
  }
  if (j.contains("tune")) {
    const json& t = j.at("tune");
    if (t.contains("dnn_layers"))
      cfg.dnn_layers_grid = t.at("dnn_layers").get<std::vector<int>>();
    if (t.contains("dnn_width"))
      cfg.dnn_width_grid = t.at("dnn_width").get<std::vector<int>>();
    if (t.contains("lstm_p"))
      cfg.lstm_p_grid = t.at("lstm_p").get<std::vector<int>>();
    if (t.contains("families"))
      for (const auto& f : t.at("families"))
        cfg.tune_families.push_back(
            zoo::family_from_name(f.get<std::string>()));
  }
  if (j.contains("sensitivity") && j.at("sensitivity").contains("p_grid"))
    cfg.sensitivity_grid =
        j.at("sensitivity").at("p_grid").get<std::vector<int>>();
  return cfg;
}

// Family hyperparameters: models.defaults overlaid with models.<family>.
zoo::ModelSpec spec_for(const RunConfig& cfg, zoo::Family family) {
  json merged = cfg.models.value("defaults", json::object());
  const std::string name = zoo::family_name(family);
  if (cfg.models.contains(name))
    for (const auto& [key, value] : cfg.models.at(name).items())
      merged[key] = value;
  merged["family"] = name;
  zoo::ModelSpec spec = zoo::spec_from_json(merged);
  if (family == zoo::Family::PPairsTwoLSTM)
    spec.n_pairs = static_cast<int>(cfg.pairs.size());
  return spec;
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

struct Manifest {
  std::string command;
  std::uint64_t seed;
  json config;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, hash
  std::vector<std::string> outputs;
};

void write_manifest(const RunConfig& cfg, Manifest m) {
  json j;
  j["command"] = m.command;
  j["version"] = kVersion;
  j["seed"] = m.seed;
  j["config"] = m.config;
  json inputs = json::array();
  for (const auto& [path, hash] : m.inputs)
    inputs.push_back({{"path", path}, {"hash", hash}});
  j["inputs"] = std::move(inputs);
  j["outputs"] = m.outputs;
  write_file_atomic(
      (fs::path(cfg.output_dir) / m.command / "manifest.json").string(),
      j.dump(2) + "\n");
}

std::string out_path(const RunConfig& cfg, const std::string& command,
                     const std::string& name) {
  return (fs::path(cfg.output_dir) / command / name).string();
}

// ---------------------------------------------------------------------------
// Shared loading helpers
// ---------------------------------------------------------------------------

std::string panel_path(const RunConfig& cfg, const std::string& pair_id) {
  return out_path(cfg, "ingest", pair_id + ".panel.json");
}

// Hash of a prerequisite artifact; missing files are usage errors that name
// the producing command.
std::string hash_artifact(const std::string& path, const char* producer) {
  if (!fs::exists(path))
    throw UsageError("missing artifact " + path + "; run `rangecast " +
                     producer + "` first");
  return hash_file(path);
}

market::RangePanel load_panel(const RunConfig& cfg, const std::string& pair_id) {
  const std::string path = panel_path(cfg, pair_id);
  if (!fs::exists(path))
    throw UsageError("missing panel artifact " + path +
                     "; run `rangecast ingest` first");
  return market::panel_from_json(read_text_file(path));
}

std::vector<market::RangePanel> load_all_panels(const RunConfig& cfg) {
  std::vector<market::RangePanel> panels;
  for (const auto& pc : cfg.pairs) panels.push_back(load_panel(cfg, pc.id));
  return panels;
}

std::vector<eval::FoldSplit> splits_for(const RunConfig& cfg,
                                        const market::RangePanel& panel) {
  return eval::blocked_splits(panel.n_days(), cfg.split_k, cfg.train_ratio,
                              cfg.val_ratio);
}

void run_jobs(int jobs, std::vector<std::function<void()>> work) {
  if (jobs <= 1) {
    for (auto& fn : work) fn();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= work.size()) return;
      try {
        work[i]();
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.raw.contains("synth")) throw UsageError("config has no synth block");
  const json& s = cfg.raw.at("synth");

  synth::SeasonalSpec factor;
  factor.days = s.value("days", 30);
  factor.T = s.value("T", market::kMinutesPerDay);
  factor.base_level = s.value("base_level", 5e-4);
  factor.hump_amplitude = s.value("hump_amplitude", 0.0);
  factor.phi = s.value("phi", 0.0);
  factor.psi = s.value("psi", 0.0);
  factor.intraday_lag = s.value("intraday_lag", 1);
  factor.noise_sd = s.value("noise_sd", 0.0);
  factor.seed = cfg.seed;
  if (s.contains("spikes"))
    for (const auto& spike : s.at("spikes"))
      factor.spikes.push_back(
          {spike.at(0).get<int>(), spike.at(1).get<double>()});

  synth::MultiPairSpec mp;
  mp.factor = factor;
  for (const auto& pc : cfg.pairs) mp.pair_ids.push_back(pc.id);
  if (s.contains("loadings"))
    mp.loadings = s.at("loadings").get<std::vector<double>>();
  else
    mp.loadings.assign(cfg.pairs.size(), 1.0);
  if (mp.loadings.size() != cfg.pairs.size())
    throw DataError("synth.loadings must match the pair count");
  mp.idio_sd = s.value("idio_sd", 0.3);
  const double base_price = s.value("base_price", 1.2);

  const auto panels = synth::gen_multi_pair(mp);

  Manifest m{"synth", cfg.seed, cfg.raw, {}, {}};
  for (std::size_t i = 0; i < cfg.pairs.size(); ++i) {
    const auto bars =
        synth::panel_to_bars(panels.panels[i], base_price,
                             SplitMix64::derive(cfg.seed, 0xBA5ull + i));
    const std::string name = cfg.pairs[i].id + ".csv";
    write_file_atomic(out_path(cfg, "synth", name),
                      synth::bars_to_canonical_csv(bars));
    m.outputs.push_back(name);
  }
  json latents;
  latents["seasonal"] = panels.seasonal;
  latents["truncated"] = panels.truncated;
  write_file_atomic(out_path(cfg, "synth", "latents.json"),
                    latents.dump() + "\n");
  m.outputs.push_back("latents.json");
  m.inputs.push_back({cfg.config_path, hash_file(cfg.config_path)});
  write_manifest(cfg, std::move(m));
  out << "synth: wrote " << cfg.pairs.size() << " pair file(s) under "
      << cfg.output_dir << "/synth\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig& cfg, std::ostream& out) {
  Manifest m{"ingest", cfg.seed, cfg.raw, {}, {}};
  m.inputs.push_back({cfg.config_path, hash_file(cfg.config_path)});
  json diagnostics;
  for (const auto& pc : cfg.pairs) {
    if (!fs::exists(pc.file))
      throw DataError("input file does not exist: " + pc.file);
    m.inputs.push_back({pc.file, hash_file(pc.file)});
    const auto parsed = market::parse_bars(read_text_file(pc.file), pc.format);
    market::PanelDiagnostics diag;
    const auto panel =
        market::build_panel(parsed.bars, pc.id, cfg.min_coverage, &diag);

    write_file_atomic(out_path(cfg, "ingest", pc.id + ".panel.json"),
                      market::panel_to_json(panel));
    write_file_atomic(out_path(cfg, "ingest", pc.id + ".panel.csv"),
                      market::panel_to_csv(panel));
    m.outputs.push_back(pc.id + ".panel.json");
    m.outputs.push_back(pc.id + ".panel.csv");

    json d;
    d["bars"] = parsed.bars.size();
    d["rejected"] = json::array();
    for (const auto& r : parsed.rejected)
      d["rejected"].push_back(
          {{"line", r.line_no}, {"content", r.line}, {"reason", r.reason}});
    d["dropped_days"] = json::array();
    for (const auto& dd : diag.dropped_days)
      d["dropped_days"].push_back({{"date", dd.date.to_string()},
                                   {"bars", dd.bars_observed},
                                   {"coverage", dd.coverage}});
    d["days_kept"] = panel.n_days();
    diagnostics[pc.id] = std::move(d);
  }
  write_file_atomic(out_path(cfg, "ingest", "diagnostics.json"),
                    diagnostics.dump(2) + "\n");
  m.outputs.push_back("diagnostics.json");
  write_manifest(cfg, std::move(m));
  out << "ingest: built " << cfg.pairs.size() << " panel(s)\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// analysis commands
// ---------------------------------------------------------------------------

// Minute labels shifted by the configured timezone offset; labeling only,
// stored panels keep the data timezone.
std::string labeled_profile_csv(const analysis::MinuteProfile& prof, int T,
                                int offset) {
  std::string csv = "minute,minute_label,mean,count\n";
  for (int t = 0; t < T; ++t) {
    const int label = ((t + offset) % T + T) % T;
    csv += std::to_string(t) + ',' + std::to_string(label) + ',';
    if (!std::isnan(prof.means[t])) csv += fmt_double(prof.means[t]);
    csv += ',' + std::to_string(prof.counts[t]) + '\n';
  }
  return csv;
}

int cmd_profile(const RunConfig& cfg, std::ostream& out) {
  Manifest m{"profile", cfg.seed, cfg.raw, {}, {}};
  m.inputs.push_back({cfg.config_path, hash_file(cfg.config_path)});
  json summary;
  for (const auto& pc : cfg.pairs) {
    m.inputs.push_back(
        {panel_path(cfg, pc.id), hash_artifact(panel_path(cfg, pc.id), "ingest")});
    const auto panel = load_panel(cfg, pc.id);
    const auto prof = analysis::minute_profile(panel);
    write_file_atomic(out_path(cfg, "profile", pc.id + ".minute_profile.csv"),
                      labeled_profile_csv(prof, panel.T, cfg.timezone_offset));
    m.outputs.push_back(pc.id + ".minute_profile.csv");

    const auto by_weekday = analysis::weekday_profiles(panel);
    write_file_atomic(out_path(cfg, "profile", pc.id + ".weekday_profiles.csv"),
                      analysis::weekday_profiles_to_csv(by_weekday));
    m.outputs.push_back(pc.id + ".weekday_profiles.csv");

    double grand = 0;
    std::size_t n = 0;
    for (int t = 0; t < panel.T; ++t)
      if (prof.counts[t] > 0) {
        grand += prof.means[t] * prof.counts[t];
        n += prof.counts[t];
      }
    summary[pc.id] = {{"days", panel.n_days()},
                      {"grand_mean", n ? grand / n : 0.0},
                      {"weekdays_present", by_weekday.size()}};
  }
  write_file_atomic(out_path(cfg, "profile", "summary.json"),
                    summary.dump(2) + "\n");
  m.outputs.push_back("summary.json");
  write_manifest(cfg, std::move(m));
  out << "profile: done\n";
  return kOk;
}

int cmd_acf(const RunConfig& cfg, std::ostream& out) {
  Manifest m{"acf", cfg.seed, cfg.raw, {}, {}};
  m.inputs.push_back({cfg.config_path, hash_file(cfg.config_path)});
  json summary;
  for (const auto& pc : cfg.pairs) {
    m.inputs.push_back(
        {panel_path(cfg, pc.id), hash_artifact(panel_path(cfg, pc.id), "ingest")});
    const auto panel = load_panel(cfg, pc.id);
    const auto intra = analysis::intraday_acf(panel, cfg.acf_max_lag);
    write_file_atomic(out_path(cfg, "acf", pc.id + ".intraday_acf.csv"),
                      analysis::acf_to_csv(intra));
    const auto inter = analysis::interday_acf(panel, cfg.interday_minute,
                                              cfg.interday_max_lag);
    write_file_atomic(out_path(cfg, "acf", pc.id + ".interday_acf.csv"),
                      analysis::acf_to_csv(inter));
    m.outputs.push_back(pc.id + ".intraday_acf.csv");
    m.outputs.push_back(pc.id + ".interday_acf.csv");
    summary[pc.id] = {
        {"intraday_lag1", intra.values.size() > 1 ? intra.values[1] : 0.0},
        {"interday_minute", cfg.interday_minute}};
  }
  write_file_atomic(out_path(cfg, "acf", "summary.json"),
                    summary.dump(2) + "\n");
  m.outputs.push_back("summary.json");
  write_manifest(cfg, std::move(m));
  out << "acf: done\n";
  return kOk;
}

int cmd_crosscorr(const RunConfig& cfg, std::ostream& out) {
  if (cfg.pairs.size() < 2) throw UsageError("crosscorr needs at least 2 pairs");
  Manifest m{"crosscorr", cfg.seed, cfg.raw, {}, {}};
  m.inputs.push_back({cfg.config_path, hash_file(cfg.config_path)});
  for (const auto& pc : cfg.pairs)
    m.inputs.push_back(
        {panel_path(cfg, pc.id), hash_artifact(panel_path(cfg, pc.id), "ingest")});
  const auto aligned = market::align_panels(load_all_panels(cfg));
  const auto cc = analysis::cross_pair_correlation(aligned, cfg.cross_lags);
  std::vector<std::string> ids;
  for (const auto& p : aligned) ids.push_back(p.pair);
  write_file_atomic(out_path(cfg, "crosscorr", "cross_correlation.csv"),
                    analysis::cross_correlation_to_csv(cc, ids));
  m.outputs.push_back("cross_correlation.csv");
  json summary;
  summary["lags"] = cc.lags;
  summary["common_days"] = aligned[0].n_days();
  write_file_atomic(out_path(cfg, "crosscorr", "summary.json"),
                    summary.dump(2) + "\n");
  m.outputs.push_back("summary.json");
  write_manifest(cfg, std::move(m));
  out << "crosscorr: done\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// tune / train / evaluate
// ---------------------------------------------------------------------------

int cmd_tune(const RunConfig& cfg, std::ostream& out) {
  Manifest m{"tune", cfg.seed, cfg.raw, {}, {}};
  m.inputs.push_back({cfg.config_path, hash_file(cfg.config_path)});
  for (const auto& pc : cfg.pairs)
    m.inputs.push_back(
        {panel_path(cfg, pc.id), hash_artifact(panel_path(cfg, pc.id), "ingest")});
  const auto panels = load_all_panels(cfg);

  // AR order per pair on the first fold's train/validation days.
  json ar_orders;
  const zoo::ModelSpec ar_spec = spec_for(cfg, zoo::Family::AR);
  std::string ar_csv = "pair,order";
  for (int o : ar_spec.ar_order_grid) ar_csv += ",mse_p" + std::to_string(o);
  ar_csv += '\n';
  for (std::size_t i = 0; i < panels.size(); ++i) {
    const auto splits = splits_for(cfg, panels[i]);
    const auto choice = baselines::tune_ar_order(
        panels[i], ar_spec.ar_order_grid, splits[0].train, splits[0].val);
    ar_orders[cfg.pairs[i].id] = choice.order;
    ar_csv += cfg.pairs[i].id + ',' + std::to_string(choice.order);
    for (double v : choice.validation_mse)
      ar_csv += ',' + (std::isnan(v) ? std::string() : fmt_double(v));
    ar_csv += '\n';
  }
  write_file_atomic(out_path(cfg, "tune", "ar_orders.json"),
                    ar_orders.dump(2) + "\n");
  write_file_atomic(out_path(cfg, "tune", "ar_grid.csv"), ar_csv);
  m.outputs.push_back("ar_orders.json");
  m.outputs.push_back("ar_grid.csv");

  const auto base_splits = splits_for(cfg, panels[0]);
  std::vector<zoo::TrainValRange> folds;
  for (const auto& s : base_splits) folds.push_back({s.train, s.val});
  for (zoo::Family family : cfg.tune_families) {
    const zoo::ModelSpec base = spec_for(cfg, family);
    zoo::GridTable table;
    if (family == zoo::Family::PlainDNN)
      table =
          zoo::tune_hyperparameters(family, base, cfg.dnn_layers_grid,
                                    cfg.dnn_width_grid, panels, folds, cfg.seed);
    else
      table = zoo::tune_hyperparameters(family, base, cfg.lstm_p_grid, {},
                                        panels, folds, cfg.seed);
    const std::string name = zoo::family_name(family) + "_grid.csv";
    write_file_atomic(out_path(cfg, "tune", name), table.to_csv());
    m.outputs.push_back(name);
  }
  write_manifest(cfg, std::move(m));
  out << "tune: done\n";
  return kOk;
}

std::string checkpoint_name(zoo::Family family, const std::string& scope,
                            int fold) {
  return zoo::family_name(family) + "." + scope + ".fold" +
         std::to_string(fold) + ".json";
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  Manifest m{"train", cfg.seed, cfg.raw, {}, {}};
  m.inputs.push_back({cfg.config_path, hash_file(cfg.config_path)});
  for (const auto& pc : cfg.pairs)
    m.inputs.push_back(
        {panel_path(cfg, pc.id), hash_artifact(panel_path(cfg, pc.id), "ingest")});
  const auto panels = load_all_panels(cfg);
  const auto splits = splits_for(cfg, panels[0]);

  std::vector<std::function<void()>> work;
  std::mutex outputs_mutex;
  int trained = 0;
  for (zoo::Family family : cfg.families) {
    if (!zoo::is_neural(family)) continue;
    const zoo::ModelSpec spec = spec_for(cfg, family);
    if (family == zoo::Family::PPairsTwoLSTM) {
      for (const auto& split : splits) {
        ++trained;
        work.push_back([&, spec, split]() {
          const auto ckpt = eval::train_fold(
              spec, panels, split,
              SplitMix64::derive(cfg.seed, 0x77Aull + split.fold));
          const std::string name =
              checkpoint_name(spec.family, "joint", split.fold);
          write_file_atomic(out_path(cfg, "train", name),
                            zoo::checkpoint_to_json(ckpt));
          std::lock_guard<std::mutex> lock(outputs_mutex);
          m.outputs.push_back(name);
        });
      }
    } else {
      for (std::size_t i = 0; i < panels.size(); ++i) {
        for (const auto& split : splits) {
          ++trained;
          work.push_back([&, spec, split, i]() {
            const std::vector<market::RangePanel> sub = {panels[i]};
            const auto ckpt = eval::train_fold(
                spec, sub, split,
                SplitMix64::derive(cfg.seed, 0x77Aull * 31 + i * 7 + split.fold));
            const std::string name =
                checkpoint_name(spec.family, cfg.pairs[i].id, split.fold);
            write_file_atomic(out_path(cfg, "train", name),
                              zoo::checkpoint_to_json(ckpt));
            std::lock_guard<std::mutex> lock(outputs_mutex);
            m.outputs.push_back(name);
          });
        }
      }
    }
  }
  run_jobs(cfg.jobs, std::move(work));
  std::sort(m.outputs.begin(), m.outputs.end());
  write_manifest(cfg, std::move(m));
  out << "train: wrote " << trained << " checkpoint(s)\n";
  return kOk;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
  Manifest m{"evaluate", cfg.seed, cfg.raw, {}, {}};
  m.inputs.push_back({cfg.config_path, hash_file(cfg.config_path)});
  for (const auto& pc : cfg.pairs)
    m.inputs.push_back(
        {panel_path(cfg, pc.id), hash_artifact(panel_path(cfg, pc.id), "ingest")});
  const auto panels = load_all_panels(cfg);
  const auto splits = splits_for(cfg, panels[0]);

  json mse_summary;
  auto record_result = [&](const eval::EvalResult& result) {
    const std::string fam = zoo::family_name(result.family);
    for (std::size_t i = 0; i < result.pair_ids.size(); ++i) {
      json entry;
      entry["mean"] = result.mean_by_pair[i];
      entry["std"] = result.std_by_pair[i];
      entry["folds"] = result.mse_by_pair[i];
      mse_summary[fam][result.pair_ids[i]] = std::move(entry);
    }
    for (const auto& fe : result.folds) {
      for (std::size_t i = 0; i < result.pair_ids.size(); ++i) {
        std::vector<eval::PredictionRecord> mine;
        for (const auto& r : fe.records)
          if (r.pair == static_cast<int>(i)) mine.push_back(r);
        const std::string name = fam + "." + result.pair_ids[i] + ".fold" +
                                 std::to_string(fe.fold) + ".errors.csv";
        write_file_atomic(out_path(cfg, "evaluate", name),
                          eval::records_to_csv(mine, panels[i].days));
        m.outputs.push_back(name);
      }
    }
    if (!result.fitted.empty()) {
      json fitted = json::array();
      for (const auto& fp : result.fitted) {
        json p;
        p["model"] = fp.model;
        p["pair"] = result.pair_ids[fp.pair];
        p["fold"] = fp.fold;
        json params;
        for (std::size_t k = 0; k < fp.names.size(); ++k)
          params[fp.names[k]] = fp.values[k];
        p["params"] = std::move(params);
        if (!fp.optimizer.empty()) {
          p["optimizer"] = fp.optimizer;
          p["likelihood_trace_summary"] = {{"length", fp.trace_length},
                                           {"first", fp.trace_first},
                                           {"last", fp.trace_last},
                                           {"final_loglik", fp.final_loglik}};
        }
        fitted.push_back(std::move(p));
      }
      const std::string name = fam + ".params.json";
      write_file_atomic(out_path(cfg, "evaluate", name),
                        fitted.dump(2) + "\n");
      m.outputs.push_back(name);
    }
  };

  for (zoo::Family family : cfg.families) {
    const zoo::ModelSpec spec = spec_for(cfg, family);
    if (family == zoo::Family::AR) {
      record_result(eval::evaluate_family(spec, panels, splits, cfg.seed));
    } else if (family == zoo::Family::GARCH) {
      std::vector<std::vector<market::MinuteBar>> bars;
      for (const auto& pc : cfg.pairs) {
        if (!fs::exists(pc.file))
          throw DataError("input file does not exist: " + pc.file);
        m.inputs.push_back({pc.file, hash_file(pc.file)});
        bars.push_back(
            market::parse_bars(read_text_file(pc.file), pc.format).bars);
      }
      record_result(eval::evaluate_garch(spec, panels, bars, splits));
    } else if (family == zoo::Family::PPairsTwoLSTM) {
      eval::EvalResult result;
      result.family = family;
      for (const auto& pc : cfg.pairs) result.pair_ids.push_back(pc.id);
      for (const auto& split : splits) {
        const std::string name = checkpoint_name(family, "joint", split.fold);
        const std::string path = out_path(cfg, "train", name);
        if (!fs::exists(path))
          throw UsageError("missing checkpoint " + path +
                           "; run `rangecast train` first");
        m.inputs.push_back({path, hash_file(path)});
        const auto ckpt = zoo::checkpoint_from_json(read_text_file(path));
        const auto net = zoo::restore_network(ckpt);
        auto fe = eval::predict_test_fold(*net, ckpt.spec, panels,
                                          ckpt.normalizers, split);
        fe.fold = split.fold;
        result.folds.push_back(std::move(fe));
      }
      eval::finalize_result(result);
      record_result(result);
    } else {
      eval::EvalResult result;
      result.family = family;
      for (const auto& pc : cfg.pairs) result.pair_ids.push_back(pc.id);
      for (const auto& split : splits) {
        eval::FoldEval fe;
        fe.fold = split.fold;
        for (std::size_t i = 0; i < panels.size(); ++i) {
          const std::string name =
              checkpoint_name(family, cfg.pairs[i].id, split.fold);
          const std::string path = out_path(cfg, "train", name);
          if (!fs::exists(path))
            throw UsageError("missing checkpoint " + path +
                             "; run `rangecast train` first");
          m.inputs.push_back({path, hash_file(path)});
          const auto ckpt = zoo::checkpoint_from_json(read_text_file(path));
          const auto net = zoo::restore_network(ckpt);
          const std::vector<market::RangePanel> sub = {panels[i]};
          const auto one = eval::predict_test_fold(*net, ckpt.spec, sub,
                                                   ckpt.normalizers, split);
          for (eval::PredictionRecord r : one.records) {
            r.pair = static_cast<int>(i);
            fe.records.push_back(r);
          }
        }
        fe.n = fe.records.size();
        fe.mse = eval::mse_of(fe.records);
        result.folds.push_back(std::move(fe));
      }
      eval::finalize_result(result);
      record_result(result);
    }
  }
  write_file_atomic(out_path(cfg, "evaluate", "mse_summary.json"),
                    mse_summary.dump(2) + "\n");
  m.outputs.push_back("mse_summary.json");
  write_manifest(cfg, std::move(m));
  out << "evaluate: done\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// dmtest / sensitivity / report
// ---------------------------------------------------------------------------

int cmd_dmtest(const RunConfig& cfg, std::ostream& out) {
  Manifest m{"dmtest", cfg.seed, cfg.raw, {}, {}};
  m.inputs.push_back({cfg.config_path, hash_file(cfg.config_path)});

  json summary;
  for (const auto& pc : cfg.pairs) {
    std::vector<std::string> names;
    std::vector<std::vector<eval::PredictionRecord>> records;
    for (zoo::Family family : cfg.families) {
      const std::string fam = zoo::family_name(family);
      std::vector<eval::PredictionRecord> all;
      bool complete = true;
      // record days are absolute date numbers and folds are disjoint in
      // time, so concatenating keeps (day, minute) keys unique
      for (int fold = 0; fold < cfg.split_k; ++fold) {
        const std::string name =
            fam + "." + pc.id + ".fold" + std::to_string(fold) + ".errors.csv";
        const std::string path = out_path(cfg, "evaluate", name);
        if (!fs::exists(path)) {
          complete = false;
          break;
        }
        m.inputs.push_back({path, hash_file(path)});
        auto some = eval::records_from_csv(read_text_file(path));
        all.insert(all.end(), some.begin(), some.end());
      }
      if (!complete || all.empty()) continue;
      names.push_back(fam);
      records.push_back(std::move(all));
    }
    if (names.size() < 2)
      throw UsageError(
          "dmtest needs evaluated error files for >= 2 models; run "
          "`rangecast evaluate` first");
    const auto cells = eval::dm_matrix(names, records);
    write_file_atomic(out_path(cfg, "dmtest", pc.id + ".dm_matrix.csv"),
                      eval::dm_matrix_to_csv(cells));
    m.outputs.push_back(pc.id + ".dm_matrix.csv");
    int significant = 0;
    for (const auto& c : cells)
      if (c.result.significant_5pct) ++significant;
    summary[pc.id] = {{"cells", cells.size()}, {"significant", significant}};
  }
  write_file_atomic(out_path(cfg, "dmtest", "summary.json"),
                    summary.dump(2) + "\n");
  m.outputs.push_back("summary.json");
  write_manifest(cfg, std::move(m));
  out << "dmtest: done\n";
  return kOk;
}

int cmd_sensitivity(const RunConfig& cfg, std::ostream& out) {
  if (cfg.pairs.size() < 2)
    throw UsageError("sensitivity sweeps the pairs model; need >= 2 pairs");
  Manifest m{"sensitivity", cfg.seed, cfg.raw, {}, {}};
  m.inputs.push_back({cfg.config_path, hash_file(cfg.config_path)});
  for (const auto& pc : cfg.pairs)
    m.inputs.push_back(
        {panel_path(cfg, pc.id), hash_artifact(panel_path(cfg, pc.id), "ingest")});
  const auto panels = load_all_panels(cfg);
  const auto splits = splits_for(cfg, panels[0]);
  const zoo::ModelSpec base = spec_for(cfg, zoo::Family::PPairsTwoLSTM);
  const auto curves = eval::sensitivity_sweep(base, cfg.sensitivity_grid,
                                              panels, splits, cfg.seed);
  write_file_atomic(out_path(cfg, "sensitivity", "sensitivity.csv"),
                    eval::sensitivity_to_csv(curves));
  m.outputs.push_back("sensitivity.csv");
  write_manifest(cfg, std::move(m));
  out << "sensitivity: done\n";
  return kOk;
}

int cmd_report(const RunConfig& cfg, std::ostream& out) {
  // Verify every prior manifest's recorded input hashes before aggregating.
  json verified = json::object();
  for (const auto& entry : fs::directory_iterator(cfg.output_dir)) {
    if (!entry.is_directory()) continue;
    const fs::path manifest_path = entry.path() / "manifest.json";
    if (!fs::exists(manifest_path)) continue;
    const json manifest = json::parse(read_text_file(manifest_path.string()));
    if (manifest.at("command") == "report") continue;
    for (const auto& input : manifest.at("inputs")) {
      const std::string path = input.at("path").get<std::string>();
      const std::string recorded = input.at("hash").get<std::string>();
      if (!fs::exists(path))
        throw DataError("manifest input vanished: " + path);
      const std::string current = hash_file(path);
      if (current != recorded)
        throw DataError("input hash mismatch for " + path + " (recorded " +
                        recorded + ", current " + current + ")");
    }
    verified[manifest.at("command").get<std::string>()] =
        manifest.at("outputs").size();
  }

  const std::string mse_path = out_path(cfg, "evaluate", "mse_summary.json");
  if (!fs::exists(mse_path))
    throw UsageError("missing " + mse_path + "; run `rangecast evaluate` first");
  const json mse = json::parse(read_text_file(mse_path));

  // rows = model families, columns = pairs, cells mean +- std
  std::string table = "model";
  for (const auto& pc : cfg.pairs) table += ',' + pc.id;
  table += '\n';
  for (zoo::Family family : cfg.families) {
    const std::string fam = zoo::family_name(family);
    if (!mse.contains(fam)) continue;
    table += fam;
    for (const auto& pc : cfg.pairs) {
      table += ',';
      if (mse.at(fam).contains(pc.id)) {
        const auto& cell = mse.at(fam).at(pc.id);
        table += fmt_double(cell.at("mean").get<double>()) + "±" +
                 fmt_double(cell.at("std").get<double>());
      }
    }
    table += '\n';
  }

  Manifest m{"report", cfg.seed, cfg.raw, {}, {}};
  m.inputs.push_back({cfg.config_path, hash_file(cfg.config_path)});
  m.inputs.push_back({mse_path, hash_file(mse_path)});
  write_file_atomic(out_path(cfg, "report", "mse_table.csv"), table);
  m.outputs.push_back("mse_table.csv");

  json report;
  report["verified_manifests"] = verified;
  report["mse"] = mse;
  for (const char* extra : {"dmtest/summary.json", "acf/summary.json",
                            "profile/summary.json", "crosscorr/summary.json"}) {
    const std::string path = (fs::path(cfg.output_dir) / extra).string();
    if (fs::exists(path)) {
      const std::string key = fs::path(extra).parent_path().string();
      report[key] = json::parse(read_text_file(path));
    }
  }
  write_file_atomic(out_path(cfg, "report", "report.json"),
                    report.dump(2) + "\n");
  m.outputs.push_back("report.json");
  write_manifest(cfg, std::move(m));
  out << "report: aggregated " << verified.size() << " stage(s)\n";
  return kOk;
}

json error_json(const std::string& type, const std::string& message) {
  json j;
  j["error"] = {{"type", type}, {"message", message}};
  return j;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"intraday FX log-range forecasting pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, format;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  std::vector<std::string> pair_filter;

  const std::vector<std::string> commands = {
      "ingest",   "profile", "acf",         "crosscorr", "tune",  "train",
      "evaluate", "dmtest",  "sensitivity", "synth",     "report"};
  for (const auto& name : commands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "run configuration JSON");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "master seed override")
        ->each([&seed_set](const std::string&) { seed_set = true; });
    sub->add_option("--jobs", jobs, "worker threads for independent jobs");
    sub->add_option("--pair", pair_filter, "restrict to these pair ids");
    sub->add_option("--format", format,
                    "input format override {canonical_csv,histdata_ascii}");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << error_json("usage", e.what()).dump() << "\n";
    return kUsage;
  }

  try {
    const RunConfig cfg = load_config(config_path, out_dir, seed, seed_set,
                                      jobs, pair_filter, format);
    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "synth") return cmd_synth(cfg, out);
    if (command == "ingest") return cmd_ingest(cfg, out);
    if (command == "profile") return cmd_profile(cfg, out);
    if (command == "acf") return cmd_acf(cfg, out);
    if (command == "crosscorr") return cmd_crosscorr(cfg, out);
    if (command == "tune") return cmd_tune(cfg, out);
    if (command == "train") return cmd_train(cfg, out);
    if (command == "evaluate") return cmd_evaluate(cfg, out);
    if (command == "dmtest") return cmd_dmtest(cfg, out);
    if (command == "sensitivity") return cmd_sensitivity(cfg, out);
    if (command == "report") return cmd_report(cfg, out);
    err << error_json("usage", "unknown command " + command).dump() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    err << error_json("usage", e.what()).dump() << "\n";
    return kUsage;
  } catch (const baselines::ConvergenceFailure& e) {
    err << error_json("convergence_failure", e.what()).dump() << "\n";
    return kNumeric;
  } catch (const baselines::SingularFitError& e) {
    err << error_json("singular_fit", e.what()).dump() << "\n";
    return kNumeric;
  } catch (const baselines::TuningFailedError& e) {
    err << error_json("tuning_failed", e.what()).dump() << "\n";
    return kNumeric;
  } catch (const zoo::TuningFailedError& e) {
    err << error_json("tuning_failed", e.what()).dump() << "\n";
    return kNumeric;
  } catch (const neural::DivergenceError& e) {
    err << error_json("divergence", e.what()).dump() << "\n";
    return kNumeric;
  } catch (const neural::NumericError& e) {
    err << error_json("numeric", e.what()).dump() << "\n";
    return kNumeric;
  } catch (const neural::ShapeError& e) {
    err << error_json("shape", e.what()).dump() << "\n";
    return kNumeric;
  } catch (const zoo::SpecError& e) {
    err << error_json("spec", e.what()).dump() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << error_json("data", e.what()).dump() << "\n";
    return kData;
  }
}

}  // namespace rangecast::cli
