#include "unimp/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "unimp/baselines.hpp"
#include "unimp/errors.hpp"

namespace unimp {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::train: return "train";
    case ExperimentKind::eval: return "eval";
    case ExperimentKind::ablation_grid: return "ablation-grid";
    case ExperimentKind::label_rate_sweep: return "label-rate-sweep";
    case ExperimentKind::coverage_sweep: return "coverage-sweep";
    case ExperimentKind::msf_report: return "msf-report";
    case ExperimentKind::lpa: return "lpa";
    case ExperimentKind::generate: return "generate";
  }
  return "?";
}

ExperimentKind experiment_from_string(const std::string& text) {
  for (auto k : {ExperimentKind::train, ExperimentKind::eval, ExperimentKind::ablation_grid,
                 ExperimentKind::label_rate_sweep, ExperimentKind::coverage_sweep, ExperimentKind::msf_report,
                 ExperimentKind::lpa, ExperimentKind::generate}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown experiment '" + text + "'");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds must be distinct");
  }
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
  if (data_dir.empty()) sbm.validate();
  for (double r : sweep_rates)
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("sweep rates must lie in (0, 1), got " + format_exact(r));
  for (double r : inference_rates)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("inference rates must lie in [0, 1], got " + format_exact(r));
  if (lpa_iterations == 0) throw ConfigError("lpa_iterations must be positive");
  if ((kind == ExperimentKind::eval || kind == ExperimentKind::msf_report) && checkpoint_dir.empty()) {
    throw ConfigError(to_string(kind) + " needs a checkpoint directory");
  }
}

namespace {

json residual_json(const std::optional<ResidualMode>& r) {
  if (!r) return nullptr;
  return to_string(*r);
}

// Configuration that determines results; output locations are left out so
// that the same run written to two places produces identical artifacts.
json result_json(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("out_dir");
  j.erase("checkpoint_dir");
  return j;
}

void merge_into(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config " + (where.empty() ? std::string("root") : where) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (base[key].is_object() && value.is_object()) {
      merge_into(base[key], value, path);
    } else {
      base[key] = value;
    }
  }
}

RunConfig from_full_json(const json& j) {
  RunConfig c;
  c.kind = experiment_from_string(j.at("kind").get<std::string>());
  const json& m = j.at("model");
  c.model.arch = architecture_from_string(m.at("arch").get<std::string>());
  c.model.inputs = input_mode_from_string(m.at("inputs").get<std::string>());
  c.model.num_layers = m.at("num_layers").get<std::size_t>();
  c.model.hidden_size = m.at("hidden_size").get<std::size_t>();
  c.model.num_heads = m.at("num_heads").get<std::size_t>();
  c.model.dropout = m.at("dropout").get<double>();
  if (!m.at("residual").is_null()) c.model.residual = residual_mode_from_string(m.at("residual").get<std::string>());
  c.model.edge_features = m.at("edge_features").get<bool>();
  c.model.shared_edge_encoder = m.at("shared_edge_encoder").get<bool>();

  const json& t = j.at("train");
  c.train.label_rate = t.at("label_rate").get<double>();
  if (!t.at("epochs").is_null()) c.train.epochs = t.at("epochs").get<std::size_t>();
  c.train.lr = t.at("lr").get<double>();
  c.train.weight_decay = t.at("weight_decay").get<double>();
  c.train.sampling = sampling_from_string(t.at("sampling").get<std::string>());
  c.train.fanout = t.at("fanout").get<std::size_t>();
  c.train.batch_size = t.at("batch_size").get<std::size_t>();
  c.train.num_parts = t.at("num_parts").get<std::size_t>();
  c.train.fixed_partition = t.at("fixed_partition").get<bool>();

  const json& d = j.at("data");
  c.data_dir = d.at("dir").get<std::string>();
  c.directed = d.at("directed").get<bool>();
  c.average_edge_features = d.at("average_edge_features").get<bool>();
  const json& s = d.at("sbm");
  c.sbm.n = s.at("n").get<std::size_t>();
  c.sbm.c = s.at("c").get<std::size_t>();
  c.sbm.p_in = s.at("p_in").get<double>();
  c.sbm.p_out = s.at("p_out").get<double>();
  c.sbm.m = s.at("m").get<std::size_t>();
  c.sbm.feature_signal = s.at("feature_signal").get<double>();
  c.sbm.seed = s.at("seed").get<std::uint64_t>();
  c.sbm.train_fraction = s.at("train_fraction").get<double>();
  c.sbm.valid_fraction = s.at("valid_fraction").get<double>();

  c.out_dir = j.at("out_dir").get<std::string>();
  c.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
  c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.include_validation_labels = j.at("include_validation_labels").get<bool>();
  c.eval_every = j.at("eval_every").get<std::size_t>();
  c.sweep_rates = j.at("sweep_rates").get<std::vector<double>>();
  c.inference_rates = j.at("inference_rates").get<std::vector<double>>();
  c.buckets.clear();
  for (const json& b : j.at("buckets")) {
    DegreeBucket bucket;
    bucket.lo = b.at(0).get<std::size_t>();
    if (!b.at(1).is_null()) bucket.hi = b.at(1).get<std::size_t>();
    c.buckets.push_back(bucket);
  }
  c.clamp = j.at("clamp").get<bool>();
  c.lpa_iterations = j.at("lpa_iterations").get<std::size_t>();
  return c;
}

std::vector<std::size_t> with_split(const NodeData& nodes, Split s, const char* what) {
  auto out = nodes.nodes_in(s);
  if (out.empty()) throw ConfigError(std::string("dataset has no ") + what + " nodes");
  return out;
}

std::string with_context(std::uint64_t seed, std::size_t epoch, const std::exception& e) {
  return "seed " + std::to_string(seed) + ", epoch " + std::to_string(epoch) + ": " + e.what();
}

json summary_json(std::span<const double> values) {
  const Summary s = summarize(values);
  return {{"mean", s.mean}, {"std", s.std}};
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream out;
  out << "epoch,loss,valid,test\n";
  for (const auto& p : curve)
    out << p.epoch << ',' << format_exact(p.loss) << ',' << format_exact(p.valid) << ',' << format_exact(p.test) << '\n';
  return out.str();
}

std::string setting_name(Architecture arch, InputMode inputs) { return to_string(arch) + "_" + to_string(inputs); }

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

json seed_json(const SeedResult& r) {
  return {{"seed", r.seed},
          {"best_epoch", r.best_epoch},
          {"valid", r.valid},
          {"test", r.test},
          {"test_with_validation_labels", r.test_with_validation_labels},
          {"skipped_batches", r.skipped_batches},
          {"checkpoint_fingerprint", fingerprint(serialize_checkpoint(r.best))}};
}

json runs_json(const std::vector<SeedResult>& runs, bool include_validation_labels) {
  std::vector<double> valid, test, test_v;
  json per_seed = json::array();
  for (const auto& r : runs) {
    valid.push_back(r.valid);
    test.push_back(r.test);
    test_v.push_back(r.test_with_validation_labels);
    per_seed.push_back(seed_json(r));
  }
  return {{"runs", per_seed},
          {"valid", summary_json(valid)},
          {"test", summary_json(include_validation_labels ? test_v : test)},
          {"test_without_validation_labels", summary_json(test)},
          {"test_with_validation_labels", summary_json(test_v)}};
}

std::vector<double> tests_of(const std::vector<SeedResult>& runs) {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.test);
  return out;
}

std::vector<fs::path> checkpoint_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (fs::is_directory(dir))
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".bin") out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int ch) override {
    if (ch == traits_type::eof()) return traits_type::not_eof(ch);
    a_->sputc(static_cast<char>(ch));
    b_->sputc(static_cast<char>(ch));
    return ch;
  }
  int sync() override { return a_->pubsync() | b_->pubsync(); }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

}  // namespace

json to_json(const RunConfig& c) {
  json buckets = json::array();
  for (const auto& b : c.buckets) {
    buckets.push_back(json::array({b.lo, b.hi == DegreeBucket{}.hi ? json(nullptr) : json(b.hi)}));
  }
  return {
      {"kind", to_string(c.kind)},
      {"model",
       {{"arch", to_string(c.model.arch)},
        {"inputs", to_string(c.model.inputs)},
        {"num_layers", c.model.num_layers},
        {"hidden_size", c.model.hidden_size},
        {"num_heads", c.model.num_heads},
        {"dropout", c.model.dropout},
        {"residual", residual_json(c.model.residual)},
        {"edge_features", c.model.edge_features},
        {"shared_edge_encoder", c.model.shared_edge_encoder}}},
      {"train",
       {{"label_rate", c.train.label_rate},
        {"epochs", c.train.epochs ? json(*c.train.epochs) : json(nullptr)},
        {"lr", c.train.lr},
        {"weight_decay", c.train.weight_decay},
        {"sampling", to_string(c.train.sampling)},
        {"fanout", c.train.fanout},
        {"batch_size", c.train.batch_size},
        {"num_parts", c.train.num_parts},
        {"fixed_partition", c.train.fixed_partition}}},
      {"data",
       {{"dir", c.data_dir.string()},
        {"directed", c.directed},
        {"average_edge_features", c.average_edge_features},
        {"sbm",
         {{"n", c.sbm.n},
          {"c", c.sbm.c},
          {"p_in", c.sbm.p_in},
          {"p_out", c.sbm.p_out},
          {"m", c.sbm.m},
          {"feature_signal", c.sbm.feature_signal},
          {"seed", c.sbm.seed},
          {"train_fraction", c.sbm.train_fraction},
          {"valid_fraction", c.sbm.valid_fraction}}}}},
      {"out_dir", c.out_dir.string()},
      {"checkpoint_dir", c.checkpoint_dir.string()},
      {"seeds", c.seeds},
      {"include_validation_labels", c.include_validation_labels},
      {"eval_every", c.eval_every},
      {"sweep_rates", c.sweep_rates},
      {"inference_rates", c.inference_rates},
      {"buckets", buckets},
      {"clamp", c.clamp},
      {"lpa_iterations", c.lpa_iterations},
  };
}

RunConfig apply_json(RunConfig base, const json& j) {
  json full = to_json(base);
  merge_into(full, j, "");
  try {
    return from_full_json(full);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
}

std::string config_fingerprint(const RunConfig& cfg) { return fingerprint(result_json(cfg).dump()); }

Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.data_dir.empty()) return generate_sbm(cfg.sbm).data;
  LoadOptions options;
  options.directed = cfg.directed;
  options.average_edge_features = cfg.average_edge_features;
  DatasetPaths paths = DatasetPaths::in_directory(cfg.data_dir);
  if (cfg.average_edge_features && !fs::exists(paths.features)) paths.features.clear();
  return load_graph(paths, options);
}

double evaluate(const Matrix& scores, const NodeData& nodes, std::span<const std::size_t> eval_set) {
  if (nodes.task == TaskKind::multiclass) return accuracy(scores, nodes.classes, eval_set);
  return roc_auc(scores, nodes.label_matrix, eval_set).mean;
}

std::string metric_name(const NodeData& nodes) { return nodes.task == TaskKind::multiclass ? "accuracy" : "roc_auc"; }

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

SeedResult train_seed(const TrainingData& data, const RunConfig& cfg, std::uint64_t seed) {
  const NodeData& nodes = data.data->nodes;
  const auto valid = with_split(nodes, Split::valid, "validation");
  const auto test = with_split(nodes, Split::test, "test");
  SeedResult out;
  out.seed = seed;
  std::size_t epoch = 0;
  try {
    Trainer trainer(data, cfg.model, cfg.train, seed);
    const std::size_t epochs = cfg.train.num_epochs();
    const std::string config_json = result_json(cfg).dump();
    double best = -1.0;
    for (epoch = 1; epoch <= epochs; ++epoch) {
      const EpochResult r = trainer.train_epoch();
      out.skipped_batches += r.skipped_batches;
      if (epoch % cfg.eval_every != 0 && epoch != epochs) continue;
      const Matrix scores = predict(trainer.model(), data, false);
      CurvePoint point{epoch, r.loss, evaluate(scores, nodes, valid), evaluate(scores, nodes, test)};
      out.curve.push_back(point);
      if (point.valid <= best) continue;
      best = point.valid;
      out.best_epoch = epoch;
      out.valid = point.valid;
      out.test = point.test;
      out.test_with_validation_labels = evaluate(predict(trainer.model(), data, true), nodes, test);
      Checkpoint& ck = out.best;
      ck.config_json = config_json;
      ck.fingerprint = fingerprint(config_json);
      ck.seed = seed;
      ck.epoch = epoch;
      ck.feature_dim = trainer.model().feature_dim();
      ck.num_classes = trainer.model().num_classes();
      ck.edge_dim = trainer.model().edge_dim();
      ck.tensors.clear();
      for (const auto& [name, t] : trainer.model().named_parameters()) ck.tensors.emplace_back(name, t.detach());
    }
  } catch (const ConfigError& e) {
    throw ConfigError(with_context(seed, epoch, e));
  } catch (const ContractError& e) {
    throw ContractError(with_context(seed, epoch, e));
  } catch (const std::exception& e) {
    throw std::runtime_error(with_context(seed, epoch, e));
  }
  return out;
}

std::vector<SeedResult> train_seeds(const TrainingData& data, const RunConfig& cfg) {
  const std::size_t n = cfg.seeds.size();
  std::vector<SeedResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        results[k] = train_seed(data, cfg, cfg.seeds[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

ModelConfig model_config_from_checkpoint(const Checkpoint& ck) {
  json j;
  try {
    j = json::parse(ck.config_json);
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  return apply_json(RunConfig{}, j).model;
}

UniMPModel model_from_checkpoint(const Checkpoint& ck) {
  if (fingerprint(ck.config_json) != ck.fingerprint) throw IntegrityError("checkpoint fingerprint does not match its config");
  Rng unused(0);
  UniMPModel model(model_config_from_checkpoint(ck), ck.feature_dim, ck.num_classes, ck.edge_dim, unused);
  model.load_parameters(ck.tensors);
  return model;
}

std::vector<std::size_t> inference_subset(const TrainingData& data, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("inference rate must lie in [0, 1]");
  std::vector<std::size_t> nodes = data.train_nodes;
  const auto keep = static_cast<std::size_t>(std::floor(rate * static_cast<double>(nodes.size())));
  std::shuffle(nodes.begin(), nodes.end(), rng);
  nodes.resize(keep);
  std::sort(nodes.begin(), nodes.end());
  return nodes;
}

std::vector<double> final_attention(const UniMPModel& model, const TrainingData& data) {
  ForwardTrace trace;
  predict(model, data, data.train_nodes, &trace);
  if (trace.attention.empty()) throw ConfigError(to_string(model.config().arch) + " has no attention weights");
  return average_heads(trace.attention.back().to_matrix());
}

namespace {

ExperimentOutput run_train(const RunConfig& cfg, const Dataset& data, std::ostream& log) {
  const TrainingData td = TrainingData::build(data);
  const auto runs = train_seeds(td, cfg);
  ExperimentOutput out;
  for (const auto& r : runs) {
    log << "seed " << r.seed << ": best epoch " << r.best_epoch << ", valid " << r.valid << ", test " << r.test
        << ", test with validation labels " << r.test_with_validation_labels << '\n';
    out.files.emplace_back("curves/seed" + std::to_string(r.seed) + ".csv", curve_csv(r.curve));
    out.files.emplace_back("checkpoints/seed" + std::to_string(r.seed) + ".bin", serialize_checkpoint(r.best));
  }
  out.metrics = runs_json(runs, cfg.include_validation_labels);
  const auto& test = out.metrics["test"];
  log << "test " << metric_name(data.nodes) << ": " << test["mean"].get<double>() << " +- " << test["std"].get<double>()
      << '\n';
  return out;
}

ExperimentOutput run_eval(const RunConfig& cfg, const Dataset& data, std::ostream& log) {
  const auto files = checkpoint_files(cfg.checkpoint_dir);
  if (files.empty()) throw ConfigError("no checkpoints (*.bin) in " + cfg.checkpoint_dir.string());
  const TrainingData td = TrainingData::build(data);
  const auto valid = with_split(data.nodes, Split::valid, "validation");
  const auto test = with_split(data.nodes, Split::test, "test");
  ExperimentOutput out;
  json rows = json::array();
  for (const auto& path : files) {
    const Checkpoint ck = load_checkpoint(path);
    const UniMPModel model = model_from_checkpoint(ck);
    const Matrix scores = predict(model, td, false);
    json row = {{"checkpoint", path.filename().string()},
                {"seed", ck.seed},
                {"epoch", ck.epoch},
                {"fingerprint", ck.fingerprint},
                {"valid", evaluate(scores, data.nodes, valid)},
                {"test", evaluate(scores, data.nodes, test)},
                {"test_with_validation_labels", evaluate(predict(model, td, true), data.nodes, test)}};
    log << path.filename().string() << ": valid " << row["valid"].get<double>() << ", test "
        << row["test"].get<double>() << '\n';
    rows.push_back(std::move(row));
  }
  out.metrics = {{"checkpoints", rows}};
  return out;
}

ExperimentOutput run_ablation_grid(const RunConfig& cfg, const Dataset& data, std::ostream& log) {
  const TrainingData td = TrainingData::build(data);
  std::vector<std::pair<Architecture, InputMode>> cells{{Architecture::mlp, InputMode::xa}};
  for (auto arch : {Architecture::gcn, Architecture::gat, Architecture::transformer})
    for (auto inputs : {InputMode::xa, InputMode::ay, InputMode::xay}) cells.emplace_back(arch, inputs);

  ExperimentOutput out;
  std::ostringstream csv;
  csv << "model,inputs,test_mean,test_std,valid_mean,valid_std\n";
  json grid = json::array();
  for (const auto& [arch, inputs] : cells) {
    RunConfig c = cfg;
    c.model.arch = arch;
    c.model.inputs = inputs;
    if (arch != Architecture::transformer) {
      c.model.edge_features = false;
      c.model.shared_edge_encoder = false;
    }
    const auto runs = train_seeds(td, c);
    json cell = runs_json(runs, cfg.include_validation_labels);
    cell["model"] = to_string(arch);
    cell["inputs"] = to_string(inputs);
    const auto& t = cell["test"];
    const auto& v = cell["valid"];
    csv << to_string(arch) << ',' << to_string(inputs) << ',' << format_exact(t["mean"].get<double>()) << ','
        << format_exact(t["std"].get<double>()) << ',' << format_exact(v["mean"].get<double>()) << ','
        << format_exact(v["std"].get<double>()) << '\n';
    log << to_string(arch) << ' ' << to_string(inputs) << ": test " << t["mean"].get<double>() << " +- "
        << t["std"].get<double>() << '\n';
    for (const auto& r : runs) {
      out.files.emplace_back("cells/" + setting_name(arch, inputs) + "/checkpoints/seed" + std::to_string(r.seed) + ".bin",
                             serialize_checkpoint(r.best));
    }
    grid.push_back(std::move(cell));
  }
  out.files.emplace_back("ablation.csv", csv.str());
  out.metrics = {{"cells", grid}};
  return out;
}

ExperimentOutput run_label_sweeps(const RunConfig& cfg, const Dataset& data, std::ostream& log) {
  if (!cfg.model.uses_labels()) throw ConfigError("label sweeps need a model that takes labels (inputs ay or xay)");
  const TrainingData td = TrainingData::build(data);
  const auto test = with_split(data.nodes, Split::test, "test");
  ExperimentOutput out;

  // (a) training label_rate.
  std::ostringstream a;
  a << "label_rate,test_mean,test_std\n";
  json panel_a = json::array();
  for (double rate : cfg.sweep_rates) {
    RunConfig c = cfg;
    c.train.label_rate = rate;
    const auto tests = tests_of(train_seeds(td, c));
    const Summary s = summarize(tests);
    a << format_exact(rate) << ',' << format_exact(s.mean) << ',' << format_exact(s.std) << '\n';
    panel_a.push_back({{"label_rate", rate}, {"test", tests}, {"mean", s.mean}, {"std", s.std}});
    log << "(a) label_rate " << rate << ": " << s.mean << " +- " << s.std << '\n';
  }

  // (b) proportion of the training labels available.
  std::ostringstream b;
  b << "proportion,train_nodes,test_mean,test_std\n";
  json panel_b = json::array();
  for (double proportion : cfg.sweep_rates) {
    std::vector<double> tests;
    std::size_t used = 0;
    for (std::uint64_t seed : cfg.seeds) {
      Rng rng(mix(seed, 1));
      auto subset = inference_subset(td, proportion, rng);
      if (subset.empty()) subset.push_back(td.train_nodes.front());
      used = subset.size();
      const TrainingData partial = TrainingData::build(data, subset);
      tests.push_back(train_seed(partial, cfg, seed).test);
    }
    const Summary s = summarize(tests);
    b << format_exact(proportion) << ',' << used << ',' << format_exact(s.mean) << ',' << format_exact(s.std) << '\n';
    panel_b.push_back({{"proportion", proportion}, {"train_nodes", used}, {"test", tests}, {"mean", s.mean}, {"std", s.std}});
    log << "(b) proportion " << proportion << ": " << s.mean << " +- " << s.std << '\n';
  }

  // (c) inference label coverage with a model trained at cfg.train.label_rate.
  const auto runs = train_seeds(td, cfg);
  std::ostringstream csv_c;
  csv_c << "inference_rate,test_mean,test_std\n";
  json panel_c = json::array();
  for (double rate : cfg.inference_rates) {
    std::vector<double> tests;
    for (const auto& r : runs) {
      const UniMPModel model = model_from_checkpoint(r.best);
      Rng rng(mix(r.seed, 2));
      const auto labels = inference_subset(td, rate, rng);
      tests.push_back(evaluate(predict(model, td, labels), data.nodes, test));
    }
    const Summary s = summarize(tests);
    csv_c << format_exact(rate) << ',' << format_exact(s.mean) << ',' << format_exact(s.std) << '\n';
    panel_c.push_back({{"inference_rate", rate}, {"test", tests}, {"mean", s.mean}, {"std", s.std}});
    log << "(c) inference rate " << rate << ": " << s.mean << " +- " << s.std << '\n';
  }

  out.files.emplace_back("curves/train_label_rate.csv", a.str());
  out.files.emplace_back("curves/train_proportion.csv", b.str());
  out.files.emplace_back("curves/inference_label_rate.csv", csv_c.str());
  out.metrics = {{"train_label_rate", panel_a}, {"train_proportion", panel_b}, {"inference_label_rate", panel_c}};
  return out;
}

ExperimentOutput run_coverage_sweep(const RunConfig& cfg, const Dataset& data, std::ostream& log) {
  if (data.nodes.task != TaskKind::multiclass) throw ConfigError("coverage-sweep needs a multi-class dataset");
  const TrainingData td = TrainingData::build(data);
  const auto test = with_split(data.nodes, Split::test, "test");
  ExperimentOutput out;
  json variants = json::object();
  std::map<std::string, std::vector<std::vector<BucketAccuracy>>> tables;
  for (auto inputs : {InputMode::xa, InputMode::xay}) {
    RunConfig c = cfg;
    c.model.inputs = inputs;
    for (const auto& r : train_seeds(td, c)) {
      const Matrix scores = predict(model_from_checkpoint(r.best), td, false);
      tables[to_string(inputs)].push_back(
          accuracy_by_neighbor_count(scores, data.nodes.classes, data.graph, cfg.buckets, test));
    }
  }
  std::ostringstream csv;
  csv << "bucket,count,accuracy_xa,accuracy_xay\n";
  json rows = json::array();
  for (std::size_t b = 0; b < cfg.buckets.size(); ++b) {
    json row = {{"bucket", bucket_label(cfg.buckets[b])}};
    csv << bucket_label(cfg.buckets[b]);
    bool first = true;
    for (const char* name : {"xa", "xay"}) {
      std::vector<double> accs;
      std::size_t count = 0;
      for (const auto& table : tables[name]) {
        count = table[b].count;
        if (table[b].accuracy) accs.push_back(*table[b].accuracy);
      }
      if (first) {
        csv << ',' << count;
        row["count"] = count;
        first = false;
      }
      csv << ',';
      if (!accs.empty()) {
        const double mean = summarize(accs).mean;
        csv << format_exact(mean);
        row[std::string("accuracy_") + name] = mean;
      } else {
        row[std::string("accuracy_") + name] = nullptr;
      }
    }
    csv << '\n';
    log << "bucket " << row["bucket"].get<std::string>() << ": " << row.dump() << '\n';
    rows.push_back(std::move(row));
  }
  out.files.emplace_back("curves/neighbor_buckets.csv", csv.str());
  out.metrics = {{"buckets", rows}};
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const double mx = summarize(x).mean, my = summarize(y).mean;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

ExperimentOutput run_msf_report(const RunConfig& cfg, const Dataset& data, std::ostream& log) {
  if (data.nodes.task != TaskKind::multiclass) throw ConfigError("msf-report needs a multi-class dataset");
  const TrainingData td = TrainingData::build(data);
  const auto test = with_split(data.nodes, Split::test, "test");
  std::vector<std::pair<Architecture, InputMode>> settings;
  for (auto arch : {Architecture::gat, Architecture::transformer})
    for (auto inputs : {InputMode::xa, InputMode::xay}) settings.emplace_back(arch, inputs);

  std::vector<std::string> missing;
  for (const auto& [arch, inputs] : settings) {
    const fs::path dir = cfg.checkpoint_dir / setting_name(arch, inputs) / "checkpoints";
    if (checkpoint_files(dir).empty()) missing.push_back(setting_name(arch, inputs) + " (" + dir.string() + ")");
  }
  if (!missing.empty()) {
    std::string msg = "msf-report: missing checkpoints for";
    for (const auto& m : missing) msg += " " + m;
    throw ConfigError(msg);
  }

  std::vector<std::size_t> all(data.nodes.num_nodes());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const std::vector<std::uint8_t> labeled(data.nodes.num_nodes(), 1);
  std::ostringstream csv;
  csv << "setting,seed,msf,accuracy\n";
  json rows = json::array();
  std::vector<double> msf_means, acc_means;
  for (const auto& [arch, inputs] : settings) {
    const std::string name = setting_name(arch, inputs);
    std::vector<double> msfs, accs;
    for (const auto& path : checkpoint_files(cfg.checkpoint_dir / name / "checkpoints")) {
      const Checkpoint ck = load_checkpoint(path);
      const UniMPModel model = model_from_checkpoint(ck);
      if (model.config().arch != arch || model.config().inputs != inputs) {
        throw IntegrityError(path.string() + " does not hold a " + name + " model");
      }
      const double msf =
          margin_similarity(final_attention(model, td), td.context.graph, data.nodes.classes, labeled, all);
      const double acc = evaluate(predict(model, td, false), data.nodes, test);
      msfs.push_back(msf);
      accs.push_back(acc);
      csv << name << ',' << ck.seed << ',' << format_exact(msf) << ',' << format_exact(acc) << '\n';
    }
    const Summary ms = summarize(msfs), as = summarize(accs);
    msf_means.push_back(ms.mean);
    acc_means.push_back(as.mean);
    rows.push_back({{"setting", name}, {"msf", msfs}, {"accuracy", accs}, {"msf_mean", ms.mean}, {"accuracy_mean", as.mean}});
    log << name << ": msf " << ms.mean << ", accuracy " << as.mean << '\n';
  }
  const double r = pearson(msf_means, acc_means);
  log << "pearson(msf, accuracy) over settings: " << r << '\n';
  ExperimentOutput out;
  out.files.emplace_back("msf.csv", csv.str());
  out.metrics = {{"settings", rows}, {"pearson", r}};
  return out;
}

ExperimentOutput run_lpa(const RunConfig& cfg, const Dataset& data, std::ostream& log) {
  const auto train = with_split(data.nodes, Split::train, "training");
  const auto valid = with_split(data.nodes, Split::valid, "validation");
  const auto test = with_split(data.nodes, Split::test, "test");
  const LabelState y0 = LabelState::observe(data.nodes, train);
  const Matrix scores = lpa_propagate(row_normalized_adjacency(data.graph), y0, cfg.lpa_iterations, cfg.clamp);
  ExperimentOutput out;
  out.metrics = {{"valid", evaluate(scores, data.nodes, valid)}, {"test", evaluate(scores, data.nodes, test)},
                 {"iterations", cfg.lpa_iterations}, {"clamp", cfg.clamp}};
  log << "lpa: valid " << out.metrics["valid"].get<double>() << ", test " << out.metrics["test"].get<double>() << '\n';
  return out;
}

}  // namespace

ExperimentOutput run_experiment(const RunConfig& cfg, const Dataset& data, std::ostream& log) {
  cfg.validate();
  ExperimentOutput out;
  switch (cfg.kind) {
    case ExperimentKind::train: out = run_train(cfg, data, log); break;
    case ExperimentKind::eval: out = run_eval(cfg, data, log); break;
    case ExperimentKind::ablation_grid: out = run_ablation_grid(cfg, data, log); break;
    case ExperimentKind::label_rate_sweep: out = run_label_sweeps(cfg, data, log); break;
    case ExperimentKind::coverage_sweep: out = run_coverage_sweep(cfg, data, log); break;
    case ExperimentKind::msf_report: out = run_msf_report(cfg, data, log); break;
    case ExperimentKind::lpa: out = run_lpa(cfg, data, log); break;
    case ExperimentKind::generate:
      out.metrics = {{"nodes", data.nodes.num_nodes()}, {"edges", data.graph.num_edges()}};
      break;
  }
  out.metrics["kind"] = to_string(cfg.kind);
  out.metrics["config"] = result_json(cfg);
  out.metrics["fingerprint"] = config_fingerprint(cfg);
  out.metrics["metric"] = metric_name(data.nodes);
  return out;
}

json run_and_write(const RunConfig& cfg, bool echo) {
  cfg.validate();
  std::ostringstream captured;
  std::ostringstream discard;
  TeeBuf tee(captured.rdbuf(), echo ? std::clog.rdbuf() : discard.rdbuf());
  std::ostream log(&tee);
  const fs::path log_path = cfg.out_dir / "run.log";
  try {
    log << to_string(cfg.kind) << " fingerprint " << config_fingerprint(cfg) << '\n';
    Dataset data;
    if (cfg.data_dir.empty()) {
      SbmResult sbm = generate_sbm(cfg.sbm);
      for (const auto& w : sbm.warnings) log << "warning: " << w << '\n';
      data = std::move(sbm.data);
    } else {
      data = load_dataset(cfg);
    }
    log << "data: " << data.nodes.num_nodes() << " nodes, " << data.graph.num_edges() << " edges\n";
    ExperimentOutput out = run_experiment(cfg, data, log);
    if (cfg.kind == ExperimentKind::generate) save_dataset(data, DatasetPaths::in_directory(cfg.out_dir));
    for (const auto& [rel, contents] : out.files) write_file_atomic(cfg.out_dir / rel, contents);
    write_file_atomic(cfg.out_dir / "metrics.json", out.metrics.dump(2) + "\n");
    log.flush();
    write_file_atomic(log_path, captured.str());
    return out.metrics;
  } catch (const std::exception& e) {
    log.flush();
    captured << "error: " << e.what() << '\n';
    try {
      write_file_atomic(log_path, captured.str());
    } catch (...) {
    }
    throw;
  }
}

}  // namespace unimp
