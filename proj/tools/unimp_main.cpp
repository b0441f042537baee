#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "unimp/errors.hpp"
#include "unimp/experiments.hpp"

using namespace unimp;

namespace {

template <class T>
void set_if(const std::optional<T>& v, T& target) {
  if (v) target = *v;
}

bool on_off(const std::string& v) { return v == "on"; }

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Tensors are allocated and freed at a high rate; keep large blocks on the heap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif

  CLI::App app{"UniMP: unified feature and label message passing on graphs"};
  app.set_help_all_flag("--help-all");

  std::string kind = "train";
  std::optional<std::string> config_file, model, inputs, residual, sampling, edge_features, data_dir, out_dir,
      checkpoints;
  std::optional<std::size_t> num_layers, hidden_size, num_heads, fanout, num_parts, batch_size, epochs, eval_every,
      lpa_iterations, sbm_n, sbm_c, sbm_m;
  std::optional<double> dropout, lr, weight_decay, label_rate, p_in, p_out, feature_signal;
  std::optional<std::uint64_t> sbm_seed;
  std::vector<std::uint64_t> seeds;
  std::vector<double> sweep_rates, inference_rates;
  bool include_valid = false, directed = false, fixed_partition = false, shared_encoder = false, clamp = false,
       average_edge_features = false, print_config = false;

  app.add_option("experiment", kind,
                 "train | eval | ablation-grid | label-rate-sweep | coverage-sweep | msf-report | lpa | generate")
      ->check(CLI::IsMember({"train", "eval", "ablation-grid", "label-rate-sweep", "coverage-sweep", "msf-report",
                             "lpa", "generate"}));
  app.add_option("--config", config_file, "JSON config; flags given on the command line take precedence")
      ->check(CLI::ExistingFile);

  auto* m = "Model";
  app.add_option("--model", model, "mlp | gcn | gat | transformer | unimp")
      ->check(CLI::IsMember({"mlp", "gcn", "gat", "transformer", "unimp"}))
      ->group(m);
  app.add_option("--inputs", inputs, "xa | ay | xay")->check(CLI::IsMember({"xa", "ay", "xay"}))->group(m);
  app.add_option("--num-layers", num_layers)->group(m);
  app.add_option("--hidden-size", hidden_size, "per-head width")->group(m);
  app.add_option("--num-heads", num_heads)->group(m);
  app.add_option("--dropout", dropout)->group(m);
  app.add_option("--residual", residual, "none | simple | gated")
      ->check(CLI::IsMember({"none", "simple", "gated"}))
      ->group(m);
  app.add_option("--edge-features", edge_features, "on | off")->check(CLI::IsMember({"on", "off"}))->group(m);
  app.add_flag("--shared-edge-encoder", shared_encoder, "one edge encoder for all layers")->group(m);

  auto* t = "Training";
  app.add_option("--lr", lr)->group(t);
  app.add_option("--weight-decay", weight_decay)->group(t);
  app.add_option("--label-rate", label_rate, "fraction of training labels kept in the input, in [0, 1)")->group(t);
  app.add_option("--sampling", sampling, "full | neighbor | partition")
      ->check(CLI::IsMember({"full", "neighbor", "partition"}))
      ->group(t);
  app.add_option("--fanout", fanout, "neighbors per layer for neighbor sampling")->group(t);
  app.add_option("--batch-size", batch_size, "seed nodes per batch for neighbor sampling")->group(t);
  app.add_option("--num-parts", num_parts, "parts for random partition")->group(t);
  app.add_flag("--fixed-partition", fixed_partition, "draw the partition once instead of every epoch")->group(t);
  app.add_option("--epochs", epochs, "default 500 full-batch, 50 sampled")->group(t);
  app.add_option("--eval-every", eval_every, "epochs between evaluations")->group(t);
  app.add_option("--seeds", seeds, "one run per seed")->delimiter(',')->group(t);

  auto* d = "Data";
  app.add_option("--data", data_dir, "directory with edges.txt, features.csv, labels.txt, splits.txt")->group(d);
  app.add_flag("--directed", directed, "keep edges as given")->group(d);
  app.add_flag("--average-edge-features", average_edge_features, "node features from incident edge features")
      ->group(d);
  app.add_option("--sbm-n", sbm_n, "synthetic graph: nodes")->group(d);
  app.add_option("--sbm-c", sbm_c, "synthetic graph: classes")->group(d);
  app.add_option("--sbm-p-in", p_in, "synthetic graph: within-class edge probability")->group(d);
  app.add_option("--sbm-p-out", p_out, "synthetic graph: cross-class edge probability")->group(d);
  app.add_option("--sbm-m", sbm_m, "synthetic graph: feature dimension")->group(d);
  app.add_option("--feature-signal", feature_signal, "synthetic graph: class-mean norm")->group(d);
  app.add_option("--sbm-seed", sbm_seed, "synthetic graph: seed")->group(d);

  auto* e = "Evaluation";
  app.add_flag("--include-validation-labels", include_valid, "report test metrics with validation labels as input")
      ->group(e);
  app.add_option("--checkpoints", checkpoints, "checkpoint directory for eval and msf-report")->group(e);
  app.add_option("--sweep-rates", sweep_rates, "label-rate-sweep panels (a) and (b)")->delimiter(',')->group(e);
  app.add_option("--inference-rates", inference_rates, "label-rate-sweep panel (c)")->delimiter(',')->group(e);
  app.add_flag("--clamp", clamp, "LPA: reset known labels after every iteration")->group(e);
  app.add_option("--lpa-iterations", lpa_iterations)->group(e);
  app.add_option("--out", out_dir, "output directory")->group(e);
  app.add_flag("--print-config", print_config, "print the resolved config and exit")->group(e);

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (config_file) {
      std::ifstream in(*config_file);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(*config_file + ": " + ex.what());
      }
      cfg = apply_json(cfg, j);
    }
    if (app.count("experiment") || !config_file) cfg.kind = experiment_from_string(kind);

    if (model) cfg.model.arch = architecture_from_string(*model);
    if (inputs) cfg.model.inputs = input_mode_from_string(*inputs);
    set_if(num_layers, cfg.model.num_layers);
    set_if(hidden_size, cfg.model.hidden_size);
    set_if(num_heads, cfg.model.num_heads);
    set_if(dropout, cfg.model.dropout);
    if (residual) cfg.model.residual = residual_mode_from_string(*residual);
    if (edge_features) cfg.model.edge_features = on_off(*edge_features);
    if (shared_encoder) cfg.model.shared_edge_encoder = true;

    set_if(lr, cfg.train.lr);
    set_if(weight_decay, cfg.train.weight_decay);
    set_if(label_rate, cfg.train.label_rate);
    if (sampling) cfg.train.sampling = sampling_from_string(*sampling);
    set_if(fanout, cfg.train.fanout);
    set_if(batch_size, cfg.train.batch_size);
    set_if(num_parts, cfg.train.num_parts);
    if (fixed_partition) cfg.train.fixed_partition = true;
    if (epochs) cfg.train.epochs = *epochs;
    set_if(eval_every, cfg.eval_every);
    if (!seeds.empty()) cfg.seeds = seeds;

    if (data_dir) cfg.data_dir = *data_dir;
    if (directed) cfg.directed = true;
    if (average_edge_features) cfg.average_edge_features = true;
    set_if(sbm_n, cfg.sbm.n);
    set_if(sbm_c, cfg.sbm.c);
    set_if(p_in, cfg.sbm.p_in);
    set_if(p_out, cfg.sbm.p_out);
    set_if(sbm_m, cfg.sbm.m);
    set_if(feature_signal, cfg.sbm.feature_signal);
    set_if(sbm_seed, cfg.sbm.seed);

    if (include_valid) cfg.include_validation_labels = true;
    if (checkpoints) cfg.checkpoint_dir = *checkpoints;
    if (!sweep_rates.empty()) cfg.sweep_rates = sweep_rates;
    if (!inference_rates.empty()) cfg.inference_rates = inference_rates;
    if (clamp) cfg.clamp = true;
    set_if(lpa_iterations, cfg.lpa_iterations);
    if (out_dir) cfg.out_dir = *out_dir;

    cfg.validate();
    if (print_config) {
      std::cout << to_json(cfg).dump(2) << '\n';
      return 0;
    }
    run_and_write(cfg);
    std::cout << "wrote " << (cfg.out_dir / "metrics.json").string() << '\n';
    return 0;
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
}
