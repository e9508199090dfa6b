// Command-line front end: pretrain / rl-train / eval / ablate / rollout-bench
// / emit-plots. Everything is driven by an explicit config file and seed; no
// environment variables are consulted.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "poseworld/config.hpp"
#include "poseworld/harness.hpp"

namespace pw = poseworld;

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
  auto* c = cmd->add_option("--config", opts.config_path, "experiment config file (JSON)");
  if (config_required) c->required();
  cmd->add_option("--seed", [&opts](const CLI::results_t& res) {
    opts.seed = std::stoull(res[0]);
    return true;
  }, "override the config seed");
  cmd->add_option("--out", [&opts](const CLI::results_t& res) {
    opts.out_dir = res[0];
    return true;
  }, "override the output directory");
}

pw::ExperimentConfig resolve_config(const CommonOpts& opts) {
  pw::ExperimentConfig cfg =
      opts.config_path.empty() ? pw::ExperimentConfig{} : pw::load_config(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out_dir) cfg.out_dir = *opts.out_dir;
  return cfg;
}

std::vector<int> parse_grid(const std::string& csv) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const auto comma = csv.find(',', pos);
    out.push_back(std::stoi(csv.substr(pos, comma == std::string::npos ? comma : comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic world-model RL sandbox"};
  app.require_subcommand(0, 1);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "print the default config as JSON and exit");

  CommonOpts pretrain_opts;
  bool export_jsonl = false;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "build the dataset and pretrain the model");
  add_common(pretrain_cmd, pretrain_opts);
  pretrain_cmd->add_flag("--export-jsonl", export_jsonl, "also write a JSON-lines dataset dump");

  CommonOpts rl_opts;
  std::string rl_ckpt;
  auto* rl_cmd = app.add_subcommand("rl-train", "RL post-training from a base checkpoint");
  add_common(rl_cmd, rl_opts);
  rl_cmd->add_option("--checkpoint", rl_ckpt, "base checkpoint (.wcpm)")->required();

  CommonOpts eval_opts;
  std::string eval_ckpt, eval_stem = "eval";
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on held-out scenes");
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate")->required();
  eval_cmd->add_option("--stem", eval_stem, "output file stem");

  CommonOpts ablate_opts;
  std::string ablate_ckpt, arm;
  auto* ablate_cmd = app.add_subcommand("ablate", "run one ablation arm and evaluate it");
  add_common(ablate_cmd, ablate_opts);
  ablate_cmd->add_option("--checkpoint", ablate_ckpt, "base checkpoint")->required();
  ablate_cmd
      ->add_option("--arm", arm,
                   "one of: dual, if-only, vq-only, sample-level, no-subsample, no-best-of-n")
      ->required();

  CommonOpts bench_opts;
  std::string n_grid = "2,4,8,16", g_grid = "2,4,8,16", t_grid = "10,40";
  auto* bench_cmd = app.add_subcommand("rollout-bench", "measure rollout evaluation counts");
  add_common(bench_cmd, bench_opts, false);
  bench_cmd->add_option("--n-grid", n_grid, "clip counts, comma separated");
  bench_cmd->add_option("--g-grid", g_grid, "group sizes, comma separated");
  bench_cmd->add_option("--t-grid", t_grid, "sampling steps, comma separated");

  std::string metrics_path, plots_stem = "plots";
  CommonOpts plots_opts;
  auto* plots_cmd = app.add_subcommand("emit-plots", "reshape a metrics CSV for plotting");
  add_common(plots_cmd, plots_opts, false);
  plots_cmd->add_option("--metrics", metrics_path, "metrics CSV from rl-train")->required();
  plots_cmd->add_option("--stem", plots_stem, "output file stem");

  CLI11_PARSE(app, argc, argv);

  try {
    if (print_config) {
      std::cout << pw::config_to_json(pw::ExperimentConfig{}).dump(2) << "\n";
      return 0;
    }
    if (pretrain_cmd->parsed()) {
      const auto cfg = resolve_config(pretrain_opts);
      const auto out = pw::run_pretrain(cfg, export_jsonl);
      std::cout << "checkpoint: " << out.checkpoint.string() << "\n"
                << "loss[first]: " << (out.loss_curve.empty() ? 0.0 : out.loss_curve.front())
                << "  loss[last]: " << (out.loss_curve.empty() ? 0.0 : out.loss_curve.back())
                << "\n";
      return 0;
    }
    if (rl_cmd->parsed()) {
      auto cfg = resolve_config(rl_opts);
      const auto arch = cfg.arch();
      const auto base = pw::load_checkpoint(rl_ckpt, &arch);
      const auto out = pw::run_rl(cfg, base);
      std::cout << "checkpoint: " << out.checkpoint.string() << "\n"
                << "metrics: " << out.metrics_csv.string() << "\n"
                << "probe acc " << out.probe_initial.acc_action << " -> "
                << out.probe_final.acc_action << ", vq " << out.probe_initial.vq << " -> "
                << out.probe_final.vq << "\n";
      return 0;
    }
    if (eval_cmd->parsed()) {
      auto cfg = resolve_config(eval_opts);
      const auto arch = cfg.arch();
      const auto params = pw::load_checkpoint(eval_ckpt, &arch);
      const auto report = pw::run_eval(cfg, params);
      pw::write_eval_outputs(report, cfg.out_dir, eval_stem);
      for (const auto& c : report.cells)
        std::cout << c.horizon_label << "/" << c.mode << ": acc_action=" << c.acc_action
                  << " (+-" << c.hw_acc << ") vq=" << c.vq << "\n";
      return 0;
    }
    if (ablate_cmd->parsed()) {
      auto cfg = resolve_config(ablate_opts);
      const auto arch = cfg.arch();
      const auto base = pw::load_checkpoint(ablate_ckpt, &arch);
      const auto out = pw::run_ablation(cfg, arm, base);
      std::cout << "arm: " << arm << "\n";
      for (const auto& c : out.trained_report.cells)
        std::cout << c.horizon_label << "/" << c.mode << ": acc " << out.base_report.cell(
                         c.horizon_clips, c.mode).acc_action
                  << " -> " << c.acc_action << ", vq "
                  << out.base_report.cell(c.horizon_clips, c.mode).vq << " -> " << c.vq << "\n";
      return 0;
    }
    if (bench_cmd->parsed()) {
      const auto cfg = resolve_config(bench_opts);
      const auto rows = pw::rollout_bench(cfg, parse_grid(n_grid), parse_grid(g_grid),
                                          parse_grid(t_grid));
      std::filesystem::create_directories(cfg.out_dir);
      const auto path = std::filesystem::path(cfg.out_dir) / "rollout_bench.csv";
      pw::write_bench_csv(rows, path);
      for (const auto& r : rows)
        if (r.predicted != r.measured) throw std::runtime_error("bench count mismatch");
      std::cout << "wrote " << path.string() << " (" << rows.size() << " rows, all counts exact)\n";
      return 0;
    }
    if (plots_cmd->parsed()) {
      const auto cfg = resolve_config(plots_opts);
      const auto data = pw::emit_plots_data(metrics_path);
      pw::write_plots_data(data, cfg.out_dir, plots_stem);
      std::cout << "wrote " << data.wide_rows.size() << " rows\n";
      return 0;
    }
    std::cout << app.help() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
