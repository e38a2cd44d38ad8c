// Command-line front end for the near-field CSI feedback pipeline:
// dataset generation, training, evaluation, parameter audit, plot export.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "nfcsi/nfcsi.hpp"

namespace fs = std::filesystem;
using namespace nfcsi;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::int64_t seed = -1;  // master seed; overrides dataset.seed and train.seed
  bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "config file (key = value lines)");
  cmd->add_option("--set", args.overrides, "config override key=value (repeatable)");
  cmd->add_option("--out", args.out_dir, "output directory (default: runs/<timestamp>-<cmd>)");
  cmd->add_option("--seed", args.seed, "master seed (sets dataset.seed and train.seed)");
  cmd->add_flag("--force", args.force, "overwrite existing outputs");
}

RunConfig build_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg.load_file(args.config_path);
  for (const auto& kv : args.overrides) cfg.apply_override(kv);
  if (args.seed >= 0) {
    cfg.set("dataset.seed", std::to_string(args.seed));
    cfg.set("train.seed", std::to_string(args.seed));
  }
  return cfg;
}

std::string timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", std::localtime(&t));
  return buf;
}

// Resolves the run root, creates the standard layout, writes the config echo.
fs::path prepare_out(const CommonArgs& args, const RunConfig& cfg,
                     const std::string& subcommand) {
  fs::path root = args.out_dir.empty()
                      ? fs::path("runs") / (timestamp() + "-" + subcommand)
                      : fs::path(args.out_dir);
  if (fs::exists(root) && !args.force && !fs::is_empty(root)) {
    throw ConfigError("output directory exists and is not empty: " +
                      root.string() + " (use --force)");
  }
  for (const char* sub : {"data", "checkpoints", "reports", "plots"}) {
    fs::create_directories(root / sub);
  }
  write_text_file((root / "effective_config.txt").string(), cfg.echo());
  return root;
}

int cmd_gen_data(const CommonArgs& args) {
  RunConfig cfg = build_config(args);
  fs::path root = prepare_out(args, cfg, "gen-data");
  SamplingConfig sc = cfg.sampling_config();
  EffectiveSampling eff = resolve_sampling(sc);
  if (eff.clipped) {
    std::printf("note: r range clipped to (%.6g, %.6g) m to stay inside the "
                "valid near-field interval\n",
                eff.r_effective.lo, eff.r_effective.hi);
  }
  int threads = static_cast<int>(cfg.get_int("train.threads"));
  DatasetBundle bundle = build_dataset(sc, threads);
  fs::path data = root / "data" / "dataset.nfcs";
  save_bundle(bundle, data.string());
  write_text_file((root / "data" / "manifest.json").string(),
                  bundle.manifest.dump(2) + "\n");

  double r_max = bundle.manifest["sampled_r_max"];
  std::printf("dataset: %d/%d/%d samples -> %s\n", bundle.train.n(),
              bundle.val.n(), bundle.test.n(), data.string().c_str());
  std::printf("near-field certification: max sampled r = %.3f m < Rayleigh "
              "distance %.3f m\n",
              r_max, eff.rayleigh);
  std::printf("normalization: min=%.9g max=%.9g\n", bundle.norm_min,
              bundle.norm_max);
  return 0;
}

int cmd_train(const CommonArgs& args, const std::string& dataset_path,
              const std::string& resume_path) {
  RunConfig cfg = build_config(args);
  fs::path root = prepare_out(args, cfg, "train");
  if (dataset_path.empty()) throw ConfigError("--dataset is required");
  DatasetBundle bundle = load_bundle(dataset_path);
  TrainConfig tc = cfg.train_config();
  tc.out_dir = (root / "checkpoints").string();

  Checkpoint resume;
  bool has_resume = !resume_path.empty();
  if (has_resume) resume = load_checkpoint(resume_path);

  std::printf("training %s at CR=%d: %d epochs, batch %d, lr %g, seed %llu\n",
              architecture_name(tc.model.architecture).c_str(),
              tc.model.compression_ratio, tc.epochs, tc.batch_size,
              tc.learning_rate, static_cast<unsigned long long>(tc.seed));
  TrainResult res = train(tc, bundle, has_resume ? &resume : nullptr,
                          [](const EpochRecord& r) {
                            std::printf("epoch %3d  loss %.6e  val NMSE %8.3f dB"
                                        "  val rho %.5f  (%.1fs)\n",
                                        r.epoch, r.train_loss, r.val_nmse_db,
                                        r.val_rho, r.wall_seconds);
                            std::fflush(stdout);
                          });
  std::printf("best val NMSE %.3f dB at epoch %d\n", res.best_val_nmse_db,
              res.best_epoch);
  std::printf("checkpoints: %s, %s\n", res.best_path.c_str(),
              res.final_path.c_str());
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint_path,
             const std::string& dataset_path,
             const std::vector<std::string>& compare_reports) {
  RunConfig cfg = build_config(args);
  fs::path root = prepare_out(args, cfg, "eval");
  if (!compare_reports.empty()) {
    std::vector<nlohmann::json> reports;
    for (const auto& p : compare_reports) {
      reports.push_back(nlohmann::json::parse(read_text_file(p)));
    }
    std::string table = comparison_table(reports);
    write_text_file((root / "reports" / "comparison.csv").string(), table);
    std::printf("%s", table.c_str());
    return 0;
  }
  if (checkpoint_path.empty() || dataset_path.empty()) {
    throw ConfigError("--checkpoint and --dataset are required (or --compare)");
  }
  DatasetBundle bundle = load_bundle(dataset_path);
  int threads = static_cast<int>(cfg.get_int("train.threads"));
  EvalReport rep = evaluate_checkpoint(checkpoint_path, bundle, threads);
  fs::path report_path = root / "reports" / "eval.json";
  write_text_file(report_path.string(), rep.to_json().dump(2) + "\n");
  for (const char* metric : {"val_nmse_db", "val_rho", "train_loss"}) {
    if (!rep.history.empty()) {
      write_text_file((root / "plots" / (std::string(metric) + ".csv")).string(),
                      plot_csv(rep.history, metric));
    }
  }
  std::printf("architecture %s  CR %d\n", rep.architecture.c_str(), rep.cr);
  std::printf("NMSE %.4f dB   rho %.6f   (denormalized: %.4f dB, %.6f)\n",
              rep.nmse_db, rep.rho, rep.nmse_db_denormalized,
              rep.rho_denormalized);
  std::printf("parameters: total %lld (fc %lld, non-fc %lld)\n",
              static_cast<long long>(rep.audit.total),
              static_cast<long long>(rep.audit.fc_params),
              static_cast<long long>(rep.audit.non_fc_params));
  std::printf("report: %s\n", report_path.string().c_str());
  return 0;
}

int cmd_audit(const CommonArgs& args, std::vector<int> crs) {
  RunConfig cfg = build_config(args);
  if (crs.empty()) throw ConfigError("--cr requires at least one value");
  std::printf("%-14s %6s %12s %12s %12s\n", "architecture", "CR", "total", "fc",
              "non_fc");
  bool law_ok = true;
  for (Architecture arch :
       {Architecture::kExtendNLNet, Architecture::kCsiNetBaseline}) {
    std::vector<ParameterAudit> audits;
    for (int cr : crs) {
      ModelConfig mc = cfg.model_config();
      mc.architecture = arch;
      mc.compression_ratio = cr;
      Autoencoder<float> model(mc);
      audits.push_back(model.audit());
      const auto& a = audits.back();
      std::printf("%-14s %6d %12lld %12lld %12lld\n",
                  architecture_name(arch).c_str(), cr,
                  static_cast<long long>(a.total),
                  static_cast<long long>(a.fc_params),
                  static_cast<long long>(a.non_fc_params));
      // closed-form check: fc = 2*L*K + K + L
      ModelConfig probe = mc;
      std::int64_t L = probe.flattened_length(), K = probe.codeword_length();
      if (a.fc_params != 2 * L * K + K + L) {
        std::printf("  fc count deviates from closed form 2LK+K+L!\n");
        law_ok = false;
      }
    }
    // parameter-difference law: total(a) - total(b) = (2L+1)(K_a - K_b)
    for (std::size_t i = 0; i + 1 < audits.size(); ++i) {
      ModelConfig mc = cfg.model_config();
      std::int64_t L = mc.flattened_length();
      std::int64_t ka = L / crs[i], kb = L / crs[i + 1];
      std::int64_t expect = (2 * L + 1) * (ka - kb);
      std::int64_t got = audits[i].total - audits[i + 1].total;
      if (got != expect) {
        std::printf("difference law violated for %s: CR%d-CR%d = %lld, expected %lld\n",
                    architecture_name(arch).c_str(), crs[i], crs[i + 1],
                    static_cast<long long>(got), static_cast<long long>(expect));
        law_ok = false;
      }
    }
  }
  if (!law_ok) return 1;
  std::printf("parameter-difference law holds for all requested CRs\n");
  return 0;
}

int cmd_plot(const CommonArgs& args, const std::string& history_path) {
  RunConfig cfg = build_config(args);
  fs::path root = prepare_out(args, cfg, "plot");
  if (history_path.empty()) throw ConfigError("--history is required");
  // history CSV: epoch,train_loss,val_nmse_db,val_rho
  std::string text = read_text_file(history_path);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  std::vector<EpochRecord> hist;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochRecord r;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &r.epoch, &r.train_loss,
                    &r.val_nmse_db, &r.val_rho) != 4) {
      throw IoError("malformed history line: " + line);
    }
    hist.push_back(r);
  }
  for (const char* metric : {"val_nmse_db", "val_rho", "train_loss"}) {
    fs::path p = root / "plots" / (std::string(metric) + ".csv");
    write_text_file(p.string(), plot_csv(hist, metric));
    std::printf("wrote %s (%zu rows)\n", p.string().c_str(), hist.size());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"near-field XL-MIMO CSI feedback pipeline"};
  app.require_subcommand(1);

  CommonArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "generate a channel dataset");
  add_common(gen, gen_args);

  CommonArgs train_args;
  std::string train_dataset, train_resume, train_arch, train_cr;
  auto* tr = app.add_subcommand("train", "train an autoencoder");
  add_common(tr, train_args);
  tr->add_option("--dataset", train_dataset, "dataset file (.nfcs)")->required();
  tr->add_option("--resume", train_resume, "checkpoint to resume from");
  tr->add_option("--architecture", train_arch, "extendnlnet or csinet");
  tr->add_option("--cr", train_cr, "compression ratio");

  CommonArgs eval_args;
  std::string eval_ckpt, eval_dataset;
  std::vector<std::string> eval_compare;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev, eval_args);
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint file");
  ev->add_option("--dataset", eval_dataset, "dataset file (.nfcs)");
  ev->add_option("--compare", eval_compare,
                 "merge eval report JSONs into a comparison table");

  CommonArgs audit_args;
  std::vector<int> audit_crs;
  std::string audit_arch;
  auto* au = app.add_subcommand("audit", "parameter counts per architecture/CR");
  add_common(au, audit_args);
  au->add_option("--cr", audit_crs, "compression ratios to audit");

  CommonArgs plot_args;
  std::string plot_history;
  auto* pl = app.add_subcommand("plot", "export plot CSVs from a history file");
  add_common(pl, plot_args);
  pl->add_option("--history", plot_history, "history.csv from a training run");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (tr->parsed()) {
      if (!train_arch.empty()) {
        train_args.overrides.push_back("model.architecture=" + train_arch);
      }
      if (!train_cr.empty()) {
        train_args.overrides.push_back("model.cr=" + train_cr);
      }
      return cmd_train(train_args, train_dataset, train_resume);
    }
    if (ev->parsed()) return cmd_eval(eval_args, eval_ckpt, eval_dataset, eval_compare);
    if (au->parsed()) return cmd_audit(audit_args, audit_crs);
    if (pl->parsed()) return cmd_plot(plot_args, plot_history);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
