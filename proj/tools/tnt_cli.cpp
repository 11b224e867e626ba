#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "tnt/checkpoint.hpp"
#include "tnt/checks.hpp"
#include "tnt/complexity.hpp"
#include "tnt/dataset.hpp"
#include "tnt/introspection.hpp"
#include "tnt/io.hpp"
#include "tnt/model.hpp"
#include "tnt/ops.hpp"
#include "tnt/training.hpp"

namespace fs = std::filesystem;
using namespace tnt;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kNumerical = 2, kIo = 3 };

struct ConfigArgs {
  std::string preset;
  std::string config_file;
  std::string indices;
  bool indices_set = false;
  std::vector<std::string> overrides;

  explicit ConfigArgs(std::string default_preset) : preset(std::move(default_preset)) {}

  void attach(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "Architecture preset")
        ->check(CLI::IsMember(preset_names()))
        ->capture_default_str();
    cmd->add_option("--config", config_file, "JSON config file (overrides the preset)");
    cmd->add_option_function<std::string>(
        "--indices",
        [this](const std::string& v) {
          indices = v;
          indices_set = true;
        },
        "Comma-separated 1-based TNT layer indices; other layers are vanilla (empty string: none)");
    cmd->add_option("--set", overrides, "key=value override, repeatable (highest precedence)");
  }

  // preset < config file < --indices / --set
  TntConfig resolve() const {
    TntConfig cfg = tnt::preset(preset);
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw IoError("cannot open config file '" + config_file + "'");
      nlohmann::json doc;
      try {
        in >> doc;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(config_file + ": " + e.what());
      }
      cfg = config_from_json(doc, cfg);
    }
    if (indices_set) cfg.tnt_block_indices = parse_indices(indices);
    for (const auto& o : overrides) apply_override(cfg, o);
    cfg.validate();
    return cfg;
  }
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

int cmd_describe(const ConfigArgs& args, bool json) {
  const TntConfig cfg = args.resolve();
  const auto report = complexity::model_report(cfg);
  if (json) {
    std::cout << nlohmann::json{{"config", config_to_json(cfg)}, {"report", complexity::report_to_json(report)}}.dump(2)
              << '\n';
  } else {
    std::cout << complexity::render_table(report);
  }
  return kOk;
}

struct CheckArgs {
  double eps = 1e-5;
  double tol = 1e-4;
  std::int64_t entries = 32;
  std::uint64_t seed = 0;
  std::string fault;
};

int cmd_check(const ConfigArgs& args, const CheckArgs& c) {
  const TntConfig cfg = args.resolve();
  checks::GradCheckOptions opts;
  opts.step = c.eps;
  opts.tolerance = c.tol;
  opts.max_entries = c.entries;
  opts.seed = c.seed;
  if (!c.fault.empty()) autodiff::inject_backward_fault(c.fault);

  const auto t0 = std::chrono::steady_clock::now();
  std::printf("gradient check: finite-difference step %g, tolerance %g, %s entries per tensor, model %s\n",
              opts.step, opts.tolerance, opts.max_entries > 0 ? std::to_string(opts.max_entries).c_str() : "all",
              cfg.name.c_str());
  if (!c.fault.empty()) std::printf("fault injected: backward of '%s' negated\n", c.fault.c_str());

  int failures = 0;
  auto report = [&](const char* suite, const std::vector<checks::GradCheckEntry>& entries) {
    double worst = 0.0;
    int bad = 0;
    for (const auto& e : entries) {
      worst = std::max(worst, e.rel_err);
      if (!e.passed) {
        ++bad;
        std::printf("  FAIL %-40s rel err %.3e (%lld entries)\n", e.name.c_str(), e.rel_err,
                    static_cast<long long>(e.checked));
      }
    }
    std::printf("%s: %zu groups, %d failed, worst rel err %.3e\n", suite, entries.size(), bad, worst);
    failures += bad;
  };
  report("op gradients", checks::op_gradient_suite(opts));
  report("model gradients", checks::model_gradient_suite(cfg, opts));

  const auto oracle = checks::attention_oracle_suite(c.seed);
  double worst = 0.0;
  int bad = 0;
  for (const auto& e : oracle) {
    worst = std::max(worst, e.max_abs_diff);
    if (!e.passed) {
      ++bad;
      std::printf("  FAIL %s max abs diff %.3e\n", e.name.c_str(), e.max_abs_diff);
    }
  }
  std::printf("attention oracle: %zu configs, %d failed, worst abs diff %.3e\n", oracle.size(), bad, worst);
  failures += bad;
  autodiff::inject_backward_fault("");

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s in %.1f s\n", failures == 0 ? "PASS" : "FAIL", secs);
  return failures == 0 ? kOk : kNumerical;
}

struct TrainArgs {
  std::string task = "subpatch";
  std::int64_t steps = 2000;
  std::int64_t batch = 32;
  std::int64_t n_train = kDefaultTrainSize;
  std::int64_t n_test = kDefaultTestSize;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double weight_decay = 0.05;
  double label_smoothing = 0.1;
  double clip = 0.0;
  std::int64_t warmup = -1;
  std::string out = "runs/tnt";
  bool cache_data = false;
  bool quiet = false;
};

int cmd_train(const ConfigArgs& args, const TrainArgs& t) {
  TntConfig cfg = args.resolve();
  const auto splits = make_subpatch_splits(t.seed, t.n_train, t.n_test);
  if (cfg.num_classes != splits.train.num_classes) {
    std::fprintf(stderr, "note: head resized from %lld to %lld classes for the %s task\n",
                 static_cast<long long>(cfg.num_classes), static_cast<long long>(splits.train.num_classes),
                 t.task.c_str());
    cfg.num_classes = splits.train.num_classes;
  }
  ensure_dir(t.out);
  if (t.cache_data) {
    save_dataset(splits.train, t.out + "/train");
    save_dataset(splits.test, t.out + "/test");
  }
  Model model = build(cfg, t.seed);
  TrainOptions opts;
  opts.steps = t.steps;
  opts.batch_size = t.batch;
  opts.adamw.lr = t.lr;
  opts.adamw.weight_decay = t.weight_decay;
  opts.label_smoothing = t.label_smoothing;
  opts.clip_grad_norm = t.clip;
  opts.warmup_steps = t.warmup;
  opts.seed = t.seed;
  opts.log_path = t.out + "/metrics.jsonl";
  opts.divergence_checkpoint = t.out + "/last_good.tntc";
  const std::int64_t every = std::max<std::int64_t>(1, t.steps / 20);
  if (!t.quiet) {
    opts.on_step = [&](const StepRecord& r) {
      if (r.step % every == 0 || r.step + 1 == t.steps) {
        std::printf("step %5lld  lr %.2e  loss %.4f  acc %.3f\n", static_cast<long long>(r.step), r.lr, r.loss,
                    r.acc);
        std::fflush(stdout);
      }
    };
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto result = train(model, splits.train, opts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_checkpoint(t.out + "/model.tntc", model, &result.optim);
  const double train_acc = evaluate(model, splits.train);
  const double test_acc = evaluate(model, splits.test);
  const nlohmann::json summary = {{"task", std::string(kSubpatchTask)},
                                  {"seed", t.seed},
                                  {"steps", t.steps},
                                  {"batch_size", t.batch},
                                  {"n_train", t.n_train},
                                  {"n_test", t.n_test},
                                  {"train_accuracy", train_acc},
                                  {"test_accuracy", test_acc},
                                  {"seconds", secs},
                                  {"config", config_to_json(cfg)}};
  std::ofstream(t.out + "/summary.json") << summary.dump(2) << '\n';
  std::printf("trained %lld steps in %.1f s: train acc %.4f, held-out acc %.4f\n", static_cast<long long>(t.steps),
              secs, train_acc, test_acc);
  std::printf("wrote %s/metrics.jsonl, %s/model.tntc, %s/summary.json\n", t.out.c_str(), t.out.c_str(),
              t.out.c_str());
  return kOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string split = "test";
  std::string data;
  std::uint64_t seed = 0;
  std::int64_t n_train = kDefaultTrainSize;
  std::int64_t n_test = kDefaultTestSize;
};

int cmd_eval(const EvalArgs& e) {
  const Checkpoint ck = load_checkpoint(e.ckpt);
  ToyDataset data;
  if (!e.data.empty()) {
    data = load_dataset(e.data);
  } else {
    auto splits = make_subpatch_splits(e.seed, e.split == "train" ? e.n_train : 2,
                                       e.split == "train" ? 2 : e.n_test);
    data = e.split == "train" ? std::move(splits.train) : std::move(splits.test);
  }
  const double acc = evaluate(ck.model, data);
  std::printf("top-1 %s accuracy: %.4f (%lld samples)\n", e.data.empty() ? e.split.c_str() : e.data.c_str(), acc,
              static_cast<long long>(data.size()));
  return kOk;
}

struct ExportArgs {
  std::string ckpt;
  std::string kind = "inner-attn";
  int layer = 1;
  std::int64_t sentence = 0;
  std::string head = "mean";
  std::string image;
  std::int64_t sample = 0;
  std::uint64_t seed = 0;
  std::string out;
  bool csv = false;
};

std::int64_t parse_head(const std::string& h) {
  if (h == "mean") return kMeanHead;
  if (h == "all") return kAllHeads;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(h, &used);
    if (used == h.size() && v >= 0) return v;
  } catch (...) {
  }
  throw IntrospectionError("--head expects a head index, 'mean' or 'all', got '" + h + "'");
}

int cmd_export(const ConfigArgs& args, const ExportArgs& x) {
  Model model = x.ckpt.empty() ? build(args.resolve(), x.seed) : load_checkpoint(x.ckpt).model;
  Tensor image;
  if (!x.image.empty()) {
    image = read_image(x.image);
  } else {
    const auto splits = make_subpatch_splits(x.seed, 2, std::max<std::int64_t>(2, (x.sample / 2 + 1) * 2));
    const std::int64_t idx[] = {x.sample};
    const Tensor one = gather_images(splits.test, idx);
    image = reshape(one, {one.dim(1), one.dim(2), one.dim(3)});
  }
  if (image.rank() == 3 && (image.dim(0) != model.config.image_height || image.dim(1) != model.config.image_width)) {
    model = interpolate_position_encodings(model, image.dim(0), image.dim(1));
  }
  Export e;
  if (x.kind == "inner-attn") {
    e = export_inner_attention(model, image, x.layer, x.sentence, parse_head(x.head));
  } else if (x.kind == "outer-attn") {
    e = export_outer_attention(model, image, x.layer, parse_head(x.head));
  } else if (x.kind == "class-attn") {
    e = export_class_attention(model, image, x.layer);
  } else {
    e = export_word_feature_maps(model, image, x.layer);
  }
  const std::string out = x.out.empty() ? x.kind + ".tnta" : x.out;
  if (x.csv) {
    write_export_csv(out, e);
  } else {
    write_export(out, e);
  }
  std::printf("wrote %s %s to %s\n", x.kind.c_str(), shape_str(e.data.shape()).c_str(), out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer-in-Transformer desk toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  ConfigArgs describe_cfg("tnt-s"), check_cfg("tnt-micro"), train_cfg("tnt-micro"), export_cfg("tnt-micro");

  auto* describe = app.add_subcommand("describe", "Parameter and FLOPs breakdown of an architecture");
  describe_cfg.attach(describe);
  bool describe_json = false;
  describe->add_flag("--json", describe_json, "Emit JSON instead of a table");

  auto* check = app.add_subcommand("check", "Finite-difference gradient checks and attention oracle");
  check_cfg.attach(check);
  CheckArgs check_args;
  check->add_option("--eps", check_args.eps, "Central-difference step")->capture_default_str();
  check->add_option("--tol", check_args.tol, "Relative error tolerance")->capture_default_str();
  check->add_option("--entries", check_args.entries, "Entries compared per tensor (0 = all)")->capture_default_str();
  check->add_option("--seed", check_args.seed, "Seed")->capture_default_str();
  check->add_option("--inject-fault", check_args.fault)->group("");

  auto* train_cmd = app.add_subcommand("train", "Train on a synthetic task");
  train_cfg.attach(train_cmd);
  TrainArgs train_args;
  train_cmd->add_option("--task", train_args.task, "Task")->check(CLI::IsMember({"subpatch"}))->capture_default_str();
  train_cmd->add_option("--steps", train_args.steps)->capture_default_str();
  train_cmd->add_option("--batch", train_args.batch)->capture_default_str();
  train_cmd->add_option("--n-train", train_args.n_train)->capture_default_str();
  train_cmd->add_option("--n-test", train_args.n_test)->capture_default_str();
  train_cmd->add_option("--seed", train_args.seed)->capture_default_str();
  train_cmd->add_option("--lr", train_args.lr)->capture_default_str();
  train_cmd->add_option("--weight-decay", train_args.weight_decay)->capture_default_str();
  train_cmd->add_option("--label-smoothing", train_args.label_smoothing)->capture_default_str();
  train_cmd->add_option("--warmup", train_args.warmup, "Warmup steps (-1: 5/300 of the run)")->capture_default_str();
  train_cmd->add_option("--clip-grad", train_args.clip, "Global gradient-norm clip (0: off)")->capture_default_str();
  train_cmd->add_option("--out", train_args.out, "Output directory")->capture_default_str();
  train_cmd->add_flag("--cache-data", train_args.cache_data, "Also write the generated datasets");
  train_cmd->add_flag("--quiet", train_args.quiet);

  auto* eval_cmd = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint");
  EvalArgs eval_args;
  eval_cmd->add_option("--ckpt", eval_args.ckpt)->required();
  eval_cmd->add_option("--split", eval_args.split)->check(CLI::IsMember({"train", "test"}))->capture_default_str();
  eval_cmd->add_option("--data", eval_args.data, "Dataset cache stem (instead of regenerating)");
  eval_cmd->add_option("--seed", eval_args.seed, "Seed the splits were generated from")->capture_default_str();
  eval_cmd->add_option("--n-train", eval_args.n_train)->capture_default_str();
  eval_cmd->add_option("--n-test", eval_args.n_test)->capture_default_str();

  auto* export_cmd = app.add_subcommand("export", "Attention maps and word feature maps");
  export_cfg.attach(export_cmd);
  ExportArgs export_args;
  export_cmd->add_option("--ckpt", export_args.ckpt, "Checkpoint (default: freshly built model)");
  export_cmd->add_option("--kind", export_args.kind)
      ->check(CLI::IsMember({"inner-attn", "outer-attn", "class-attn", "word-maps"}))
      ->capture_default_str();
  export_cmd->add_option("--layer", export_args.layer)->capture_default_str();
  export_cmd->add_option("--sentence", export_args.sentence)->capture_default_str();
  export_cmd->add_option("--head", export_args.head, "Head index, mean or all")->capture_default_str();
  export_cmd->add_option("--image", export_args.image, "PPM (P6) or raw tensor image; default: a held-out sample");
  export_cmd->add_option("--sample", export_args.sample, "Held-out sample index when no --image")
      ->capture_default_str();
  export_cmd->add_option("--seed", export_args.seed)->capture_default_str();
  export_cmd->add_option("--out", export_args.out, "Output file (default: <kind>.tnta)");
  export_cmd->add_flag("--csv", export_args.csv, "Write CSV instead of the binary format");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*describe) return cmd_describe(describe_cfg, describe_json);
    if (*check) return cmd_check(check_cfg, check_args);
    if (*train_cmd) return cmd_train(train_cfg, train_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*export_cmd) return cmd_export(export_cfg, export_args);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::out_of_range& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
