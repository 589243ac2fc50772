// Copyright 2026 The WDDA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wdda/cli.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "wdda/alignment.hpp"
#include "wdda/checkpoint.hpp"
#include "wdda/config.hpp"
#include "wdda/critic.hpp"
#include "wdda/data_synth.hpp"
#include "wdda/eval.hpp"

namespace wdda {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) {
    throw UsageError(std::string(what) + " not found: " + path);
  }
}

void require_dataset(const std::string& dir) {
  if (!fs::is_regular_file(fs::path(dir) / "annotations.jsonl")) {
    throw UsageError("dataset not found: " + dir +
                     " (no annotations.jsonl)");
  }
}

struct StageOptions {
  std::string config;
  std::string data;
  std::string source;
  std::string target;
  std::string source_ckpt;
  std::string out;
  std::string metrics;
  std::optional<std::uint64_t> seed;
};

RunConfig stage_config(const StageOptions& o) {
  require_file(o.config, "config file");
  RunConfig c = load_config(o.config);
  if (o.seed) c.align.seed = *o.seed;
  return c;
}

void write_metrics(const MetricsLog& log, const StageOptions& o,
                   const RunConfig& c) {
  fs::path path = o.metrics;
  if (path.empty() && !c.output_dir.empty()) {
    fs::create_directories(c.output_dir);
    path = fs::path(c.output_dir) / "metrics.csv";
  }
  if (!path.empty()) log.append_to_file(path);
}

void print_warnings(const std::vector<std::string>& warnings,
                    std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

Checkpoint stage_checkpoint(const std::string& path) {
  require_file(path, "checkpoint");
  return load_checkpoint(path);
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"Wasserstein domain adaptation for two-stage detection",
               "wdda"};
  app.require_subcommand(1);
  std::function<void()> action;

  // gen-data
  std::string scenario = "fog";
  std::size_t count = 500;
  std::size_t test_count = 0;
  std::uint64_t data_seed = 0;
  std::string data_out;
  auto* gen = app.add_subcommand("gen-data", "Render a source/target dataset pair");
  gen->add_option("--scenario", scenario, "fog | style (presets fog-v1, style-v1)")
      ->check(CLI::IsMember({"fog", "style", "fog-v1", "style-v1"}));
  gen->add_option("--count", count, "Images per domain")->check(CLI::PositiveNumber);
  gen->add_option("--test-count", test_count, "Extra held-out target images");
  gen->add_option("--seed", data_seed, "Random seed");
  gen->add_option("--out", data_out, "Output directory")->required();
  gen->callback([&] {
    action = [&] {
      const Scenario sc = parse_scenario(scenario);
      auto [src, tgt] = make_domain_pair(sc, count, data_seed);
      save_dataset(src, fs::path(data_out) / "source");
      save_dataset(tgt, fs::path(data_out) / "target");
      out << "wrote " << count << " " << scenario_preset_name(sc)
          << " image pairs to " << data_out << '\n';
      if (test_count > 0) {
        auto test = make_domain_pair(sc, test_count, held_out_seed(data_seed));
        save_dataset(test.second, fs::path(data_out) / "target_test");
        out << "wrote " << test_count << " held-out target images\n";
      }
    };
  });

  StageOptions so;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", so.config, "Config file")->required();
    sub->add_option("--out", so.out, "Output checkpoint")->required();
    sub->add_option("--metrics", so.metrics, "Metrics CSV to append to");
    sub->add_option("--seed", so.seed, "Override the config seed");
  };

  auto* train = app.add_subcommand("train-source", "Pretrain the source detector");
  add_common(train);
  train->add_option("--data", so.data, "Source dataset directory")->required();
  train->callback([&] {
    action = [&] {
      RunConfig c = stage_config(so);
      require_dataset(so.data);
      const Dataset source = load_dataset(so.data);
      MetricsLog log;
      std::vector<std::string> warnings;
      Checkpoint ck = train_source(source, c.align, {&log, &warnings, {}});
      print_warnings(warnings, err);
      save_checkpoint(ck, so.out);
      write_metrics(log, so, c);
      const auto& recs = log.records();
      out << "train-source: " << ck.step << " steps";
      if (!recs.empty()) out << ", final detection loss " << fmt(*recs.back().loss_det);
      out << ", checkpoint " << so.out << '\n';
    };
  });

  auto add_align = [&](CLI::App* sub) {
    add_common(sub);
    sub->add_option("--source-ckpt,--ckpt", so.source_ckpt,
                    "Checkpoint of the previous stage")
        ->required();
    sub->add_option("--source", so.source, "Source dataset directory")->required();
    sub->add_option("--target", so.target, "Target dataset directory")->required();
  };
  auto run_align = [&](bool global) {
    RunConfig c = stage_config(so);
    Checkpoint prev = stage_checkpoint(so.source_ckpt);
    require_dataset(so.source);
    require_dataset(so.target);
    const Dataset source = load_dataset(so.source);
    const Dataset target = load_dataset(so.target);
    MetricsLog log;
    std::vector<std::string> warnings;
    const TrainHooks hooks{&log, &warnings, {}};
    Checkpoint ck = global ? phase1_global_align(prev, source, target, c.align, hooks)
                           : phase2_local_align(prev, source, target, c.align, hooks);
    print_warnings(warnings, err);
    save_checkpoint(ck, so.out);
    write_metrics(log, so, c);
    out << (global ? "align-global: " : "align-local: ") << ck.step << " steps";
    if (!log.records().empty()) {
      out << ", final W estimate " << fmt(*log.records().back().w_estimate);
    }
    out << ", checkpoint " << so.out << '\n';
  };

  auto* align_g = app.add_subcommand("align-global", "Phase 1: global feature alignment");
  add_align(align_g);
  align_g->callback([&] { action = [&] { run_align(true); }; });
  auto* align_l = app.add_subcommand("align-local", "Phase 2: local ROI alignment");
  add_align(align_l);
  align_l->callback([&] { action = [&] { run_align(false); }; });

  std::string eval_ckpt, eval_data, domain = "target";
  double eval_iou = 0.5;
  auto* ev = app.add_subcommand("evaluate", "Per-class AP and mAP on a dataset");
  ev->add_option("--ckpt", eval_ckpt, "Checkpoint")->required();
  ev->add_option("--data", eval_data, "Dataset directory")->required();
  ev->add_option("--domain", domain, "Backbone to use")
      ->check(CLI::IsMember({"source", "target"}));
  ev->add_option("--iou", eval_iou, "IoU threshold")->check(CLI::Range(1e-9, 1.0));
  ev->callback([&] {
    action = [&] {
      Checkpoint ck = stage_checkpoint(eval_ckpt);
      require_dataset(eval_data);
      const Dataset data = load_dataset(eval_data);
      Models& m = ck.models;
      Network& backbone =
          domain == "source" ? m.source_backbone : m.target_backbone;
      const EvalReport r = evaluate(backbone, m.heads, data, m.detector, eval_iou);
      out << format_report(r) << '\n';
    };
  });

  int dim = 1;
  std::vector<double> delta;
  PointCriticOptions bench;
  std::size_t bench_count = 1024;
  bool contrast = true;
  auto* cb = app.add_subcommand("critic-bench",
                                "Train a critic on shifted Gaussians and compare "
                                "with the exact distance");
  cb->add_option("--dim", dim, "Sample dimension")->check(CLI::PositiveNumber);
  cb->add_option("--delta", delta, "Shift vector (dim values)")->required();
  cb->add_option("--steps", bench.steps, "Critic steps")->check(CLI::PositiveNumber);
  cb->add_option("--count", bench_count, "Samples per domain")->check(CLI::PositiveNumber);
  cb->add_option("--lr", bench.lr, "Critic learning rate")->check(CLI::PositiveNumber);
  cb->add_option("--seed", bench.seed, "Random seed");
  cb->add_flag("!--no-contrast", contrast,
               "Skip the cross-entropy gradient comparison");
  cb->callback([&] {
    action = [&] {
      if (delta.size() != static_cast<std::size_t>(dim)) {
        throw UsageError("--delta needs " + std::to_string(dim) +
                         " values, got " + std::to_string(delta.size()));
      }
      double truth = 0.0;
      for (double d : delta) truth += d * d;
      truth = std::sqrt(truth);
      const PointPair pair = gen_gaussian_pair(dim, delta, bench_count, bench.seed);
      const PointCriticResult r = train_point_critic(pair.source, pair.target, bench);
      out << "truth " << fmt(truth) << " estimate " << fmt(r.estimate)
          << " relative_error " << fmt(std::abs(r.estimate - truth) / std::max(truth, 1e-12))
          << '\n';
      if (dim == 1) {
        const auto s = pair.source.data();
        const auto t = pair.target.data();
        out << "exact_1d " << fmt(exact_w1_sorted({s.begin(), s.end()}, {t.begin(), t.end()}))
            << '\n';
      }
      if (contrast) {
        const GradientContrast g =
            generator_gradient_contrast(pair.source, pair.target, bench);
        out << "ce_loss " << fmt(g.ce_classifier_loss) << " ce_grad "
            << fmt(g.ce_reversal_grad) << " ce_reversed_label_grad "
            << fmt(g.ce_reversed_label_grad) << " wasserstein_grad "
            << fmt(g.wasserstein_grad) << '\n';
      }
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const PhaseOrderError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace wdda
