// Copyright 2026 The Pairflow Authors
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

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pairflow/errors.hpp"
#include "pairflow/pipeline.hpp"

namespace {

using pairflow::StudyConfig;

struct Overrides {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> outdir;
  std::optional<std::string> corpus;
  std::optional<double> quantile;
  std::optional<double> caliper;
  std::optional<int> synth_n;
  std::optional<int> cpt_B;
};

void add_common_options(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("-c,--config", ov.config_path, "study config file (JSON)");
  cmd->add_option("--seed", ov.seed, "master seed (overrides config)");
  cmd->add_option("-o,--outdir", ov.outdir, "output directory (overrides config)");
  cmd->add_option("--corpus", ov.corpus, "corpus file (overrides config source)");
  cmd->add_option("--quantile", ov.quantile, "treatment quantile (overrides config)");
  cmd->add_option("--caliper", ov.caliper, "dose caliper (overrides config)");
  cmd->add_option("--synth-n", ov.synth_n, "synthetic corpus size (overrides config)");
  cmd->add_option("--cpt-b", ov.cpt_B, "CPT permutation count (overrides config)");
}

StudyConfig resolve_config(const Overrides& ov) {
  StudyConfig cfg;
  if (ov.config_path) {
    cfg = StudyConfig::from_file(*ov.config_path);
  } else {
    // Minimal default: a seeded synthetic study.
    cfg.synthetic = StudyConfig::SyntheticBlock{};
  }
  if (ov.seed) cfg.master_seed = *ov.seed;
  if (ov.outdir) cfg.outdir = *ov.outdir;
  if (ov.corpus) {
    cfg.corpus_path = *ov.corpus;
    cfg.synthetic.reset();
  }
  if (ov.quantile) cfg.treatment_quantile = *ov.quantile;
  if (ov.caliper) cfg.cost.dose_caliper = *ov.caliper;
  if (ov.synth_n && cfg.synthetic) cfg.synthetic->n = *ov.synth_n;
  if (ov.cpt_B) cfg.cpt_B = *ov.cpt_B;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pairflow: matched-pair study designs via tripartite network flow"};
  app.require_subcommand(1);

  Overrides ov;
  std::string plot_kind;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  add_common_options(synth, ov);
  CLI::App* ingest = app.add_subcommand("ingest", "validate and normalize a corpus file");
  add_common_options(ingest, ov);
  std::string ingest_out;
  ingest->add_option("--out", ingest_out, "normalized corpus destination")->required();
  CLI::App* cluster = app.add_subcommand("cluster", "spectral-cluster topic labels");
  add_common_options(cluster, ov);
  CLI::App* match = app.add_subcommand("match", "filter, assign treatment, fit, match");
  add_common_options(match, ov);
  CLI::App* diagnose =
      app.add_subcommand("diagnose", "balance, gaps, similarity and CPT diagnostics");
  add_common_options(diagnose, ov);
  CLI::App* infer = app.add_subcommand("infer", "exact McNemar test and odds ratio");
  add_common_options(infer, ov);
  CLI::App* run_all = app.add_subcommand("run-all", "full pipeline with manifest");
  add_common_options(run_all, ov);
  CLI::App* plot = app.add_subcommand("plot-data", "emit plot-ready data files");
  add_common_options(plot, ov);
  plot->add_option("--kind", plot_kind,
                   "propensity-hist | similarity-hist | gap-box | cpt-hist")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const StudyConfig cfg = resolve_config(ov);
    if (synth->parsed()) {
      const auto path = pairflow::stage_synth(cfg);
      std::cout << "wrote " << path.string() << "\n";
    } else if (ingest->parsed()) {
      if (!cfg.corpus_path) {
        throw pairflow::ConfigError("ingest: a corpus file is required");
      }
      const pairflow::Corpus corpus = pairflow::load_corpus(*cfg.corpus_path);
      pairflow::save_corpus(ingest_out, corpus);
      std::cout << "wrote " << ingest_out << " (" << corpus.size() << " records)\n";
    } else if (cluster->parsed()) {
      const auto path = pairflow::stage_cluster(cfg);
      std::cout << "wrote " << path.string() << "\n";
    } else if (match->parsed()) {
      pairflow::stage_match(cfg);
      std::cout << "wrote match artifacts under " << cfg.outdir.string() << "\n";
    } else if (diagnose->parsed()) {
      pairflow::stage_diagnose(cfg);
      std::cout << "wrote diagnostics under " << cfg.outdir.string() << "\n";
    } else if (infer->parsed()) {
      pairflow::stage_infer(cfg);
      std::cout << "wrote " << (cfg.outdir / "inference.json").string() << "\n";
    } else if (run_all->parsed()) {
      const pairflow::ReportBundle bundle = pairflow::run_and_write(cfg);
      std::cout << "pairs=" << bundle.pairs.pairs.size()
                << " p_value=" << bundle.p_value
                << " odds_ratio=" << bundle.odds.point << "\n"
                << "bundle written under " << cfg.outdir.string() << "\n";
    } else if (plot->parsed()) {
      const auto path = pairflow::emit_plot_data(cfg.outdir, plot_kind);
      std::cout << "wrote " << path.string() << "\n";
    }
  } catch (const pairflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pairflow::ValidationError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const pairflow::InfeasibleError& e) {
    std::cerr << "infeasible matching: " << e.what() << "\n";
    return 3;
  } catch (const pairflow::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
