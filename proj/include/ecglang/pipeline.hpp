#pragma once

#include <string>

#include "ecglang/config.hpp"

namespace ecglang::pipeline {

// Command bodies shared by the CLI and the acceptance suite. Each echoes
// the config hash on stdout and throws on failure (ConfigError -> exit 1,
// DataError -> 2, NumericalFault -> 3 at the CLI boundary).

// Writes records/, per-record .peaks sidecars and manifest.csv to out_dir.
void cmd_synth(const cfg::PipelineConfig& config);

// Filters + detects + segments + assembles every manifest record into
// out_dir/cache/<id>.tns, plus cache/index.json, preprocess_summary.json
// and features.csv. Records that fail are reported, then a DataError is
// raised at the end.
void cmd_preprocess(const cfg::PipelineConfig& config);

// Fits the model on the cached features; writes checkpoint.{tns,json} and
// metrics.jsonl to out_dir.
void cmd_train(const cfg::PipelineConfig& config);

// Greedy report generation over the checkpoint's test split;
// writes generations.csv.
void cmd_generate(const cfg::PipelineConfig& config);

// Zero-shot disease detection over the test split; writes dd_scores.csv.
void cmd_detect(const cfg::PipelineConfig& config);

// Computes the MetricsReport from generations and/or score files; empty
// path skips that section. Writes metrics.json to out_dir.
void cmd_evaluate(const cfg::PipelineConfig& config, const std::string& generations_csv,
                  const std::string& scores_csv);

// Default artifact locations under out_dir.
std::string checkpoint_prefix(const cfg::PipelineConfig& config);

} // namespace ecglang::pipeline
