#pragma once

#include <string>
#include <vector>

#include "toxpipe/config.hpp"

namespace toxpipe::pipeline {

// Pipeline stages in run order. Each validates its inputs, emits its module's
// artifacts under out_dir, and writes a run manifest (inputs with content
// fingerprints, seeds, tool version, wall time) to out_dir/manifests/.
void run_extract(const config::PipelineConfig& cfg);
void run_filter(const config::PipelineConfig& cfg);
void run_ingest(const config::PipelineConfig& cfg);
void run_aggregate(const config::PipelineConfig& cfg);
void run_split(const config::PipelineConfig& cfg);
void run_train(const config::PipelineConfig& cfg);
void run_tune(const config::PipelineConfig& cfg);
void run_evaluate(const config::PipelineConfig& cfg);
void run_baseline(const config::PipelineConfig& cfg);
void run_calibrate(const config::PipelineConfig& cfg);
void run_score(const config::PipelineConfig& cfg);
void run_analyze(const config::PipelineConfig& cfg);

const std::vector<std::string>& stage_names();

// Dispatch by name; throws `config` for unknown stages.
void run_stage(const std::string& stage, const config::PipelineConfig& cfg);

}  // namespace toxpipe::pipeline
