#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "gpolab/trainer.hpp"

namespace gpolab::experiments {

// Final metrics of one run directory, read back from metrics.csv and the
// per-epoch eval sample files.
struct RunSummary {
    std::string run_name;
    std::filesystem::path dir;
    std::map<std::string, std::string> config;
    double baseline_reward = 0.0;
    double final_reward = 0.0;
    double baseline_accuracy = 0.0;
    double final_accuracy = 0.0;
    double baseline_pass4 = 0.0;
    double final_pass4 = 0.0;
    int last_epoch = 0;
    bool ok = false;
};

RunSummary summarize_run(const std::filesystem::path& run_dir, std::ostream* warnings = nullptr);

// Training-reward curve: (step, mean_reward) from the per-batch metrics rows.
std::vector<std::pair<uint64_t, double>> reward_curve(const std::filesystem::path& run_dir,
                                                      std::ostream* warnings = nullptr);

// Short identity of a run, built from the config axes that plans vary.
// Seed excluded, so seeds of one variant share a label.
std::string variant_label(const std::map<std::string, std::string>& config);

// summary.csv + aggregate.csv (per-variant mean/std across seeds) +
// curves.csv (long format: series,seed,step,mean_reward).
void write_report(const std::vector<std::filesystem::path>& run_dirs,
                  const std::filesystem::path& out_dir, std::ostream* warnings = nullptr);

struct PlanOptions {
    trainer::RunConfig base;
    tasks::TaskSpec task;
    tasks::Dataset data;
    ParamStore init;
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
    std::filesystem::path out_dir;
    std::ostream* log = nullptr;
};

// Pair-margin study: DPO with ALL/MAX/MIN selection, Group DPO, and GPO,
// all with G=4 from the same checkpoint. Every other plan varies exactly
// one axis of the base config.
std::vector<std::filesystem::path> run_margin_plan(const PlanOptions& options);
std::vector<std::filesystem::path> run_group_size_plan(const PlanOptions& options,
                                                       const std::vector<int>& sizes);
std::vector<std::filesystem::path> run_standardization_plan(const PlanOptions& options);
std::vector<std::filesystem::path> run_online_offline_plan(const PlanOptions& options);
std::vector<std::filesystem::path> run_timestep_plan(const PlanOptions& options);

}  // namespace gpolab::experiments
