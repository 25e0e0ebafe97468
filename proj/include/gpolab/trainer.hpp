#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpolab/alignment.hpp"
#include "gpolab/optimizer.hpp"
#include "gpolab/sampler.hpp"
#include "gpolab/tasks.hpp"

namespace gpolab::trainer {

// Full experiment description. Serialized to config.cfg as key=value lines.
struct RunConfig {
    std::string task = "dot-count";
    std::string objective = "gpo";         // sft | dpo | group-dpo | gpo
    std::string pair_strategy = "all";     // dpo objective: all | max | min
    std::string timestep_range = "all";    // all | high | low
    std::string advantage_mode = "zscore"; // gpo objective: zscore | sign
    std::string schedule = "flow-matching";

    int group_size = 32;
    int k = 5;
    int tau = 3;
    int epochs = 2;
    int sampler_steps = 20;
    int prompt_batch = 8;
    int prompts_per_epoch = 0;  // 0 = every training prompt
    int eval_trials = 4;
    int eval_records = 0;       // 0 = every held-out record
    bool online = true;

    double learning_rate = 1e-4;
    double beta = 2.0;
    double grad_clip = 1.0;
    double weight_decay = 0.0;
    double timestep_shift = 3.0;

    // model
    int hidden_dim = 128;
    int n_hidden = 2;
    int embed_dim = 32;

    // sft phase
    int sft_steps = 3000;
    int sft_batch = 64;
    double sft_lr = 1e-3;

    uint64_t seed = 0;

    void validate() const;
    std::map<std::string, std::string> to_kv() const;
    static RunConfig from_kv(const std::map<std::string, std::string>& kv);
};

// key=value config file helpers (CLI flags override file entries).
std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path);
void write_kv_file(const std::filesystem::path& path,
                   const std::map<std::string, std::string>& kv);

bool timestep_range_filter(const std::string& range, double t);

struct EvalResult {
    double mean_reward = 0.0;
    double accuracy = 0.0;
    double pass_at_k = 0.0;
    double diversity = 0.0;
};

// Mutable training state. The reference store is replaced by the policy
// exactly at batch boundaries (Algorithm-1 style refresh); in between its
// outputs are bit-identical to the snapshot taken at the last refresh.
struct TrainState {
    DenoiserConfig model;
    ParamStore policy;
    ParamStore reference;
    AdamW optimizer;
    uint64_t step = 0;
    int epochs_done = 0;
    uint64_t run_seed = 0;
};

// One prompt's group of generations with rewards and advantages.
struct SampleGroup {
    int condition = 0;
    Array samples;  // [G, data_dim]
    rewards::RewardVector reward;
    rewards::AdvantageVector advantage;
};

class Trainer {
public:
    Trainer(RunConfig cfg, tasks::TaskSpec task, tasks::Dataset data,
            std::filesystem::path run_dir);

    // SFT pretraining from random init; writes the final checkpoint and
    // returns the trained parameters.
    ParamStore pretrain_sft();

    // Alignment run starting from `init`. If `resume` and an epoch
    // checkpoint exists in the run dir, continues from it instead.
    void align(const ParamStore& init, bool resume = false);

    EvalResult evaluate(const ParamStore& params, int epoch_tag, bool write_samples);

    const TrainState& state() const { return state_; }
    const std::filesystem::path& dir() const { return run_dir_; }

    // Exposed for tests: one aligned batch over explicit prompt groups.
    // Returns the number of skipped groups.
    int train_batch(const std::vector<size_t>& prompt_indices, int epoch,
                    size_t batch_index, std::vector<SampleGroup>* out_groups = nullptr);

    SampleGroup build_group(size_t prompt_index, int epoch);

private:
    void init_state(const ParamStore& init);
    void write_metrics_row(int epoch, double mean_reward, int skipped, double grad_norm,
                           double diversity);
    void save_checkpoint();
    bool try_resume();
    std::vector<size_t> epoch_prompts(int epoch) const;
    std::vector<double> draw_timesteps(Rng& rng) const;

    double batch_loss_and_step(const std::vector<SampleGroup>& groups,
                               const std::vector<size_t>& prompt_indices, int epoch,
                               int iteration);

    RunConfig cfg_;
    tasks::TaskSpec task_;
    tasks::Dataset data_;
    std::filesystem::path run_dir_;
    NoiseSchedule sched_;
    TimestepSampler t_sampler_;
    TrainState state_;
    std::ofstream metrics_;
    EvalResult last_eval_;
    // offline mode: groups frozen at their first construction
    std::map<size_t, SampleGroup> frozen_groups_;
};

std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

}  // namespace gpolab::trainer
