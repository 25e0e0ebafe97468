#include "gpolab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>

#include <json.hpp>

#include "gpolab/kernels.hpp"

namespace gpolab::trainer {

using nlohmann::json;

namespace {

// rng stream tags
constexpr uint64_t kStreamGen = 1;
constexpr uint64_t kStreamT = 2;
constexpr uint64_t kStreamEps = 3;
constexpr uint64_t kStreamEval = 4;
constexpr uint64_t kStreamShuffle = 5;
constexpr uint64_t kStreamSft = 6;
constexpr uint64_t kStreamInit = 7;

constexpr const char* kMetricsHeader =
    "step,epoch,objective,mean_reward,pass_at_4,skipped_groups,grad_norm,diversity";

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

double group_diversity(const Array& samples) {
    const size_t g = samples.rows(), d = samples.cols();
    if (g < 2) return 0.0;
    double total = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < g; ++i) {
        for (size_t j = i + 1; j < g; ++j) {
            double sq = 0.0;
            for (size_t c = 0; c < d; ++c) {
                const double diff =
                    static_cast<double>(samples.at(i, c)) - static_cast<double>(samples.at(j, c));
                sq += diff * diff;
            }
            total += std::sqrt(sq);
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace

void RunConfig::validate() const {
    if (objective != "sft" && objective != "dpo" && objective != "group-dpo" &&
        objective != "gpo") {
        throw ConfigError("unknown objective: " + objective);
    }
    if (advantage_mode != "zscore" && advantage_mode != "sign") {
        throw ConfigError("unknown advantage mode: " + advantage_mode);
    }
    if (timestep_range != "all" && timestep_range != "high" && timestep_range != "low") {
        throw ConfigError("unknown timestep range: " + timestep_range);
    }
    if (group_size < 2) throw ConfigError("group_size must be >= 2");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (tau < 1) throw ConfigError("tau must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (sampler_steps < 1) throw ConfigError("sampler_steps must be >= 1");
    if (prompt_batch < 1) throw ConfigError("prompt_batch must be >= 1");
    if (eval_trials < 1) throw ConfigError("eval_trials must be >= 1");
    if (beta <= 0.0) throw ConfigError("beta must be positive");
    if (timestep_shift <= 0.0) throw ConfigError("timestep_shift must be positive");
    (void)schedule_kind_from_string(schedule);
    (void)alignment::pair_strategy_from_string(pair_strategy);
}

std::map<std::string, std::string> RunConfig::to_kv() const {
    std::map<std::string, std::string> kv;
    kv["task"] = task;
    kv["objective"] = objective;
    kv["pair_strategy"] = pair_strategy;
    kv["timestep_range"] = timestep_range;
    kv["advantage_mode"] = advantage_mode;
    kv["schedule"] = schedule;
    kv["group_size"] = std::to_string(group_size);
    kv["k"] = std::to_string(k);
    kv["tau"] = std::to_string(tau);
    kv["epochs"] = std::to_string(epochs);
    kv["sampler_steps"] = std::to_string(sampler_steps);
    kv["prompt_batch"] = std::to_string(prompt_batch);
    kv["prompts_per_epoch"] = std::to_string(prompts_per_epoch);
    kv["eval_trials"] = std::to_string(eval_trials);
    kv["eval_records"] = std::to_string(eval_records);
    kv["online"] = online ? "true" : "false";
    kv["learning_rate"] = fmt(learning_rate);
    kv["beta"] = fmt(beta);
    kv["grad_clip"] = fmt(grad_clip);
    kv["weight_decay"] = fmt(weight_decay);
    kv["timestep_shift"] = fmt(timestep_shift);
    kv["hidden_dim"] = std::to_string(hidden_dim);
    kv["n_hidden"] = std::to_string(n_hidden);
    kv["embed_dim"] = std::to_string(embed_dim);
    kv["sft_steps"] = std::to_string(sft_steps);
    kv["sft_batch"] = std::to_string(sft_batch);
    kv["sft_lr"] = fmt(sft_lr);
    kv["seed"] = std::to_string(seed);
    return kv;
}

RunConfig RunConfig::from_kv(const std::map<std::string, std::string>& kv) {
    RunConfig cfg;
    auto str = [&kv](const std::string& key, std::string& out) {
        auto it = kv.find(key);
        if (it != kv.end()) out = it->second;
    };
    auto num = [&kv](const std::string& key, auto& out) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        try {
            if constexpr (std::is_same_v<std::decay_t<decltype(out)>, double>) {
                out = std::stod(it->second);
            } else if constexpr (std::is_same_v<std::decay_t<decltype(out)>, uint64_t>) {
                out = std::stoull(it->second);
            } else {
                out = std::stoi(it->second);
            }
        } catch (const std::exception&) {
            throw ConfigError("bad value for " + key + ": " + it->second);
        }
    };
    str("task", cfg.task);
    str("objective", cfg.objective);
    str("pair_strategy", cfg.pair_strategy);
    str("timestep_range", cfg.timestep_range);
    str("advantage_mode", cfg.advantage_mode);
    str("schedule", cfg.schedule);
    num("group_size", cfg.group_size);
    num("k", cfg.k);
    num("tau", cfg.tau);
    num("epochs", cfg.epochs);
    num("sampler_steps", cfg.sampler_steps);
    num("prompt_batch", cfg.prompt_batch);
    num("prompts_per_epoch", cfg.prompts_per_epoch);
    num("eval_trials", cfg.eval_trials);
    num("eval_records", cfg.eval_records);
    auto it = kv.find("online");
    if (it != kv.end()) {
        if (it->second != "true" && it->second != "false") {
            throw ConfigError("online must be true or false");
        }
        cfg.online = it->second == "true";
    }
    num("learning_rate", cfg.learning_rate);
    num("beta", cfg.beta);
    num("grad_clip", cfg.grad_clip);
    num("weight_decay", cfg.weight_decay);
    num("timestep_shift", cfg.timestep_shift);
    num("hidden_dim", cfg.hidden_dim);
    num("n_hidden", cfg.n_hidden);
    num("embed_dim", cfg.embed_dim);
    num("sft_steps", cfg.sft_steps);
    num("sft_batch", cfg.sft_batch);
    num("sft_lr", cfg.sft_lr);
    num("seed", cfg.seed);
    return cfg;
}

std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file: " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("malformed config line: " + line);
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

void write_kv_file(const std::filesystem::path& path,
                   const std::map<std::string, std::string>& kv) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ConfigError("cannot write config file: " + path.string());
    for (const auto& [key, value] : kv) os << key << "=" << value << "\n";
}

bool timestep_range_filter(const std::string& range, double t) {
    if (range == "all") return true;
    if (range == "high") return t >= 0.5;
    if (range == "low") return t < 0.5;
    throw ConfigError("unknown timestep range: " + range);
}

Trainer::Trainer(RunConfig cfg, tasks::TaskSpec task, tasks::Dataset data,
                 std::filesystem::path run_dir)
    : cfg_(std::move(cfg)), task_(std::move(task)), data_(std::move(data)),
      run_dir_(std::move(run_dir)) {
    cfg_.validate();
    task_.validate();
    if (data_.train.empty() || data_.test.empty()) {
        throw ConfigError("trainer: dataset has empty train or test split");
    }
    sched_ = make_schedule(schedule_kind_from_string(cfg_.schedule));
    t_sampler_.mode = TimestepSampler::Mode::Shifted;
    t_sampler_.shift = cfg_.timestep_shift;
    state_.run_seed = cfg_.seed;
    std::filesystem::create_directories(run_dir_);
    std::filesystem::create_directories(run_dir_ / "checkpoints");
    std::filesystem::create_directories(run_dir_ / "samples");
}

void Trainer::init_state(const ParamStore& init) {
    state_.model = config_from_store(init);
    if (state_.model.data_dim != task_.data_dim() ||
        state_.model.n_conditions != task_.n_conditions()) {
        throw ConfigError("trainer: checkpoint model does not fit task dimensions");
    }
    state_.policy = init;
    state_.reference = init;
    AdamWConfig opt;
    opt.lr = cfg_.learning_rate;
    opt.clip_norm = cfg_.grad_clip;
    opt.weight_decay = cfg_.weight_decay;
    state_.optimizer = AdamW(opt);
    state_.step = 0;
    state_.epochs_done = 0;
}

void Trainer::write_metrics_row(int epoch, double mean_reward, int skipped, double grad_norm,
                                double diversity) {
    metrics_ << state_.step << "," << epoch << "," << cfg_.objective << "," << fmt(mean_reward)
             << "," << fmt(last_eval_.pass_at_k) << "," << skipped << "," << fmt(grad_norm)
             << "," << fmt(diversity) << "\n";
    metrics_.flush();
}

std::vector<size_t> Trainer::epoch_prompts(int epoch) const {
    std::vector<size_t> order(data_.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg_.seed, kStreamShuffle, static_cast<uint64_t>(epoch)));
    rng.shuffle(order);
    if (cfg_.prompts_per_epoch > 0 &&
        static_cast<size_t>(cfg_.prompts_per_epoch) < order.size()) {
        order.resize(static_cast<size_t>(cfg_.prompts_per_epoch));
    }
    return order;
}

std::vector<double> Trainer::draw_timesteps(Rng& rng) const {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(cfg_.k));
    int guard = 0;
    while (out.size() < static_cast<size_t>(cfg_.k)) {
        const double t = t_sampler_.sample(rng);
        if (timestep_range_filter(cfg_.timestep_range, t)) out.push_back(t);
        if (++guard > 1000000) throw ConfigError("timestep filter rejected every draw");
    }
    return out;
}

SampleGroup Trainer::build_group(size_t prompt_index, int epoch) {
    if (!cfg_.online) {
        auto it = frozen_groups_.find(prompt_index);
        if (it != frozen_groups_.end()) return it->second;
    }
    const tasks::DataRecord& rec = data_.train.at(prompt_index);
    const size_t g = static_cast<size_t>(cfg_.group_size);
    std::vector<int> conds(g, rec.condition);
    std::vector<uint64_t> seeds(g);
    const uint64_t gen_epoch = cfg_.online ? static_cast<uint64_t>(epoch) : 0;
    for (size_t m = 0; m < g; ++m) {
        seeds[m] = derive_seed(cfg_.seed, kStreamGen, gen_epoch, prompt_index, m);
    }

    SampleGroup group;
    group.condition = rec.condition;
    group.samples =
        generate_group(state_.model, state_.reference, conds, cfg_.sampler_steps, sched_, seeds);
    group.reward.source = task_.id;
    group.reward.values.reserve(g);
    for (size_t m = 0; m < g; ++m) {
        Array row({state_.model.data_dim});
        for (size_t d = 0; d < row.numel(); ++d) row.data[d] = group.samples.at(m, d);
        group.reward.values.push_back(tasks::reward_of(task_, row, rec.condition));
    }
    group.advantage = cfg_.objective == "gpo" && cfg_.advantage_mode == "sign"
                          ? rewards::sign_advantages(group.reward)
                          : rewards::standardize(group.reward);
    if (!cfg_.online) frozen_groups_.emplace(prompt_index, group);
    return group;
}

double Trainer::batch_loss_and_step(const std::vector<SampleGroup>& groups,
                                    const std::vector<size_t>& prompt_indices, int epoch,
                                    int iteration) {
    const size_t g = static_cast<size_t>(cfg_.group_size);
    const size_t kk = static_cast<size_t>(cfg_.k);
    const size_t d = state_.model.data_dim;
    const size_t n_groups = groups.size();
    const size_t rows = n_groups * g * kk;

    Array x0({rows, d});
    Array eps({rows, d});
    std::vector<double> t_rows(rows);
    std::vector<int> cond_rows(rows);

    for (size_t gi = 0; gi < n_groups; ++gi) {
        const SampleGroup& group = groups[gi];
        const uint64_t pid = prompt_indices[gi];
        Rng t_rng(derive_seed(cfg_.seed, kStreamT, static_cast<uint64_t>(epoch),
                              static_cast<uint64_t>(iteration), pid));
        Rng eps_rng(derive_seed(cfg_.seed, kStreamEps, static_cast<uint64_t>(epoch),
                                static_cast<uint64_t>(iteration), pid));
        const std::vector<double> t_list = draw_timesteps(t_rng);
        for (size_t i = 0; i < g; ++i) {
            for (size_t j = 0; j < kk; ++j) {
                const size_t row = (gi * g + i) * kk + j;
                for (size_t c = 0; c < d; ++c) {
                    x0.at(row, c) = group.samples.at(i, c);
                    eps.at(row, c) = static_cast<float>(eps_rng.normal());
                }
                t_rows[row] = t_list[j];
                cond_rows[row] = group.condition;
            }
        }
    }

    Tape tape;
    NodeId s = alignment::residual_rows(tape, state_.model, state_.policy, state_.reference, x0,
                                        t_rows, cond_rows, eps, sched_);
    NodeId loss;
    if (cfg_.objective == "dpo") {
        const alignment::PairStrategy strategy =
            alignment::pair_strategy_from_string(cfg_.pair_strategy);
        std::vector<std::pair<size_t, size_t>> pair_rows;
        for (size_t gi = 0; gi < n_groups; ++gi) {
            const auto pairs = alignment::select_pairs(groups[gi].reward, strategy);
            for (const auto& [w, l] : pairs) {
                for (size_t j = 0; j < kk; ++j) {
                    pair_rows.emplace_back((gi * g + w) * kk + j, (gi * g + l) * kk + j);
                }
            }
        }
        if (pair_rows.empty()) return 0.0;
        NodeId margins = tape.pair_diff(s, pair_rows);
        NodeId losses = tape.softplus(tape.scale(margins, cfg_.beta));
        Array ones({1, pair_rows.size()});
        for (float& v : ones.data) v = static_cast<float>(1.0 / pair_rows.size());
        loss = tape.matmul(tape.leaf(std::move(ones)), losses);
    } else {
        Array weights({1, rows});
        const double norm = static_cast<double>(n_groups * g * kk);
        for (size_t gi = 0; gi < n_groups; ++gi) {
            const SampleGroup& group = groups[gi];
            std::vector<double> coeffs;
            if (cfg_.objective == "group-dpo") {
                // rank members best-first (stable: lower index wins ties)
                std::vector<size_t> order(g);
                for (size_t i = 0; i < g; ++i) order[i] = i;
                std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
                    return group.reward.values[a] > group.reward.values[b];
                });
                const std::vector<double> base = alignment::group_dpo_coeffs(g);
                coeffs.assign(g, 0.0);
                for (size_t pos = 0; pos < g; ++pos) coeffs[order[pos]] = base[pos];
            } else {
                coeffs = group.advantage.values;
            }
            for (size_t i = 0; i < g; ++i) {
                for (size_t j = 0; j < kk; ++j) {
                    weights.data[(gi * g + i) * kk + j] = static_cast<float>(coeffs[i] / norm);
                }
            }
        }
        loss = tape.matmul(tape.leaf(std::move(weights)), s);
    }

    GradMap grads = tape.backward(loss);
    const double norm = state_.optimizer.step(state_.policy, grads);
    ++state_.step;
    return norm;
}

int Trainer::train_batch(const std::vector<size_t>& prompt_indices, int epoch,
                         size_t batch_index, std::vector<SampleGroup>* out_groups) {
    (void)batch_index;
    std::vector<SampleGroup> groups;
    groups.reserve(prompt_indices.size());
    for (size_t p : prompt_indices) groups.push_back(build_group(p, epoch));

    double reward_sum = 0.0;
    size_t reward_count = 0;
    double diversity = 0.0;
    int skipped = 0;
    std::vector<SampleGroup> active;
    std::vector<size_t> active_ids;
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        const SampleGroup& group = groups[gi];
        for (double r : group.reward.values) reward_sum += r;
        reward_count += group.reward.values.size();
        diversity += group_diversity(group.samples);
        if (group.advantage.skipped) {
            ++skipped;
        } else {
            active.push_back(group);
            active_ids.push_back(prompt_indices[gi]);
        }
    }
    diversity /= static_cast<double>(groups.size());

    double grad_norm = 0.0;
    if (!active.empty()) {
        for (int it = 0; it < cfg_.tau; ++it) {
            grad_norm = batch_loss_and_step(active, active_ids, epoch, it);
        }
    }
    // Algorithm-1 boundary: the reference catches up with the policy.
    state_.reference = state_.policy;

    write_metrics_row(epoch, reward_sum / static_cast<double>(reward_count), skipped, grad_norm,
                      diversity);
    if (out_groups) *out_groups = std::move(groups);
    return skipped;
}

EvalResult Trainer::evaluate(const ParamStore& params, int epoch_tag, bool record) {
    const auto& records = data_.test;
    size_t n_records = records.size();
    if (cfg_.eval_records > 0 && static_cast<size_t>(cfg_.eval_records) < n_records) {
        n_records = static_cast<size_t>(cfg_.eval_records);
    }
    const size_t trials = static_cast<size_t>(cfg_.eval_trials);
    const size_t rows = n_records * trials;
    std::vector<int> conds(rows);
    std::vector<uint64_t> seeds(rows);
    for (size_t r = 0; r < n_records; ++r) {
        for (size_t t = 0; t < trials; ++t) {
            conds[r * trials + t] = records[r].condition;
            // eval noise is independent of the epoch so checkpoints are
            // compared on identical draws
            seeds[r * trials + t] = derive_seed(cfg_.seed, kStreamEval, r, t);
        }
    }
    const DenoiserConfig model = config_from_store(params);
    Array samples = generate_group(model, params, conds, cfg_.sampler_steps, sched_, seeds);

    EvalResult out;
    size_t successes = 0, covered = 0;
    double diversity = 0.0;
    std::ofstream ndjson;
    if (record) {
        ndjson.open(run_dir_ / "samples" / ("epoch-" + std::to_string(epoch_tag) + ".ndjson"),
                    std::ios::trunc);
    }
    for (size_t r = 0; r < n_records; ++r) {
        bool any = false;
        Array trial_block({trials, model.data_dim});
        for (size_t t = 0; t < trials; ++t) {
            const size_t row = r * trials + t;
            Array sample({model.data_dim});
            for (size_t dd = 0; dd < model.data_dim; ++dd) {
                sample.data[dd] = samples.at(row, dd);
                trial_block.at(t, dd) = samples.at(row, dd);
            }
            const double reward = tasks::reward_of(task_, sample, records[r].condition);
            const bool ok = tasks::success_of(task_, sample, records[r].condition);
            out.mean_reward += reward;
            successes += ok ? 1 : 0;
            any = any || ok;
            if (record) {
                json j;
                j["record"] = r;
                j["condition"] = records[r].condition;
                j["trial"] = t;
                j["reward"] = reward;
                j["success"] = ok ? 1 : 0;
                ndjson << j.dump() << "\n";
            }
        }
        covered += any ? 1 : 0;
        diversity += group_diversity(trial_block);
    }
    out.mean_reward /= static_cast<double>(rows);
    out.accuracy = static_cast<double>(successes) / static_cast<double>(rows);
    out.pass_at_k = static_cast<double>(covered) / static_cast<double>(n_records);
    out.diversity = diversity / static_cast<double>(n_records);

    last_eval_ = out;
    if (record) {
        write_metrics_row(epoch_tag, out.mean_reward, 0, 0.0, out.diversity);
    }
    return out;
}

void Trainer::save_checkpoint() {
    const std::string base = "step-" + std::to_string(state_.step);
    const auto dir = run_dir_ / "checkpoints";
    state_.policy.save(dir / (base + ".gpo1"));
    state_.optimizer.export_moments().save(dir / (base + ".opt.gpo1"));
    std::map<std::string, std::string> meta;
    meta["step"] = std::to_string(state_.step);
    meta["epochs_done"] = std::to_string(state_.epochs_done);
    meta["opt_steps"] = std::to_string(state_.optimizer.steps_taken());
    meta["version"] = std::to_string(state_.policy.version());
    write_kv_file(dir / (base + ".meta"), meta);
}

std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir) {
    const auto dir = run_dir / "checkpoints";
    std::filesystem::path best;
    uint64_t best_step = 0;
    if (!std::filesystem::exists(dir)) return best;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("step-", 0) != 0 || name.find(".meta") == std::string::npos) continue;
        const auto meta = read_kv_file(entry.path());
        const uint64_t step = std::stoull(meta.at("step"));
        if (best.empty() || step >= best_step) {
            best_step = step;
            best = entry.path();
        }
    }
    return best;
}

bool Trainer::try_resume() {
    const auto meta_path = latest_checkpoint(run_dir_);
    if (meta_path.empty()) return false;
    const auto meta = read_kv_file(meta_path);
    const std::string base = meta_path.stem().string();
    const auto dir = run_dir_ / "checkpoints";

    state_.policy = ParamStore::load(dir / (base + ".gpo1"));
    state_.policy.set_version(std::stoull(meta.at("version")));
    state_.reference = state_.policy;
    state_.model = config_from_store(state_.policy);
    AdamWConfig opt;
    opt.lr = cfg_.learning_rate;
    opt.clip_norm = cfg_.grad_clip;
    opt.weight_decay = cfg_.weight_decay;
    state_.optimizer = AdamW(opt);
    state_.optimizer.import_moments(ParamStore::load(dir / (base + ".opt.gpo1")),
                                    std::stoull(meta.at("opt_steps")));
    state_.step = std::stoull(meta.at("step"));
    state_.epochs_done = std::stoi(meta.at("epochs_done"));
    // restore the pass_at_4 column continuity without re-recording
    evaluate(state_.policy, state_.epochs_done, false);
    return true;
}

void Trainer::align(const ParamStore& init, bool resume) {
    if (cfg_.objective == "sft") {
        throw ConfigError("align: objective sft is handled by pretrain");
    }
    bool resumed = false;
    if (resume) {
        resumed = try_resume();
    }
    if (resumed) {
        metrics_.open(run_dir_ / "metrics.csv", std::ios::app);
        if (!metrics_) throw ConfigError("cannot append metrics.csv");
    } else {
        init_state(init);
        write_kv_file(run_dir_ / "config.cfg", cfg_.to_kv());
        metrics_.open(run_dir_ / "metrics.csv", std::ios::trunc);
        if (!metrics_) throw ConfigError("cannot write metrics.csv");
        metrics_ << kMetricsHeader << "\n";
        evaluate(state_.policy, 0, true);
    }

    if (!cfg_.online && frozen_groups_.empty()) {
        // Offline variant: one dataset generated by the initial reference,
        // before any update, covering every prompt any epoch will visit.
        std::vector<size_t> all;
        for (int e = 0; e < cfg_.epochs; ++e) {
            for (size_t p : epoch_prompts(e)) all.push_back(p);
        }
        std::sort(all.begin(), all.end());
        all.erase(std::unique(all.begin(), all.end()), all.end());
        for (size_t p : all) build_group(p, 0);
    }

    for (int epoch = state_.epochs_done; epoch < cfg_.epochs; ++epoch) {
        const std::vector<size_t> prompts = epoch_prompts(epoch);
        for (size_t start = 0, batch = 0; start < prompts.size();
             start += static_cast<size_t>(cfg_.prompt_batch), ++batch) {
            const size_t end =
                std::min(prompts.size(), start + static_cast<size_t>(cfg_.prompt_batch));
            std::vector<size_t> chunk(prompts.begin() + static_cast<long>(start),
                                      prompts.begin() + static_cast<long>(end));
            train_batch(chunk, epoch, batch);
        }
        state_.epochs_done = epoch + 1;
        evaluate(state_.policy, epoch + 1, true);
        save_checkpoint();
    }
}

ParamStore Trainer::pretrain_sft() {
    state_.model.data_dim = task_.data_dim();
    state_.model.n_conditions = task_.n_conditions();
    state_.model.hidden_dim = static_cast<size_t>(cfg_.hidden_dim);
    state_.model.n_hidden = static_cast<size_t>(cfg_.n_hidden);
    state_.model.embed_dim = static_cast<size_t>(cfg_.embed_dim);
    state_.policy = init_denoiser(state_.model, derive_seed(cfg_.seed, kStreamInit));
    state_.reference = state_.policy;
    AdamWConfig opt;
    opt.lr = cfg_.sft_lr;
    opt.clip_norm = cfg_.grad_clip;
    opt.weight_decay = cfg_.weight_decay;
    state_.optimizer = AdamW(opt);
    state_.step = 0;

    write_kv_file(run_dir_ / "config.cfg", cfg_.to_kv());
    metrics_.open(run_dir_ / "metrics.csv", std::ios::trunc);
    if (!metrics_) throw ConfigError("cannot write metrics.csv");
    metrics_ << kMetricsHeader << "\n";
    evaluate(state_.policy, 0, true);

    const size_t batch = static_cast<size_t>(cfg_.sft_batch);
    const size_t d = state_.model.data_dim;
    std::deque<double> window;
    double window_sum = 0.0;
    for (int step = 0; step < cfg_.sft_steps; ++step) {
        Rng rng(derive_seed(cfg_.seed, kStreamSft, static_cast<uint64_t>(step)));
        Array x0({batch, d});
        Array eps({batch, d});
        Array xt({batch, d});
        std::vector<double> t_rows(batch);
        std::vector<int> cond_rows(batch);
        for (size_t b = 0; b < batch; ++b) {
            const tasks::DataRecord& rec = data_.train[rng.below(data_.train.size())];
            const double t = rng.uniform_open();
            const double a = sched_.alpha(t), sg = sched_.sigma(t);
            t_rows[b] = t;
            cond_rows[b] = rec.condition;
            for (size_t c = 0; c < d; ++c) {
                const double e = rng.normal();
                x0.at(b, c) = rec.x0.data[c];
                eps.at(b, c) = static_cast<float>(e);
                xt.at(b, c) = static_cast<float>(a * static_cast<double>(rec.x0.data[c]) + sg * e);
            }
        }

        Tape tape;
        NodeId pred = predict_noise(state_.model, state_.policy, tape, xt, t_rows, cond_rows);
        NodeId diff = tape.sub(tape.leaf(eps), pred);
        NodeId loss = tape.scale(tape.sum(tape.square(diff)),
                                 1.0 / static_cast<double>(batch * d));
        const double loss_value = tape.value(loss).scalar();
        if (!std::isfinite(loss_value)) {
            throw NumericError("sft: loss diverged at step " + std::to_string(step));
        }
        GradMap grads = tape.backward(loss);
        const double norm = state_.optimizer.step(state_.policy, grads);
        ++state_.step;

        window.push_back(loss_value);
        window_sum += loss_value;
        if (window.size() > 100) {
            window_sum -= window.front();
            window.pop_front();
        }
        if ((step + 1) % 50 == 0 || step + 1 == cfg_.sft_steps) {
            write_metrics_row(0, window_sum / static_cast<double>(window.size()), 0, norm, 0.0);
        }
    }
    state_.reference = state_.policy;
    state_.epochs_done = 1;
    evaluate(state_.policy, 1, true);
    save_checkpoint();
    return state_.policy;
}

}  // namespace gpolab::trainer
