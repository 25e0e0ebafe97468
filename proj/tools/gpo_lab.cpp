// Command-line front door: dataset synthesis, SFT pretraining, alignment
// runs, ablation plans, standalone scoring, and report aggregation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpolab/experiments.hpp"
#include "gpolab/kernels.hpp"
#include "gpolab/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gpolab;

namespace {

struct DataPaths {
    tasks::TaskSpec spec;
    tasks::Dataset dataset;
};

DataPaths load_data_dir(const fs::path& dir) {
    DataPaths out;
    out.spec = tasks::TaskSpec::from_kv(trainer::read_kv_file(dir / "task.cfg"));
    out.dataset.train = tasks::load_records(dir / "train.ndjson");
    out.dataset.test = tasks::load_records(dir / "test.ndjson");
    return out;
}

std::vector<uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<uint64_t> seeds;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) seeds.push_back(std::stoull(item));
    }
    if (seeds.empty()) throw ConfigError("empty seed list");
    return seeds;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> values;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) values.push_back(std::stoi(item));
    }
    return values;
}

// Trainer knobs shared by pretrain / align / ablate. A --config file is
// loaded before CLI11 runs (see main), so flags override file values.
void add_run_options(CLI::App* cmd, trainer::RunConfig& cfg) {
    cmd->add_option("--task", cfg.task, "task id (gmm-mode | dot-count)");
    cmd->add_option("--objective", cfg.objective, "sft | dpo | group-dpo | gpo");
    cmd->add_option("--pair-strategy", cfg.pair_strategy, "dpo pair selection: all | max | min");
    cmd->add_option("--timestep-range", cfg.timestep_range, "all | high | low");
    cmd->add_option("--advantage-mode", cfg.advantage_mode, "zscore | sign");
    cmd->add_option("--schedule", cfg.schedule, "flow-matching | variance-preserving");
    cmd->add_option("--G,--group-size", cfg.group_size, "group size");
    cmd->add_option("--k", cfg.k, "timesteps sampled per update");
    cmd->add_option("--tau", cfg.tau, "inner iterations per group batch");
    cmd->add_option("--epochs", cfg.epochs, "training epochs");
    cmd->add_option("--steps", cfg.sampler_steps, "sampler integration steps");
    cmd->add_option("--prompt-batch", cfg.prompt_batch, "prompts per batch");
    cmd->add_option("--prompts-per-epoch", cfg.prompts_per_epoch, "0 = all train prompts");
    cmd->add_option("--eval-trials", cfg.eval_trials, "generations per eval record");
    cmd->add_option("--eval-records", cfg.eval_records, "0 = all test records");
    cmd->add_option("--lr", cfg.learning_rate, "alignment learning rate");
    cmd->add_option("--beta", cfg.beta, "DPO beta");
    cmd->add_option("--grad-clip", cfg.grad_clip, "gradient norm clip (0 disables)");
    cmd->add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay");
    cmd->add_option("--shift", cfg.timestep_shift, "shifted timestep sampler parameter");
    cmd->add_option("--hidden", cfg.hidden_dim, "denoiser hidden width");
    cmd->add_option("--layers", cfg.n_hidden, "denoiser hidden layer count");
    cmd->add_option("--embed", cfg.embed_dim, "embedding width");
    cmd->add_option("--sft-steps", cfg.sft_steps, "SFT optimizer steps");
    cmd->add_option("--sft-batch", cfg.sft_batch, "SFT batch size");
    cmd->add_option("--sft-lr", cfg.sft_lr, "SFT learning rate");
    cmd->add_flag(
        "--offline", [&cfg](int64_t) { cfg.online = false; },
        "freeze training data at the initial reference");
}

int run_score(const std::string& evaluator, const fs::path& input, const std::string& out_path) {
    std::ifstream is(input);
    if (!is) throw ConfigError("score: cannot read " + input.string());
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path, std::ios::trunc);
        if (!file) throw ConfigError("score: cannot write " + out_path);
        os = &file;
    }
    *os << "id,score\n";
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            std::cerr << "warning: line " << lineno << ": bad json, skipped\n";
            continue;
        }
        const std::string id = j.value("id", "line" + std::to_string(lineno));
        std::string kind = j.value("evaluator", evaluator);
        if (kind.empty()) {
            std::cerr << "warning: line " << lineno << ": no evaluator, skipped\n";
            continue;
        }
        if (!evaluator.empty() && kind != evaluator) continue;
        double score = 0.0;
        if (kind == "count") {
            std::map<std::string, int> detected;
            for (const auto& [key, value] : j.at("payload").items()) {
                detected[key] = value.get<int>();
            }
            rewards::CountTarget target;
            for (const auto& item : j.at("target")) {
                target.items.emplace_back(item.at(0).get<std::string>(), item.at(1).get<int>());
            }
            score = rewards::count_score(detected, target);
        } else if (kind == "iou") {
            const auto payload = j.at("payload").get<std::vector<std::string>>();
            const auto target = j.at("target").get<std::vector<std::string>>();
            score = rewards::text_iou_score(rewards::TokenSet::of(payload),
                                            rewards::TokenSet::of(target));
        } else if (kind == "vqa") {
            std::vector<bool> answers;
            for (const auto& a : j.at("payload")) {
                if (a.is_boolean()) {
                    answers.push_back(a.get<bool>());
                } else {
                    answers.push_back(a.get<std::string>() == "yes");
                }
            }
            score = rewards::vqa_score(answers);
        } else {
            throw ConfigError("score: unknown evaluator '" + kind + "'");
        }
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.10g", score);
        *os << id << "," << buf << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toy diffusion alignment lab"};
    app.require_subcommand(1);

    // A --config file provides defaults; explicit flags override it.
    trainer::RunConfig cfg;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            try {
                cfg = trainer::RunConfig::from_kv(trainer::read_kv_file(argv[i + 1]));
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
                return kExitConfig;
            }
        }
    }
    std::string config_path;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "synthesize a task dataset");
    std::string gen_task = "dot-count";
    uint64_t gen_seed = 0;
    std::string gen_out;
    size_t gen_train = 1050, gen_test = 450;
    gen->add_option("--task", gen_task, "gmm-mode | dot-count")->required();
    gen->add_option("--seed", gen_seed, "dataset seed")->required();
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--train-count", gen_train, "training records");
    gen->add_option("--test-count", gen_test, "held-out records");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "SFT-pretrain a denoiser from scratch");
    std::string pre_data, pre_out;
    bool pre_seed_set = false;
    pre->add_option("--config", config_path, "key=value config file");
    pre->add_option("--data", pre_data, "dataset directory from gen-data")->required();
    pre->add_option("--out", pre_out, "run directory")->required();
    pre->add_option("--seed", cfg.seed, "run seed")->each([&](const std::string&) {
        pre_seed_set = true;
    });
    add_run_options(pre, cfg);

    // align
    auto* al = app.add_subcommand("align", "self-improvement alignment run");
    std::string al_data, al_out, al_init;
    bool al_seed_set = false, al_resume = false;
    al->add_option("--config", config_path, "key=value config file");
    al->add_option("--data", al_data, "dataset directory")->required();
    al->add_option("--init", al_init, "SFT checkpoint (.gpo1)")->required();
    al->add_option("--out", al_out, "run directory")->required();
    al->add_option("--seed", cfg.seed, "run seed")->each([&](const std::string&) {
        al_seed_set = true;
    });
    al->add_flag("--resume", al_resume, "resume from the latest epoch checkpoint");
    add_run_options(al, cfg);

    // ablate
    auto* ab = app.add_subcommand("ablate", "run an ablation plan");
    std::string ab_plan, ab_data, ab_out, ab_init, ab_values = "8,16,32,64";
    std::string ab_seeds = "1,2,3,4,5";
    ab->add_option("--config", config_path, "key=value config file");
    ab->add_option("--plan", ab_plan,
                   "margin | group-size | standardization | online-offline | timestep-range")
        ->required();
    ab->add_option("--data", ab_data, "dataset directory")->required();
    ab->add_option("--init", ab_init, "SFT checkpoint (.gpo1)")->required();
    ab->add_option("--out", ab_out, "plan output directory")->required();
    ab->add_option("--values", ab_values, "group-size plan values");
    ab->add_option("--seeds", ab_seeds, "comma-separated run seeds");
    add_run_options(ab, cfg);

    // score
    auto* sc = app.add_subcommand("score", "score a line-delimited records file");
    std::string sc_eval, sc_input, sc_out;
    sc->add_option("--evaluator", sc_eval, "count | iou | vqa");
    sc->add_option("--input", sc_input, "NDJSON records file")->required();
    sc->add_option("--out", sc_out, "output CSV (default stdout)");

    // report
    auto* rep = app.add_subcommand("report", "aggregate run directories");
    std::vector<std::string> rep_runs;
    std::string rep_out;
    rep->add_option("--out", rep_out, "report output directory")->required();
    rep->add_option("runs", rep_runs, "run directories");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            // --help
            return app.exit(e);
        }
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return kExitConfig;
    }

    try {
        if (*gen) {
            tasks::TaskSpec spec = tasks::TaskSpec::make(gen_task);
            spec.train_count = gen_train;
            spec.test_count = gen_test;
            tasks::Dataset data = tasks::synthesize(spec, gen_seed);
            fs::create_directories(gen_out);
            auto kv = spec.to_kv();
            kv["seed"] = std::to_string(gen_seed);
            trainer::write_kv_file(fs::path(gen_out) / "task.cfg", kv);
            tasks::save_records(fs::path(gen_out) / "train.ndjson", data.train);
            tasks::save_records(fs::path(gen_out) / "test.ndjson", data.test);
            std::cout << "wrote " << data.train.size() << " train / " << data.test.size()
                      << " test records to " << gen_out << "\n";
            return kExitOk;
        }
        if (*pre) {
            if (!pre_seed_set) throw ConfigError("pretrain: --seed is required");
            DataPaths data = load_data_dir(pre_data);
            cfg.task = data.spec.id;
            cfg.objective = "sft";
            trainer::Trainer t(cfg, data.spec, std::move(data.dataset), pre_out);
            t.pretrain_sft();
            std::cout << "checkpoint: "
                      << (fs::path(pre_out) / "checkpoints" /
                          ("step-" + std::to_string(t.state().step) + ".gpo1"))
                             .string()
                      << "\n";
            return kExitOk;
        }
        if (*al) {
            if (!al_seed_set) throw ConfigError("align: --seed is required");
            DataPaths data = load_data_dir(al_data);
            cfg.task = data.spec.id;
            if (cfg.objective == "sft") cfg.objective = "gpo";
            ParamStore init = ParamStore::load(al_init);
            trainer::Trainer t(cfg, data.spec, std::move(data.dataset), al_out);
            t.align(init, al_resume);
            std::cout << "metrics: " << (fs::path(al_out) / "metrics.csv").string() << "\n";
            return kExitOk;
        }
        if (*ab) {
            DataPaths data = load_data_dir(ab_data);
            cfg.task = data.spec.id;
            experiments::PlanOptions options;
            options.base = cfg;
            options.task = data.spec;
            options.data = std::move(data.dataset);
            options.init = ParamStore::load(ab_init);
            options.seeds = parse_seed_list(ab_seeds);
            options.out_dir = ab_out;
            options.log = &std::cout;
            std::vector<fs::path> dirs;
            if (ab_plan == "margin") {
                dirs = experiments::run_margin_plan(options);
            } else if (ab_plan == "group-size") {
                dirs = experiments::run_group_size_plan(options, parse_int_list(ab_values));
            } else if (ab_plan == "standardization") {
                dirs = experiments::run_standardization_plan(options);
            } else if (ab_plan == "online-offline") {
                dirs = experiments::run_online_offline_plan(options);
            } else if (ab_plan == "timestep-range") {
                dirs = experiments::run_timestep_plan(options);
            } else {
                throw ConfigError("unknown plan: " + ab_plan);
            }
            experiments::write_report(dirs, ab_out, &std::cerr);
            std::cout << "plan complete: " << dirs.size() << " runs, report in " << ab_out
                      << "\n";
            return kExitOk;
        }
        if (*sc) {
            return run_score(sc_eval, sc_input, sc_out);
        }
        if (*rep) {
            std::vector<fs::path> dirs(rep_runs.begin(), rep_runs.end());
            experiments::write_report(dirs, rep_out, &std::cerr);
            std::cout << "report in " << rep_out << "\n";
            return kExitOk;
        }
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitOk;
}
