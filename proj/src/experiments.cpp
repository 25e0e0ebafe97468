#include "gpolab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace gpolab::experiments {

using nlohmann::json;

namespace {

struct EpochStats {
    double mean_reward = 0.0;
    double accuracy = 0.0;
    double pass4 = 0.0;
    bool ok = false;
};

EpochStats read_epoch_samples(const std::filesystem::path& path) {
    EpochStats out;
    std::ifstream is(path);
    if (!is) return out;
    std::map<int, bool> record_pass;
    size_t n = 0, successes = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) continue;
        const double reward = j.value("reward", 0.0);
        const int success = j.value("success", 0);
        const int record = j.value("record", 0);
        out.mean_reward += reward;
        successes += success ? 1 : 0;
        record_pass[record] = record_pass[record] || success != 0;
        ++n;
    }
    if (n == 0) return out;
    out.mean_reward /= static_cast<double>(n);
    out.accuracy = static_cast<double>(successes) / static_cast<double>(n);
    size_t covered = 0;
    for (const auto& [record, any] : record_pass) covered += any ? 1 : 0;
    out.pass4 = static_cast<double>(covered) / static_cast<double>(record_pass.size());
    out.ok = true;
    return out;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double pop_std_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    return std::sqrt(var / static_cast<double>(v.size()));
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

RunSummary summarize_run(const std::filesystem::path& run_dir, std::ostream* warnings) {
    RunSummary out;
    out.dir = run_dir;
    out.run_name = run_dir.filename().string();
    try {
        out.config = trainer::read_kv_file(run_dir / "config.cfg");
    } catch (const std::exception& e) {
        if (warnings) *warnings << "warning: " << run_dir.string() << ": " << e.what() << "\n";
        return out;
    }

    int last = -1;
    const auto samples_dir = run_dir / "samples";
    if (std::filesystem::exists(samples_dir)) {
        for (const auto& entry : std::filesystem::directory_iterator(samples_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("epoch-", 0) != 0) continue;
            const int epoch = std::atoi(name.c_str() + 6);
            last = std::max(last, epoch);
        }
    }
    if (last < 0) {
        if (warnings) {
            *warnings << "warning: " << run_dir.string() << ": no eval sample files\n";
        }
        return out;
    }
    const EpochStats first = read_epoch_samples(samples_dir / "epoch-0.ndjson");
    const EpochStats final = read_epoch_samples(samples_dir / ("epoch-" + std::to_string(last) +
                                                               ".ndjson"));
    if (!first.ok || !final.ok) {
        if (warnings) {
            *warnings << "warning: " << run_dir.string() << ": unreadable eval samples\n";
        }
        return out;
    }
    out.baseline_reward = first.mean_reward;
    out.baseline_accuracy = first.accuracy;
    out.baseline_pass4 = first.pass4;
    out.final_reward = final.mean_reward;
    out.final_accuracy = final.accuracy;
    out.final_pass4 = final.pass4;
    out.last_epoch = last;
    out.ok = true;
    return out;
}

std::vector<std::pair<uint64_t, double>> reward_curve(const std::filesystem::path& run_dir,
                                                      std::ostream* warnings) {
    std::vector<std::pair<uint64_t, double>> out;
    std::ifstream is(run_dir / "metrics.csv");
    if (!is) {
        if (warnings) *warnings << "warning: no metrics.csv in " << run_dir.string() << "\n";
        return out;
    }
    std::string line;
    std::getline(is, line);  // header
    size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() != 8) {
            if (warnings) {
                *warnings << "warning: " << run_dir.string() << " metrics.csv line " << lineno
                          << ": malformed row\n";
            }
            continue;
        }
        try {
            // batch rows carry a nonzero grad_norm column or skipped groups;
            // eval rows are written with grad_norm 0 and skipped 0 but are
            // also batch-free. Keep every row: the curve tracks mean_reward.
            out.emplace_back(std::stoull(fields[0]), std::stod(fields[3]));
        } catch (const std::exception&) {
            if (warnings) {
                *warnings << "warning: " << run_dir.string() << " metrics.csv line " << lineno
                          << ": bad numeric field\n";
            }
        }
    }
    return out;
}

std::string variant_label(const std::map<std::string, std::string>& config) {
    auto get = [&config](const std::string& key) {
        auto it = config.find(key);
        return it == config.end() ? std::string("?") : it->second;
    };
    std::string label = get("objective");
    if (label == "dpo") label += "-" + get("pair_strategy");
    if (label == "gpo" && get("advantage_mode") == "sign") label += "-sign";
    label += "-G" + get("group_size");
    label += get("online") == "false" ? "-offline" : "-online";
    label += "-" + get("timestep_range");
    return label;
}

void write_report(const std::vector<std::filesystem::path>& run_dirs,
                  const std::filesystem::path& out_dir, std::ostream* warnings) {
    if (run_dirs.empty()) throw UsageError("report: no run directories given");
    std::filesystem::create_directories(out_dir);

    std::vector<RunSummary> summaries;
    for (const auto& dir : run_dirs) {
        RunSummary s = summarize_run(dir, warnings);
        if (s.ok) summaries.push_back(std::move(s));
    }

    {
        std::ofstream os(out_dir / "summary.csv", std::ios::trunc);
        os << "run,variant,task,objective,pair_strategy,advantage_mode,online,timestep_range,"
              "group_size,seed,baseline_reward,final_reward,baseline_accuracy,final_accuracy,"
              "baseline_pass4,final_pass4\n";
        for (const RunSummary& s : summaries) {
            auto get = [&s](const std::string& key) {
                auto it = s.config.find(key);
                return it == s.config.end() ? std::string() : it->second;
            };
            os << s.run_name << "," << variant_label(s.config) << "," << get("task") << ","
               << get("objective") << "," << get("pair_strategy") << ","
               << get("advantage_mode") << "," << get("online") << ","
               << get("timestep_range") << "," << get("group_size") << "," << get("seed") << ","
               << fmt(s.baseline_reward) << "," << fmt(s.final_reward) << ","
               << fmt(s.baseline_accuracy) << "," << fmt(s.final_accuracy) << ","
               << fmt(s.baseline_pass4) << "," << fmt(s.final_pass4) << "\n";
        }
    }

    {
        std::map<std::string, std::vector<const RunSummary*>> by_variant;
        for (const RunSummary& s : summaries) {
            by_variant[variant_label(s.config)].push_back(&s);
        }
        std::ofstream os(out_dir / "aggregate.csv", std::ios::trunc);
        os << "variant,n,mean_final_reward,std_final_reward,mean_final_accuracy,"
              "std_final_accuracy,mean_final_pass4,std_final_pass4\n";
        for (const auto& [label, group] : by_variant) {
            std::vector<double> rewards, accs, pass4;
            for (const RunSummary* s : group) {
                rewards.push_back(s->final_reward);
                accs.push_back(s->final_accuracy);
                pass4.push_back(s->final_pass4);
            }
            os << label << "," << group.size() << "," << fmt(mean_of(rewards)) << ","
               << fmt(pop_std_of(rewards)) << "," << fmt(mean_of(accs)) << ","
               << fmt(pop_std_of(accs)) << "," << fmt(mean_of(pass4)) << ","
               << fmt(pop_std_of(pass4)) << "\n";
        }
    }

    {
        std::ofstream os(out_dir / "curves.csv", std::ios::trunc);
        os << "series,seed,step,mean_reward\n";
        for (const RunSummary& s : summaries) {
            const std::string label = variant_label(s.config);
            auto it = s.config.find("seed");
            const std::string seed = it == s.config.end() ? "" : it->second;
            for (const auto& [step, reward] : reward_curve(s.dir, warnings)) {
                os << label << "," << seed << "," << step << "," << fmt(reward) << "\n";
            }
        }
    }
}

namespace {

std::filesystem::path run_one(const PlanOptions& options, trainer::RunConfig cfg,
                              const std::string& name) {
    const std::filesystem::path dir = options.out_dir / name;
    if (options.log) *options.log << "run " << name << "\n";
    trainer::Trainer t(cfg, options.task, options.data, dir);
    t.align(options.init);
    return dir;
}

std::string seed_suffix(uint64_t seed) { return "-seed" + std::to_string(seed); }

}  // namespace

std::vector<std::filesystem::path> run_margin_plan(const PlanOptions& options) {
    std::vector<std::filesystem::path> dirs;
    struct Variant {
        std::string name;
        std::string objective;
        std::string strategy;
    };
    const std::vector<Variant> variants = {
        {"dpo-all", "dpo", "all"},   {"dpo-max", "dpo", "max"}, {"dpo-min", "dpo", "min"},
        {"group-dpo", "group-dpo", "all"}, {"gpo", "gpo", "all"},
    };
    for (const Variant& v : variants) {
        for (uint64_t seed : options.seeds) {
            trainer::RunConfig cfg = options.base;
            cfg.objective = v.objective;
            cfg.pair_strategy = v.strategy;
            cfg.group_size = 4;
            cfg.seed = seed;
            dirs.push_back(run_one(options, cfg, v.name + seed_suffix(seed)));
        }
    }
    return dirs;
}

std::vector<std::filesystem::path> run_group_size_plan(const PlanOptions& options,
                                                       const std::vector<int>& sizes) {
    if (sizes.empty()) throw UsageError("group-size plan: no sizes given");
    std::vector<std::filesystem::path> dirs;
    for (int g : sizes) {
        for (uint64_t seed : options.seeds) {
            trainer::RunConfig cfg = options.base;
            cfg.group_size = g;
            cfg.seed = seed;
            dirs.push_back(run_one(options, cfg, "G" + std::to_string(g) + seed_suffix(seed)));
        }
    }
    return dirs;
}

std::vector<std::filesystem::path> run_standardization_plan(const PlanOptions& options) {
    std::vector<std::filesystem::path> dirs;
    for (const std::string mode : {"zscore", "sign"}) {
        for (uint64_t seed : options.seeds) {
            trainer::RunConfig cfg = options.base;
            cfg.objective = "gpo";
            cfg.advantage_mode = mode;
            cfg.seed = seed;
            dirs.push_back(run_one(options, cfg, mode + seed_suffix(seed)));
        }
    }
    return dirs;
}

std::vector<std::filesystem::path> run_online_offline_plan(const PlanOptions& options) {
    std::vector<std::filesystem::path> dirs;
    for (const bool online : {true, false}) {
        for (uint64_t seed : options.seeds) {
            trainer::RunConfig cfg = options.base;
            cfg.online = online;
            cfg.seed = seed;
            dirs.push_back(
                run_one(options, cfg, (online ? "online" : "offline") + seed_suffix(seed)));
        }
    }
    return dirs;
}

std::vector<std::filesystem::path> run_timestep_plan(const PlanOptions& options) {
    std::vector<std::filesystem::path> dirs;
    for (const std::string range : {"all", "high", "low"}) {
        for (uint64_t seed : options.seeds) {
            trainer::RunConfig cfg = options.base;
            cfg.timestep_range = range;
            cfg.seed = seed;
            dirs.push_back(run_one(options, cfg, range + seed_suffix(seed)));
        }
    }
    return dirs;
}

}  // namespace gpolab::experiments
