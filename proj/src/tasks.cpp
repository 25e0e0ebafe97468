#include "gpolab/tasks.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gpolab/rng.hpp"

namespace gpolab::tasks {

using nlohmann::json;

TaskSpec TaskSpec::make(const std::string& id) {
    TaskSpec spec;
    spec.id = id;
    spec.validate();
    return spec;
}

void TaskSpec::validate() const {
    if (id != "gmm-mode" && id != "dot-count") {
        throw ConfigError("unknown task id: " + id);
    }
    if (id == "gmm-mode") {
        if (n_modes < 2 || mode_std <= 0.0 || reward_scale <= 0.0) {
            throw ConfigError("gmm-mode: bad generator parameters");
        }
    } else {
        if (block < 1 || lattice_step < block + 1 || grid < lattice_step) {
            throw ConfigError("dot-count: lattice does not separate blocks");
        }
        if (max_count < 1 || static_cast<size_t>(max_count) > lattice_slots()) {
            throw ConfigError("dot-count: count range exceeds lattice capacity");
        }
    }
}

size_t TaskSpec::lattice_slots() const {
    const size_t per_axis = (grid - block) / lattice_step + 1;
    return per_axis * per_axis;
}

std::vector<std::array<double, 2>> gmm_modes(const TaskSpec& spec) {
    std::vector<std::array<double, 2>> modes(spec.n_modes);
    for (size_t i = 0; i < spec.n_modes; ++i) {
        const double angle = 2.0 * 3.14159265358979323846 * static_cast<double>(i) /
                             static_cast<double>(spec.n_modes);
        modes[i] = {spec.ring_radius * std::cos(angle), spec.ring_radius * std::sin(angle)};
    }
    return modes;
}

namespace {

DataRecord make_gmm_record(const TaskSpec& spec, const std::vector<std::array<double, 2>>& modes,
                           uint64_t seed, size_t index) {
    Rng rng(derive_seed(seed, 11, index));
    DataRecord rec;
    rec.condition = static_cast<int>(index % spec.n_modes);
    rec.x0 = Array({2});
    rec.x0.data[0] =
        static_cast<float>(modes[rec.condition][0] + spec.mode_std * rng.normal());
    rec.x0.data[1] =
        static_cast<float>(modes[rec.condition][1] + spec.mode_std * rng.normal());
    return rec;
}

DataRecord make_dot_record(const TaskSpec& spec, uint64_t seed, size_t index) {
    Rng rng(derive_seed(seed, 12, index));
    DataRecord rec;
    const int count = 1 + static_cast<int>(index % static_cast<size_t>(spec.max_count));
    rec.condition = count - 1;

    const size_t per_axis = (spec.grid - spec.block) / spec.lattice_step + 1;
    std::vector<size_t> slots(per_axis * per_axis);
    for (size_t i = 0; i < slots.size(); ++i) slots[i] = i;
    rng.shuffle(slots);

    rec.x0 = Array({spec.grid * spec.grid});
    for (float& v : rec.x0.data) v = -1.0f;
    for (int b = 0; b < count; ++b) {
        const size_t slot = slots[b];
        const size_t r0 = (slot / per_axis) * spec.lattice_step;
        const size_t c0 = (slot % per_axis) * spec.lattice_step;
        for (size_t dr = 0; dr < spec.block; ++dr) {
            for (size_t dc = 0; dc < spec.block; ++dc) {
                rec.x0.data[(r0 + dr) * spec.grid + (c0 + dc)] = 1.0f;
            }
        }
    }
    return rec;
}

}  // namespace

Dataset synthesize(const TaskSpec& spec, uint64_t seed) {
    spec.validate();
    const auto modes = gmm_modes(spec);
    Dataset out;
    const size_t total = spec.train_count + spec.test_count;
    for (size_t i = 0; i < total; ++i) {
        DataRecord rec = spec.id == "gmm-mode" ? make_gmm_record(spec, modes, seed, i)
                                               : make_dot_record(spec, seed, i);
        if (i < spec.train_count) {
            out.train.push_back(std::move(rec));
        } else {
            out.test.push_back(std::move(rec));
        }
    }
    return out;
}

void save_records(const std::filesystem::path& path, const std::vector<DataRecord>& records) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ConfigError("cannot write " + path.string());
    for (const DataRecord& rec : records) {
        json j;
        j["c"] = rec.condition;
        j["x"] = rec.x0.data;
        os << j.dump() << "\n";
    }
}

std::vector<DataRecord> load_records(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read " + path.string());
    std::vector<DataRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        DataRecord rec;
        rec.condition = j.at("c").get<int>();
        std::vector<float> values = j.at("x").get<std::vector<float>>();
        rec.x0 = Array({values.size()}, std::move(values));
        out.push_back(std::move(rec));
    }
    return out;
}

namespace {

// Generated grids live in [-1,1]; the detector contract is a [0,1] grid.
Array to_unit_grid(const TaskSpec& spec, const Array& sample) {
    Array grid({spec.grid, spec.grid});
    for (size_t i = 0; i < grid.data.size(); ++i) {
        const float v = (sample.data[i] + 1.0f) * 0.5f;
        grid.data[i] = std::min(1.0f, std::max(0.0f, v));
    }
    return grid;
}

int detected_count(const TaskSpec& spec, const Array& sample) {
    const Array grid = to_unit_grid(spec, sample);
    return rewards::detect_dots(grid, spec.detect_threshold).at("dot");
}

}  // namespace

double reward_of(const TaskSpec& spec, const Array& sample, int condition) {
    if (spec.id == "gmm-mode") {
        const auto modes = gmm_modes(spec);
        return rewards::gmm_mode_reward({sample.data[0], sample.data[1]},
                                        static_cast<size_t>(condition), modes,
                                        spec.reward_scale);
    }
    rewards::CountTarget target;
    target.items = {{"dot", condition + 1}};
    const std::map<std::string, int> detected = {{"dot", detected_count(spec, sample)}};
    return rewards::count_score(detected, target);
}

bool success_of(const TaskSpec& spec, const Array& sample, int condition) {
    if (spec.id == "gmm-mode") {
        const auto modes = gmm_modes(spec);
        double best = 1e300;
        size_t best_mode = 0;
        for (size_t m = 0; m < modes.size(); ++m) {
            const double dx = sample.data[0] - modes[m][0];
            const double dy = sample.data[1] - modes[m][1];
            const double d2 = dx * dx + dy * dy;
            if (d2 < best) {
                best = d2;
                best_mode = m;
            }
        }
        return best_mode == static_cast<size_t>(condition) &&
               std::sqrt(best) <= 3.0 * spec.mode_std;
    }
    return detected_count(spec, sample) == condition + 1;
}

std::map<std::string, std::string> TaskSpec::to_kv() const {
    std::map<std::string, std::string> kv;
    kv["task"] = id;
    kv["n_modes"] = std::to_string(n_modes);
    kv["ring_radius"] = std::to_string(ring_radius);
    kv["mode_std"] = std::to_string(mode_std);
    kv["reward_scale"] = std::to_string(reward_scale);
    kv["grid"] = std::to_string(grid);
    kv["lattice_step"] = std::to_string(lattice_step);
    kv["block"] = std::to_string(block);
    kv["max_count"] = std::to_string(max_count);
    kv["detect_threshold"] = std::to_string(detect_threshold);
    kv["train_count"] = std::to_string(train_count);
    kv["test_count"] = std::to_string(test_count);
    return kv;
}

TaskSpec TaskSpec::from_kv(const std::map<std::string, std::string>& kv) {
    TaskSpec spec;
    auto get = [&kv](const std::string& key, const std::string& fallback) {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    };
    spec.id = get("task", spec.id);
    spec.n_modes = std::stoul(get("n_modes", std::to_string(spec.n_modes)));
    spec.ring_radius = std::stod(get("ring_radius", std::to_string(spec.ring_radius)));
    spec.mode_std = std::stod(get("mode_std", std::to_string(spec.mode_std)));
    spec.reward_scale = std::stod(get("reward_scale", std::to_string(spec.reward_scale)));
    spec.grid = std::stoul(get("grid", std::to_string(spec.grid)));
    spec.lattice_step = std::stoul(get("lattice_step", std::to_string(spec.lattice_step)));
    spec.block = std::stoul(get("block", std::to_string(spec.block)));
    spec.max_count = std::stoi(get("max_count", std::to_string(spec.max_count)));
    spec.detect_threshold =
        std::stod(get("detect_threshold", std::to_string(spec.detect_threshold)));
    spec.train_count = std::stoul(get("train_count", std::to_string(spec.train_count)));
    spec.test_count = std::stoul(get("test_count", std::to_string(spec.test_count)));
    spec.validate();
    return spec;
}

}  // namespace gpolab::tasks
