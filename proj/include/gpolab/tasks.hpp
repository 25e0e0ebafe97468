#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gpolab/array.hpp"
#include "gpolab/rewards.hpp"

namespace gpolab::tasks {

// One labeled sample: a condition index and a clean data vector.
struct DataRecord {
    int condition = 0;
    Array x0;
};

struct Dataset {
    std::vector<DataRecord> train;
    std::vector<DataRecord> test;
};

// Synthetic task description. Two tasks:
//   gmm-mode:  2-D points; condition = target mixture mode (ring layout);
//              continuous reward exp(-d^2/scale^2) toward the target mode.
//   dot-count: grid images with 2x2 blocks on a coarse lattice; condition =
//              block count; reward = relaxed count score of detected blobs.
struct TaskSpec {
    std::string id = "dot-count";

    // gmm-mode
    size_t n_modes = 8;
    double ring_radius = 1.0;
    double mode_std = 0.1;
    double reward_scale = 0.5;

    // dot-count
    size_t grid = 12;
    size_t lattice_step = 3;
    size_t block = 2;
    int max_count = 7;
    double detect_threshold = 0.5;

    size_t train_count = 1050;
    size_t test_count = 450;

    static TaskSpec make(const std::string& id);
    void validate() const;

    size_t data_dim() const { return id == "gmm-mode" ? 2 : grid * grid; }
    size_t n_conditions() const {
        return id == "gmm-mode" ? n_modes : static_cast<size_t>(max_count);
    }
    size_t lattice_slots() const;

    std::map<std::string, std::string> to_kv() const;
    static TaskSpec from_kv(const std::map<std::string, std::string>& kv);
};

std::vector<std::array<double, 2>> gmm_modes(const TaskSpec& spec);

// Deterministic dataset synthesis; record i depends only on (seed, i), and
// the train/test split is a fixed prefix/suffix, so re-invocation with the
// same seed reproduces both halves bit-exactly.
Dataset synthesize(const TaskSpec& spec, uint64_t seed);

void save_records(const std::filesystem::path& path, const std::vector<DataRecord>& records);
std::vector<DataRecord> load_records(const std::filesystem::path& path);

// Rule-based evaluator bindings.
double reward_of(const TaskSpec& spec, const Array& sample, int condition);
bool success_of(const TaskSpec& spec, const Array& sample, int condition);

}  // namespace gpolab::tasks
