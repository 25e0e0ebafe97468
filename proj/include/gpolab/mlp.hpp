#pragma once

#include <vector>

#include "gpolab/param_store.hpp"
#include "gpolab/tape.hpp"

namespace gpolab {

// Conditional MLP noise predictor. The network input is the noisy sample
// concatenated with a sinusoidal timestep embedding and a learned condition
// embedding; hidden layers use SiLU, the head is linear.
struct DenoiserConfig {
    size_t data_dim = 2;
    size_t n_conditions = 1;
    size_t hidden_dim = 64;
    size_t n_hidden = 2;
    size_t embed_dim = 32;

    size_t input_dim() const { return data_dim + 2 * embed_dim; }
    void validate() const;
};

// Weights uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero, embedding
// table uniform(-1/sqrt(embed_dim), ...). Fully determined by the seed.
ParamStore init_denoiser(const DenoiserConfig& cfg, uint64_t seed);

DenoiserConfig config_from_store(const ParamStore& params);

// Plain MLP over an already-assembled input batch [B, input_dim].
Array forward_mlp(const ParamStore& params, const Array& input);
NodeId forward_mlp(const ParamStore& params, Tape& tape, NodeId input);

// Sinusoidal embedding of t in [0,1]; embed_dim values.
std::vector<float> timestep_embedding(double t, size_t embed_dim);

// eps_theta(x_t, t, c) for a row batch: x [B, data_dim], one t and one
// condition per row. The recorded variant routes the condition embedding
// through the tape so the table receives gradients.
Array predict_noise(const DenoiserConfig& cfg, const ParamStore& params, const Array& x,
                    const std::vector<double>& t, const std::vector<int>& cond);
NodeId predict_noise(const DenoiserConfig& cfg, const ParamStore& params, Tape& tape,
                     const Array& x, const std::vector<double>& t, const std::vector<int>& cond);

}  // namespace gpolab
