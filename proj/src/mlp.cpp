#include "gpolab/mlp.hpp"

#include <cmath>

#include "gpolab/kernels.hpp"
#include "gpolab/rng.hpp"

namespace gpolab {

namespace k = kernels;

void DenoiserConfig::validate() const {
    if (data_dim == 0 || n_conditions == 0 || hidden_dim == 0) {
        throw ConfigError("DenoiserConfig: dimensions must be positive");
    }
    if (embed_dim == 0 || embed_dim % 2 != 0) {
        throw ConfigError("DenoiserConfig: embed_dim must be positive and even");
    }
}

namespace {

std::string layer_w(size_t i) { return "layer" + std::to_string(i) + ".w"; }
std::string layer_b(size_t i) { return "layer" + std::to_string(i) + ".b"; }

Array uniform_init(std::vector<size_t> shape, size_t fan_in, Rng& rng) {
    Array a(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (float& v : a.data) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
    return a;
}

void check_input(const ParamStore& params, const Array& input) {
    if (input.shape.size() != 2) {
        throw ConfigError("forward_mlp: input must be [batch, features], got " +
                          shape_string(input.shape));
    }
    const Array& w0 = params.get(params.has("layer0.w") ? "layer0.w" : "head.w");
    if (input.shape[1] != w0.shape[0]) {
        throw ConfigError("forward_mlp: input features " + std::to_string(input.shape[1]) +
                          " do not match first layer fan-in " + std::to_string(w0.shape[0]));
    }
}

}  // namespace

ParamStore init_denoiser(const DenoiserConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ParamStore store;
    size_t fan_in = cfg.input_dim();
    for (size_t i = 0; i < cfg.n_hidden; ++i) {
        store.add(layer_w(i), uniform_init({fan_in, cfg.hidden_dim}, fan_in, rng));
        store.add(layer_b(i), Array({cfg.hidden_dim}));
        fan_in = cfg.hidden_dim;
    }
    store.add("head.w", uniform_init({fan_in, cfg.data_dim}, fan_in, rng));
    store.add("head.b", Array({cfg.data_dim}));
    store.add("cond_embed", uniform_init({cfg.n_conditions, cfg.embed_dim}, cfg.embed_dim, rng));
    return store;
}

DenoiserConfig config_from_store(const ParamStore& params) {
    DenoiserConfig cfg;
    const Array& emb = params.get("cond_embed");
    cfg.n_conditions = emb.shape[0];
    cfg.embed_dim = emb.shape[1];
    cfg.data_dim = params.get("head.w").shape[1];
    cfg.n_hidden = 0;
    while (params.has(layer_w(cfg.n_hidden))) ++cfg.n_hidden;
    cfg.hidden_dim = cfg.n_hidden > 0 ? params.get(layer_w(0)).shape[1] : cfg.data_dim;
    return cfg;
}

Array forward_mlp(const ParamStore& params, const Array& input) {
    check_input(params, input);
    Array h = input;
    for (size_t i = 0; params.has(layer_w(i)); ++i) {
        h = k::ew_silu(k::add_rowvec(k::matmul(h, params.get(layer_w(i))), params.get(layer_b(i))));
    }
    Array out = k::add_rowvec(k::matmul(h, params.get("head.w")), params.get("head.b"));
    check_finite(out, "forward_mlp output");
    return out;
}

NodeId forward_mlp(const ParamStore& params, Tape& tape, NodeId input) {
    check_input(params, tape.value(input));
    NodeId h = input;
    for (size_t i = 0; params.has(layer_w(i)); ++i) {
        NodeId w = tape.param(params, layer_w(i));
        NodeId b = tape.param(params, layer_b(i));
        h = tape.silu(tape.add_rowvec(tape.matmul(h, w), b));
    }
    NodeId w = tape.param(params, "head.w");
    NodeId b = tape.param(params, "head.b");
    return tape.add_rowvec(tape.matmul(h, w), b);
}

std::vector<float> timestep_embedding(double t, size_t embed_dim) {
    const size_t half = embed_dim / 2;
    std::vector<float> emb(embed_dim);
    const double tt = t * 1000.0;
    for (size_t j = 0; j < half; ++j) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) /
                                     static_cast<double>(half));
        emb[2 * j] = static_cast<float>(std::sin(tt * freq));
        emb[2 * j + 1] = static_cast<float>(std::cos(tt * freq));
    }
    return emb;
}

namespace {

// [B, data_dim + embed_dim]: sample columns then timestep embedding.
Array stack_x_and_temb(const DenoiserConfig& cfg, const Array& x, const std::vector<double>& t) {
    if (x.shape.size() != 2 || x.shape[1] != cfg.data_dim) {
        throw ConfigError("predict_noise: x must be [batch, data_dim], got " +
                          shape_string(x.shape));
    }
    const size_t batch = x.shape[0];
    if (t.size() != batch) throw UsageError("predict_noise: one t per row required");
    const size_t w = cfg.data_dim + cfg.embed_dim;
    Array out({batch, w});
    for (size_t i = 0; i < batch; ++i) {
        for (size_t j = 0; j < cfg.data_dim; ++j) out.data[i * w + j] = x.at(i, j);
        const std::vector<float> emb = timestep_embedding(t[i], cfg.embed_dim);
        for (size_t j = 0; j < cfg.embed_dim; ++j) out.data[i * w + cfg.data_dim + j] = emb[j];
    }
    return out;
}

void check_conditions(const DenoiserConfig& cfg, const std::vector<int>& cond, size_t batch) {
    if (cond.size() != batch) throw UsageError("predict_noise: one condition per row required");
    for (int c : cond) {
        if (c < 0 || static_cast<size_t>(c) >= cfg.n_conditions) {
            throw UsageError("predict_noise: condition index " + std::to_string(c) +
                             " out of range");
        }
    }
}

}  // namespace

Array predict_noise(const DenoiserConfig& cfg, const ParamStore& params, const Array& x,
                    const std::vector<double>& t, const std::vector<int>& cond) {
    Array xt = stack_x_and_temb(cfg, x, t);
    check_conditions(cfg, cond, x.shape[0]);
    const Array& table = params.get("cond_embed");
    const size_t batch = x.shape[0];
    const size_t w = cfg.input_dim();
    Array input({batch, w});
    const size_t left = cfg.data_dim + cfg.embed_dim;
    for (size_t i = 0; i < batch; ++i) {
        for (size_t j = 0; j < left; ++j) input.data[i * w + j] = xt.data[i * left + j];
        for (size_t j = 0; j < cfg.embed_dim; ++j) {
            input.data[i * w + left + j] = table.at(static_cast<size_t>(cond[i]), j);
        }
    }
    return forward_mlp(params, input);
}

NodeId predict_noise(const DenoiserConfig& cfg, const ParamStore& params, Tape& tape,
                     const Array& x, const std::vector<double>& t, const std::vector<int>& cond) {
    Array xt = stack_x_and_temb(cfg, x, t);
    check_conditions(cfg, cond, x.shape[0]);
    const size_t batch = x.shape[0];
    Array onehot({batch, cfg.n_conditions});
    for (size_t i = 0; i < batch; ++i) onehot.at(i, static_cast<size_t>(cond[i])) = 1.0f;

    NodeId left = tape.leaf(std::move(xt));
    NodeId table = tape.param(params, "cond_embed");
    NodeId cond_rows = tape.matmul(tape.leaf(std::move(onehot)), table);
    NodeId input = tape.concat_cols(left, cond_rows);
    return forward_mlp(params, tape, input);
}

}  // namespace gpolab
