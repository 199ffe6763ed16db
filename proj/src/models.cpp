#include "gounsafe/models.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace gounsafe {

namespace {

using nlohmann::json;

std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

std::uint64_t parse_hex(const std::string& s) {
    return std::stoull(s, nullptr, 16);
}

bool table_width(int w) {
    return w >= 32 && w <= 512 && w % 32 == 0;
}

Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-lim, lim);
    Tensor w({fan_in, fan_out});
    for (double& v : w.vec()) v = u(rng);
    return w;
}

Tensor filled(std::size_t rows, std::size_t cols, double v) {
    return Tensor({rows, cols}, std::vector<double>(rows * cols, v));
}

ValueId ones_const(Tape& t, std::size_t rows, std::size_t cols) {
    return t.constant(filled(rows, cols, 1.0));
}

ValueId linear(Forward& f, ValueId x, const std::string& prefix) {
    Tape& t = *f.tape;
    ValueId y = t.matmul(x, t.param(&f.params->tensors.at(prefix + ".weight")));
    ValueId b = t.param(&f.params->tensors.at(prefix + ".bias"));
    return t.add(y, t.matmul(ones_const(t, t.value(x).rows(), 1), b));
}

ValueId conv_finish(Forward& f, ValueId pre, int layer) {
    Tape& t = *f.tape;
    std::string prefix = "conv" + std::to_string(layer);
    ValueId y = linear(f, pre, prefix);
    if (f.config->batch_norm) {
        ValueId gamma = t.param(&f.params->tensors.at(prefix + ".bn_gamma"));
        ValueId beta = t.param(&f.params->tensors.at(prefix + ".bn_beta"));
        y = t.batch_norm(y, gamma, beta, &f.params->bn_stats.at(prefix), f.training);
    }
    return t.activation(y, f.config->conv_activation);
}

// Every edge kind, both directions, deduplicated.
std::vector<std::pair<int, int>> undirected_union(const EncodedInstance& inst) {
    std::set<std::pair<int, int>> arcs;
    for (const auto& kind : inst.edges)
        for (auto [u, v] : kind) {
            arcs.insert({u, v});
            arcs.insert({v, u});
        }
    return {arcs.begin(), arcs.end()};
}

json config_json(const ModelConfig& c) {
    json j;
    j["variant"] = model_variant_name(c.variant);
    j["conv-depth"] = c.conv_depth;
    j["mlp-depth"] = c.mlp_depth;
    j["conv-width"] = c.conv_width;
    j["mlp-width"] = c.mlp_width;
    j["conv-activation"] = activation_to_string(c.conv_activation);
    j["mlp-activation"] = activation_to_string(c.mlp_activation);
    j["pooling"] = pooling_name(c.pooling);
    j["batch-norm"] = c.batch_norm;
    j["dropout"] = c.dropout;
    j["input-dim"] = c.input_dim;
    j["what-classes"] = c.what_classes;
    j["why-classes"] = c.why_classes;
    j["wl2-radius"] = c.wl2_radius;
    j["wl2-pair-budget"] = c.wl2_pair_budget;
    return j;
}

ModelConfig config_from(const json& j) {
    ModelConfig c;
    c.variant = model_variant_from_name(j.at("variant").get<std::string>());
    c.conv_depth = j.at("conv-depth").get<int>();
    c.mlp_depth = j.at("mlp-depth").get<int>();
    c.conv_width = j.at("conv-width").get<int>();
    c.mlp_width = j.at("mlp-width").get<int>();
    c.conv_activation = activation_from_string(j.at("conv-activation").get<std::string>());
    c.mlp_activation = activation_from_string(j.at("mlp-activation").get<std::string>());
    c.pooling = pooling_from_name(j.at("pooling").get<std::string>());
    c.batch_norm = j.at("batch-norm").get<bool>();
    c.dropout = j.at("dropout").get<double>();
    c.input_dim = j.at("input-dim").get<int>();
    c.what_classes = j.at("what-classes").get<int>();
    c.why_classes = j.at("why-classes").get<int>();
    c.wl2_radius = j.at("wl2-radius").get<int>();
    c.wl2_pair_budget = j.at("wl2-pair-budget").get<int>();
    c.validate();
    return c;
}

json params_json(const ModelParams& p) {
    json jt = json::object();
    for (const auto& [name, tensor] : p.tensors)
        jt[name] = {{"shape", tensor.shape()}, {"data", tensor.vec()}};
    json jb = json::object();
    for (const auto& [name, st] : p.bn_stats)
        jb[name] = {{"running-mean", st.running_mean},
                    {"running-var", st.running_var},
                    {"momentum", st.momentum},
                    {"initialized", st.initialized}};
    json j;
    j["tensors"] = std::move(jt);
    j["batch-norm-stats"] = std::move(jb);
    j["temperature"] = {{"what", p.t_what}, {"why", p.t_why}};
    return j;
}

ModelParams params_from(const json& j) {
    ModelParams p;
    for (const auto& [name, jt] : j.at("tensors").items()) {
        auto shape = jt.at("shape").get<std::vector<std::size_t>>();
        auto data = jt.at("data").get<std::vector<double>>();
        p.tensors[name] = Tensor(std::move(shape), std::move(data));
    }
    for (const auto& [name, jb] : j.at("batch-norm-stats").items()) {
        BatchNormStats st;
        st.running_mean = jb.at("running-mean").get<std::vector<double>>();
        st.running_var = jb.at("running-var").get<std::vector<double>>();
        st.momentum = jb.at("momentum").get<double>();
        st.initialized = jb.at("initialized").get<bool>();
        p.bn_stats[name] = std::move(st);
    }
    p.t_what = j.at("temperature").at("what").get<double>();
    p.t_why = j.at("temperature").at("why").get<double>();
    return p;
}

ValueId convolve(Forward& f, ValueId x, const EncodedInstance& inst) {
    switch (f.config->variant) {
        case ModelVariant::DeepSets: return deepsets_convolve(f, x);
        case ModelVariant::Gin: return gin_convolve(f, x, inst);
        case ModelVariant::Wl2Gnn: return wl2_convolve(f, x, inst);
        case ModelVariant::Mlp: break;
    }
    throw std::invalid_argument("convolve: mlp variant has no convolution stack");
}

void check_instance(const EncodedInstance& inst, const ModelConfig& config) {
    config.validate();
    if (inst.n != config.input_dim)
        throw VocabularyMismatch("instance encoded with n=" + std::to_string(inst.n) +
                                 ", model expects n=" + std::to_string(config.input_dim));
    if (inst.num_vertices == 0) throw EmptyGraph("instance has no vertices");
}

}  // namespace

const char* model_variant_name(ModelVariant v) {
    switch (v) {
        case ModelVariant::Mlp: return "mlp";
        case ModelVariant::DeepSets: return "deepsets";
        case ModelVariant::Gin: return "gin";
        case ModelVariant::Wl2Gnn: return "wl2";
    }
    return "?";
}

ModelVariant model_variant_from_name(const std::string& name) {
    for (ModelVariant v : model_variants())
        if (name == model_variant_name(v)) return v;
    throw std::invalid_argument("unknown model variant: " + name);
}

const std::array<ModelVariant, 4>& model_variants() {
    static const std::array<ModelVariant, 4> all = {
        ModelVariant::Mlp, ModelVariant::DeepSets, ModelVariant::Gin, ModelVariant::Wl2Gnn};
    return all;
}

const char* pooling_name(Pooling p) {
    switch (p) {
        case Pooling::Sum: return "sum";
        case Pooling::Mean: return "mean";
        case Pooling::Max: return "max";
        case Pooling::Min: return "min";
        case Pooling::Softmax: return "softmax";
    }
    return "?";
}

Pooling pooling_from_name(const std::string& name) {
    for (Pooling p : pooling_methods())
        if (name == pooling_name(p)) return p;
    throw std::invalid_argument("unknown pooling method: " + name);
}

const std::array<Pooling, 5>& pooling_methods() {
    static const std::array<Pooling, 5> all = {
        Pooling::Sum, Pooling::Mean, Pooling::Max, Pooling::Min, Pooling::Softmax};
    return all;
}

void ModelConfig::validate() const {
    if (variant != ModelVariant::Mlp) {
        if (conv_depth < 2 || conv_depth > 6)
            throw std::invalid_argument("conv_depth outside [2, 6]");
        if (!table_width(conv_width))
            throw std::invalid_argument("conv_width outside {32, 64, 128, 256, 512}");
    }
    if (mlp_depth < 1 || mlp_depth > 3)
        throw std::invalid_argument("mlp_depth outside [1, 3]");
    if (!table_width(mlp_width))
        throw std::invalid_argument("mlp_width outside {32, 64, 128, 256, 512}");
    if (dropout != 0.0 && dropout != 0.5)
        throw std::invalid_argument("dropout outside {0, 0.5}");
    if (input_dim <= 0) throw std::invalid_argument("input_dim not set");
    if (what_classes <= 0 || why_classes <= 0)
        throw std::invalid_argument("head class counts not set");
    if (variant == ModelVariant::Wl2Gnn) {
        if (wl2_radius < 1) throw std::invalid_argument("wl2_radius below 1");
        if (wl2_pair_budget < 1) throw std::invalid_argument("wl2_pair_budget below 1");
    }
}

int ModelConfig::pooled_dim() const {
    return pooling == Pooling::Softmax ? conv_width - 1 : conv_width;
}

int ModelConfig::head_input_dim() const {
    if (variant == ModelVariant::Mlp) return input_dim;
    return pooled_dim() + conv_width + 3;
}

std::string ModelConfig::to_json() const {
    return config_json(*this).dump(2) + "\n";
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    return config_from(json::parse(text));
}

std::string ModelParams::to_json() const {
    return params_json(*this).dump() + "\n";
}

ModelParams ModelParams::from_json(const std::string& text) {
    return params_from(json::parse(text));
}

ModelParams init_params(const ModelConfig& config, std::mt19937_64& rng) {
    config.validate();
    ModelParams p;
    if (config.variant != ModelVariant::Mlp) {
        int d0 = config.variant == ModelVariant::Wl2Gnn
                     ? 2 * config.input_dim + kEdgeKindCount
                     : config.input_dim;
        for (int l = 0; l < config.conv_depth; ++l) {
            int in = l == 0 ? d0 : config.conv_width;
            if (config.variant == ModelVariant::Wl2Gnn) in *= 2;
            std::string prefix = "conv" + std::to_string(l);
            p.tensors[prefix + ".weight"] = glorot(in, config.conv_width, rng);
            p.tensors[prefix + ".bias"] = Tensor::zeros(1, config.conv_width);
            if (config.variant == ModelVariant::Gin)
                p.tensors[prefix + ".eps"] = Tensor::zeros(1, 1);
            if (config.batch_norm) {
                p.tensors[prefix + ".bn_gamma"] = filled(1, config.conv_width, 1.0);
                p.tensors[prefix + ".bn_beta"] = Tensor::zeros(1, config.conv_width);
                p.bn_stats[prefix] = BatchNormStats{};
            }
        }
    }
    for (int m = 0; m < config.mlp_depth; ++m) {
        int in = m == 0 ? config.head_input_dim() : config.mlp_width;
        std::string prefix = "mlp" + std::to_string(m);
        p.tensors[prefix + ".weight"] = glorot(in, config.mlp_width, rng);
        p.tensors[prefix + ".bias"] = Tensor::zeros(1, config.mlp_width);
    }
    p.tensors["head_what.weight"] = glorot(config.mlp_width, config.what_classes, rng);
    p.tensors["head_what.bias"] = Tensor::zeros(1, config.what_classes);
    p.tensors["head_why.weight"] = glorot(config.mlp_width, config.why_classes, rng);
    p.tensors["head_why.bias"] = Tensor::zeros(1, config.why_classes);
    return p;
}

ValueId deepsets_convolve(Forward& f, ValueId x) {
    ValueId h = x;
    for (int l = 0; l < f.config->conv_depth; ++l) h = conv_finish(f, h, l);
    return h;
}

ValueId gin_convolve(Forward& f, ValueId x, const EncodedInstance& instance) {
    Tape& t = *f.tape;
    auto arcs = undirected_union(instance);
    std::vector<std::int32_t> srcs, dsts;
    srcs.reserve(arcs.size());
    dsts.reserve(arcs.size());
    for (auto [u, v] : arcs) {
        srcs.push_back(u);
        dsts.push_back(v);
    }
    auto nv = static_cast<std::size_t>(instance.num_vertices);
    ValueId h = x;
    for (int l = 0; l < f.config->conv_depth; ++l) {
        std::size_t width = t.value(h).cols();
        ValueId nbr = srcs.empty() ? t.constant(Tensor::zeros(nv, width))
                                   : t.segment_sum(t.gather_rows(h, srcs), dsts, nv);
        ValueId eps = t.param(&f.params->tensors.at("conv" + std::to_string(l) + ".eps"));
        ValueId eps_full = t.matmul(t.matmul(ones_const(t, nv, 1), eps), ones_const(t, 1, width));
        ValueId pre = t.add(t.add(h, nbr), t.mul(eps_full, h));
        h = conv_finish(f, pre, l);
    }
    return h;
}

Wl2PairSet wl2_pair_set(const EncodedInstance& instance, int radius, int budget) {
    int nv = instance.num_vertices;
    std::vector<std::vector<int>> adj(nv);
    for (auto [u, v] : undirected_union(instance)) {
        if (u < 0 || u >= nv || v < 0 || v >= nv)
            throw std::invalid_argument("wl2_pair_set: edge endpoint out of range");
        adj[u].push_back(v);
    }

    Wl2PairSet out;
    std::vector<int> dist(nv);
    for (int i = 0; i < nv; ++i) {
        std::fill(dist.begin(), dist.end(), -1);
        dist[i] = 0;
        std::deque<int> frontier{i};
        while (!frontier.empty()) {
            int u = frontier.front();
            frontier.pop_front();
            if (dist[u] == radius) continue;
            for (int v : adj[u])
                if (dist[v] < 0) {
                    dist[v] = dist[u] + 1;
                    frontier.push_back(v);
                }
        }
        for (int j = 0; j < nv; ++j)
            if (dist[j] >= 0) out.pairs.emplace_back(i, j);
    }
    if (static_cast<int>(out.pairs.size()) > budget)
        throw BudgetExceeded("2-WL pair set has " + std::to_string(out.pairs.size()) +
                             " pairs, budget is " + std::to_string(budget));

    std::unordered_map<std::int64_t, int> index;
    index.reserve(out.pairs.size());
    for (std::size_t p = 0; p < out.pairs.size(); ++p)
        index[static_cast<std::int64_t>(out.pairs[p].first) * nv + out.pairs[p].second] =
            static_cast<int>(p);
    for (std::size_t p = 0; p < out.pairs.size(); ++p) {
        auto [i, j] = out.pairs[p];
        for (int k = 0; k < nv; ++k) {
            auto q = index.find(static_cast<std::int64_t>(i) * nv + k);
            if (q == index.end()) continue;
            auto r = index.find(static_cast<std::int64_t>(k) * nv + j);
            if (r == index.end()) continue;
            out.ps.push_back(static_cast<std::int32_t>(p));
            out.qs.push_back(q->second);
            out.rs.push_back(r->second);
        }
    }
    return out;
}

ValueId wl2_convolve(Forward& f, ValueId x, const EncodedInstance& instance) {
    Tape& t = *f.tape;
    const ModelConfig& config = *f.config;
    if (instance.num_vertices == 0) throw EmptyGraph("wl2_convolve: instance has no vertices");
    Wl2PairSet set = wl2_pair_set(instance, config.wl2_radius, config.wl2_pair_budget);

    int nv = instance.num_vertices;
    auto np = set.pairs.size();
    std::vector<std::int32_t> firsts, seconds;
    firsts.reserve(np);
    seconds.reserve(np);
    for (auto [i, j] : set.pairs) {
        firsts.push_back(i);
        seconds.push_back(j);
    }

    std::unordered_map<std::int64_t, int> index;
    index.reserve(np);
    for (std::size_t p = 0; p < np; ++p)
        index[static_cast<std::int64_t>(set.pairs[p].first) * nv + set.pairs[p].second] =
            static_cast<int>(p);
    Tensor kinds({np, static_cast<std::size_t>(kEdgeKindCount)});
    for (int kind = 0; kind < kEdgeKindCount; ++kind)
        for (auto [u, v] : instance.edges[kind]) {
            auto it = index.find(static_cast<std::int64_t>(u) * nv + v);
            if (it != index.end()) kinds.at(static_cast<std::size_t>(it->second), kind) = 1.0;
        }

    ValueId s = t.concat({t.gather_rows(x, firsts), t.gather_rows(x, seconds),
                          t.constant(std::move(kinds))});
    for (int l = 0; l < config.conv_depth; ++l) {
        ValueId a = t.gather_rows(s, set.qs);
        ValueId b = t.gather_rows(s, set.rs);
        ValueId agg = t.segment_sum(t.mul(a, b), set.ps, np);
        s = conv_finish(f, t.concat({s, agg}), l);
    }
    return t.segment_sum(s, firsts, static_cast<std::size_t>(nv));
}

ValueId pool(Tape& tape, ValueId z, Pooling method) {
    const Tensor& tz = tape.value(z);
    std::size_t nv = tz.rows(), d = tz.cols();
    if (nv == 0) throw EmptyGraph("pool: no vertices to pool over");
    switch (method) {
        case Pooling::Sum: return tape.matmul(ones_const(tape, 1, nv), z);
        case Pooling::Mean: return tape.mean_rows(z);
        case Pooling::Max: return tape.max_rows(z);
        case Pooling::Min: return tape.min_rows(z);
        case Pooling::Softmax: break;
    }
    if (d < 2) throw std::invalid_argument("pool: softmax pooling needs at least two columns");
    Tensor last({d, 1});
    last.at(d - 1, 0) = 1.0;
    Tensor rest({d, d - 1});
    for (std::size_t c = 0; c + 1 < d; ++c) rest.at(c, c) = 1.0;
    ValueId weights = tape.softmax(tape.reshape(tape.matmul(z, tape.constant(std::move(last))), {1, nv}));
    return tape.matmul(weights, tape.matmul(z, tape.constant(std::move(rest))));
}

std::pair<ValueId, ValueId> classify_on_tape(Forward& f, const EncodedInstance& instance) {
    Tape& t = *f.tape;
    const ModelConfig& config = *f.config;
    check_instance(instance, config);
    if (instance.usage_vertex < 0 || instance.usage_vertex >= instance.num_vertices)
        throw std::invalid_argument("classify: usage vertex out of range");

    ValueId x = t.constant(instance.feature_tensor());
    ValueId head_in;
    if (config.variant == ModelVariant::Mlp) {
        head_in = t.gather_rows(x, {instance.usage_vertex});
    } else {
        ValueId z = convolve(f, x, instance);
        ValueId pooled = pool(t, z, config.pooling);
        ValueId usage = t.gather_rows(z, {instance.usage_vertex});
        ValueId context = t.constant(Tensor({1, 3}, {instance.context_onehot[0],
                                                     instance.context_onehot[1],
                                                     instance.context_onehot[2]}));
        head_in = t.concat({pooled, usage, context});
    }

    ValueId h = head_in;
    for (int m = 0; m < config.mlp_depth; ++m) {
        if (m > 0 && f.training && config.dropout > 0.0)
            h = t.dropout(h, config.dropout, *f.rng, true);
        h = t.activation(linear(f, h, "mlp" + std::to_string(m)), config.mlp_activation);
    }
    return {linear(f, h, "head_what"), linear(f, h, "head_why")};
}

Logits classify(const EncodedInstance& instance, const ModelParams& params,
                const ModelConfig& config) {
    Tape tape;
    Forward f{&tape, &config, const_cast<ModelParams*>(&params), false, nullptr};
    auto [what, why] = classify_on_tape(f, instance);
    return {tape.value(what), tape.value(why)};
}

Tensor pooled_embedding(const EncodedInstance& instance, const ModelParams& params,
                        const ModelConfig& config) {
    if (config.variant == ModelVariant::Mlp)
        throw std::invalid_argument("pooled_embedding: mlp variant has no graph embedding");
    check_instance(instance, config);
    Tape tape;
    Forward f{&tape, &config, const_cast<ModelParams*>(&params), false, nullptr};
    ValueId x = tape.constant(instance.feature_tensor());
    ValueId z = convolve(f, x, instance);
    return tape.value(pool(tape, z, config.pooling));
}

std::string Checkpoint::to_json() const {
    json j;
    j["format"] = "gounsafe-checkpoint-v1";
    j["config"] = config_json(config);
    j["params"] = params_json(params);
    j["vocabulary-hash"] = hash_hex(vocabulary_hash);
    j["manifest-hash"] = hash_hex(manifest_hash);
    j["softmax-weight-column"] = kSoftmaxWeightColumn;
    return j.dump() + "\n";
}

Checkpoint Checkpoint::from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.at("format").get<std::string>() != "gounsafe-checkpoint-v1")
        throw std::runtime_error("unrecognized checkpoint format");
    Checkpoint c;
    c.config = config_from(j.at("config"));
    c.params = params_from(j.at("params"));
    c.vocabulary_hash = parse_hex(j.at("vocabulary-hash").get<std::string>());
    c.manifest_hash = parse_hex(j.at("manifest-hash").get<std::string>());
    return c;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << to_json();
    if (!out.flush()) throw std::runtime_error("cannot write checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

}  // namespace gounsafe
