#include <fstream>
#include <map>

#include "nextdit/dit/model.hpp"
#include "nextdit/numkernel/error.hpp"
#include "nextdit/numkernel/io.hpp"

namespace nextdit::dit {

namespace {

constexpr const char* kConfigName = "__config__";
constexpr std::size_t kConfigFields = 17;

nk::Tensor encode(const ModelConfig& c) {
    auto z = [](std::size_t v) { return static_cast<double>(v); };
    return nk::Tensor(nk::Shape{kConfigFields},
                      std::vector<double>{z(c.patch), z(c.channels), z(c.dim), z(c.layers), z(c.q_heads),
                                          z(c.kv_heads), z(c.mlp_ratio), z(c.rope_axes), c.rope_base,
                                          z(c.time_freq_dim), c.time_scale, z(c.num_classes),
                                          c.mode == Mode::generative ? 0.0 : 1.0,
                                          c.norm == NormStyle::sandwich ? 0.0 : 1.0, c.norm_eps, c.init_std,
                                          z(c.head_hidden)});
}

ModelConfig decode(const nk::Tensor& t) {
    if (t.size() != kConfigFields) throw ConfigError("checkpoint: unexpected config record length");
    auto z = [&](std::size_t i) { return static_cast<std::size_t>(t[i]); };
    ModelConfig c;
    c.patch = z(0);
    c.channels = z(1);
    c.dim = z(2);
    c.layers = z(3);
    c.q_heads = z(4);
    c.kv_heads = z(5);
    c.mlp_ratio = z(6);
    c.rope_axes = z(7);
    c.rope_base = t[8];
    c.time_freq_dim = z(9);
    c.time_scale = t[10];
    c.num_classes = z(11);
    c.mode = t[12] == 0.0 ? Mode::generative : Mode::recognition;
    c.norm = t[13] == 0.0 ? NormStyle::sandwich : NormStyle::pre_only;
    c.norm_eps = t[14];
    c.init_std = t[15];
    c.head_hidden = z(16);
    return c;
}

}  // namespace

void save_model(const std::string& path, const ModelParams& m) {
    std::vector<nk::NamedTensor> entries;
    entries.push_back({kConfigName, encode(m.config)});
    for (const auto& [name, v] : m.named_parameters()) entries.push_back({name, v.value()});
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    nk::write_archive(out, entries);
    if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

ModelParams load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    const std::vector<nk::NamedTensor> entries = nk::read_archive(in);
    if (entries.empty() || entries.front().name != kConfigName) throw ConfigError("load_model: missing config record");
    ModelParams m = init_model(decode(entries.front().tensor), 0);
    std::map<std::string, const nk::Tensor*> by_name;
    for (std::size_t i = 1; i < entries.size(); ++i) by_name[entries[i].name] = &entries[i].tensor;
    auto params = m.named_parameters();
    if (params.size() != by_name.size()) throw ConfigError("load_model: parameter count mismatch in " + path);
    for (auto& [name, v] : params) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw ConfigError("load_model: missing tensor " + name);
        if (it->second->shape() != v.shape()) throw DimensionError("load_model: shape mismatch for " + name);
        v.mutable_value() = *it->second;
    }
    return m;
}

}  // namespace nextdit::dit
