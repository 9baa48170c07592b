#include "tripnet/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace tripnet {

using nlohmann::json;

json config_to_json(const ModelConfig& config) {
    return json{{"variant", to_string(config.variant)},
                {"lstm_layer_sizes", config.lstm_layer_sizes},
                {"attention_size", config.attention_size},
                {"fc_sizes", config.fc_sizes},
                {"max_seq_len", config.max_seq_len},
                {"attention_top_layer_only", config.attention_top_layer_only}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.lstm_layer_sizes = j.at("lstm_layer_sizes").get<std::vector<int>>();
    c.attention_size = j.at("attention_size").get<int>();
    c.fc_sizes = j.at("fc_sizes").get<std::vector<int>>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.attention_top_layer_only = j.at("attention_top_layer_only").get<bool>();
    c.validate();
    return c;
}

void save_checkpoint(const ModelConfig& config, ModelParams& params, const std::string& path,
                     const json& run_config) {
    json doc;
    doc["format_version"] = kCheckpointFormatVersion;
    doc["config"] = config_to_json(config);
    doc["norm_stats"] = {{"dt_min", params.norm.dt_min},
                         {"dt_max", params.norm.dt_max},
                         {"d_min", params.norm.d_min},
                         {"d_max", params.norm.d_max}};
    json flat = json::object();
    for (auto& [name, t] : params.named()) {
        // column-major flattening, matching Eigen's storage
        flat[name] = std::vector<double>(t.value().data(), t.value().data() + t.size());
    }
    doc["params"] = std::move(flat);
    doc["run_config"] = run_config;

    std::ofstream out(path);
    if (!out) throw DataError("save_checkpoint: cannot open " + path);
    out << doc.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_checkpoint: cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("load_checkpoint: invalid JSON in " + path + ": " + e.what());
    }
    const int ver = doc.at("format_version").get<int>();
    if (ver != kCheckpointFormatVersion) {
        throw DataError("load_checkpoint: format_version " + std::to_string(ver) +
                        " unsupported (expected " + std::to_string(kCheckpointFormatVersion) +
                        ")");
    }
    Checkpoint cp;
    cp.config = config_from_json(doc.at("config"));
    cp.params = init_params(cp.config, 0); // shape template; values overwritten below
    const auto& ns = doc.at("norm_stats");
    cp.params.norm.dt_min = ns.at("dt_min").get<double>();
    cp.params.norm.dt_max = ns.at("dt_max").get<double>();
    cp.params.norm.d_min = ns.at("d_min").get<double>();
    cp.params.norm.d_max = ns.at("d_max").get<double>();

    const auto& flat = doc.at("params");
    auto named = cp.params.named();
    if (flat.size() != named.size()) {
        throw DataError("load_checkpoint: " + std::to_string(flat.size()) +
                        " parameter arrays, expected " + std::to_string(named.size()));
    }
    for (auto& [name, t] : named) {
        if (!flat.contains(name)) throw DataError("load_checkpoint: missing parameter " + name);
        const auto values = flat.at(name).get<std::vector<double>>();
        if (values.size() != std::size_t(t.size())) {
            throw DataError("load_checkpoint: parameter " + name + " has " +
                            std::to_string(values.size()) + " values, expected " +
                            std::to_string(t.size()));
        }
        std::copy(values.begin(), values.end(), t.value().data());
    }
    return cp;
}

} // namespace tripnet
