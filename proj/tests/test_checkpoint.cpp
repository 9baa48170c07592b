#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <random>
#include <string>

#include "tripnet/checkpoint.hpp"
#include "tripnet/errors.hpp"
#include "tripnet/nn.hpp"

using namespace tripnet;
using nlohmann::json;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/tripnet_test_" + name + ".json") {}
    ~TempFile() { std::remove(path.c_str()); }
};

ModelConfig small_config(Variant v) {
    ModelConfig c;
    c.variant = v;
    c.lstm_layer_sizes = {4, 6, 4};
    c.attention_size = 8;
    c.fc_sizes = {8, 2};
    c.max_seq_len = 6;
    return c;
}

SequenceSample probe_sample(std::uint64_t seed, int capacity) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    SequenceSample s;
    s.features = Eigen::MatrixXd::Zero(capacity, kFeatureCount);
    s.valid_len = capacity - 1;
    for (int r = 0; r < s.valid_len; ++r) {
        s.features(r, 0) = dist(rng);
        s.features(r, 1) = dist(rng);
        s.features(r, 2 + int(rng() % 7)) = 1.0;
    }
    s.target << 0.3, 0.7;
    return s;
}

} // namespace

TEST_CASE("checkpoint round-trips parameters bitwise for every variant") {
    for (Variant v : {Variant::PM1, Variant::PM2, Variant::PM3, Variant::PM4}) {
        ModelConfig cfg = small_config(v);
        ModelParams params = init_params(cfg, 42);
        // make the values less regular than a fresh init
        std::mt19937_64 rng(7);
        std::normal_distribution<double> noise(0.0, 0.37);
        for (Tensor t : params.all())
            for (Eigen::Index i = 0; i < t.value().size(); ++i)
                t.value().data()[i] += noise(rng);
        params.norm = NormStats{-12.5, 98765.0, 3.0, 451.25};

        TempFile f("roundtrip_" + to_string(v));
        save_checkpoint(cfg, params, f.path, json{{"note", "test"}});
        Checkpoint ck = load_checkpoint(f.path);

        CHECK(ck.config.variant == cfg.variant);
        CHECK(ck.config.lstm_layer_sizes == cfg.lstm_layer_sizes);
        CHECK(ck.config.attention_size == cfg.attention_size);
        CHECK(ck.config.fc_sizes == cfg.fc_sizes);
        CHECK(ck.config.max_seq_len == cfg.max_seq_len);

        auto a = params.all();
        auto b = ck.params.all();
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            REQUIRE(a[i].value().rows() == b[i].value().rows());
            REQUIRE(a[i].value().cols() == b[i].value().cols());
            // bitwise equality, not approximate
            CHECK(a[i].value() == b[i].value());
        }
        CHECK(ck.params.norm.dt_min == params.norm.dt_min);
        CHECK(ck.params.norm.dt_max == params.norm.dt_max);
        CHECK(ck.params.norm.d_min == params.norm.d_min);
        CHECK(ck.params.norm.d_max == params.norm.d_max);
    }
}

TEST_CASE("predictions are identical after a save/load cycle") {
    ModelConfig cfg = small_config(Variant::PM4);
    ModelParams params = init_params(cfg, 3);
    TempFile f("predict");
    save_checkpoint(cfg, params, f.path, json::object());
    Checkpoint ck = load_checkpoint(f.path);

    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        SequenceSample s = probe_sample(seed, cfg.max_seq_len);
        Eigen::MatrixXd before = model_forward(cfg, params, s).value();
        Eigen::MatrixXd after = model_forward(ck.config, ck.params, s).value();
        CHECK(before == after);
    }
}

TEST_CASE("version mismatch is rejected") {
    ModelConfig cfg = small_config(Variant::PM1);
    ModelParams params = init_params(cfg, 0);
    TempFile f("version");
    save_checkpoint(cfg, params, f.path, json::object());

    json j;
    {
        std::ifstream in(f.path);
        in >> j;
    }
    j["format_version"] = kCheckpointFormatVersion + 1;
    {
        std::ofstream out(f.path);
        out << j;
    }
    CHECK_THROWS_AS(load_checkpoint(f.path), DataError);
}

TEST_CASE("corrupted parameter length is rejected") {
    ModelConfig cfg = small_config(Variant::PM3);
    ModelParams params = init_params(cfg, 0);
    TempFile f("length");
    save_checkpoint(cfg, params, f.path, json::object());

    json j;
    {
        std::ifstream in(f.path);
        in >> j;
    }
    auto& p = j.at("params");
    auto it = p.begin();
    it.value().push_back(0.0); // one extra element
    {
        std::ofstream out(f.path);
        out << j;
    }
    CHECK_THROWS_AS(load_checkpoint(f.path), DataError);
}

TEST_CASE("missing parameter name is rejected") {
    ModelConfig cfg = small_config(Variant::PM2);
    ModelParams params = init_params(cfg, 0);
    TempFile f("name");
    save_checkpoint(cfg, params, f.path, json::object());

    json j;
    {
        std::ifstream in(f.path);
        in >> j;
    }
    auto& p = j.at("params");
    auto first = p.begin();
    json val = first.value();
    std::string key = first.key();
    p.erase(key);
    p[key + "_bogus"] = val;
    {
        std::ofstream out(f.path);
        out << j;
    }
    CHECK_THROWS_AS(load_checkpoint(f.path), DataError);
}

TEST_CASE("nonexistent file is rejected") {
    CHECK_THROWS_AS(load_checkpoint("/tmp/tripnet_definitely_missing.json"), DataError);
}

TEST_CASE("config json round-trip preserves every field") {
    ModelConfig cfg = small_config(Variant::PM3);
    cfg.attention_top_layer_only = true;
    ModelConfig back = config_from_json(config_to_json(cfg));
    CHECK(back.variant == cfg.variant);
    CHECK(back.lstm_layer_sizes == cfg.lstm_layer_sizes);
    CHECK(back.attention_size == cfg.attention_size);
    CHECK(back.fc_sizes == cfg.fc_sizes);
    CHECK(back.max_seq_len == cfg.max_seq_len);
    CHECK(back.attention_top_layer_only == cfg.attention_top_layer_only);
}
