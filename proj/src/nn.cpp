#include "tripnet/nn.hpp"

#include <cmath>
#include <random>

namespace tripnet {

namespace {

Tensor glorot(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Eigen::Index fan_out,
              std::mt19937_64& rng) {
    const double lim = std::sqrt(6.0 / double(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-lim, lim);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
    return Tensor(std::move(m), true);
}

LstmLayerParams init_lstm_layer(int input, int hidden, std::mt19937_64& rng) {
    LstmLayerParams p;
    auto w = [&] { return glorot(hidden, input, input, hidden, rng); };
    auto u = [&] { return glorot(hidden, hidden, hidden, hidden, rng); };
    p.W_i = w(); p.W_f = w(); p.W_o = w(); p.W_c = w();
    p.U_i = u(); p.U_f = u(); p.U_o = u(); p.U_c = u();
    p.b_i = Tensor::zeros(hidden, 1, true);
    p.b_f = Tensor(Eigen::MatrixXd::Ones(hidden, 1), true); // forget-gate bias trick
    p.b_o = Tensor::zeros(hidden, 1, true);
    p.b_c = Tensor::zeros(hidden, 1, true);
    return p;
}

AttentionParams init_attention(int k, int k_a, std::mt19937_64& rng) {
    AttentionParams p;
    p.W_h = glorot(k, k, k, k, rng);
    p.W_v = glorot(k_a, k_a, k_a, k_a, rng);
    p.v_a = glorot(k_a, 1, k_a, k_a, rng);
    p.w = glorot(k + k_a, 1, k + k_a, 1, rng);
    p.W_p = glorot(k, k, k, k, rng);
    p.W_x = glorot(k, k, k, k, rng);
    return p;
}

/// Per-branch step inputs as an (input_size x valid_len) constant tensor.
Tensor branch_steps(const ModelConfig& config, int branch, const SequenceSample& sample) {
    const int n = sample.valid_len;
    const int in = config.branch_input_size(branch);
    Eigen::MatrixXd steps(in, n);
    const bool joint = config.branch_count() == 1;
    for (int t = 0; t < n; ++t) {
        int r = 0;
        if (joint) {
            steps(r++, t) = sample.features(t, 0);
            steps(r++, t) = sample.features(t, 1);
        } else {
            steps(r++, t) = sample.features(t, branch == 0 ? 0 : 1);
        }
        for (int w = 0; w < 7; ++w) steps(r++, t) = sample.features(t, 2 + w);
    }
    return Tensor(std::move(steps));
}

Tensor stacked_state(const ModelConfig& config, const std::vector<Tensor>& per_layer) {
    if (config.attention_top_layer_only) return per_layer.back();
    return concat(per_layer, 0);
}

Tensor fc_head(const ModelConfig& config, const ModelParams& params, Tensor x) {
    const bool gated = config.has_attention(); // attention variants use a relu + sigmoid head
    for (std::size_t i = 0; i < params.fc.size(); ++i) {
        x = add(matmul(params.fc[i].W, x), params.fc[i].b);
        if (gated) x = i + 1 < params.fc.size() ? relu(x) : sigmoid(x);
    }
    return x;
}

} // namespace

Variant variant_from_string(const std::string& s) {
    if (s == "pm1" || s == "PM1") return Variant::PM1;
    if (s == "pm2" || s == "PM2") return Variant::PM2;
    if (s == "pm3" || s == "PM3") return Variant::PM3;
    if (s == "pm4" || s == "PM4") return Variant::PM4;
    throw ConfigError("unknown variant '" + s + "'");
}

std::string to_string(Variant v) {
    switch (v) {
    case Variant::PM1: return "pm1";
    case Variant::PM2: return "pm2";
    case Variant::PM3: return "pm3";
    case Variant::PM4: return "pm4";
    }
    return "?";
}

int ModelConfig::branch_count() const {
    return variant == Variant::PM2 || variant == Variant::PM4 ? 2 : 1;
}

bool ModelConfig::has_attention() const {
    return variant == Variant::PM3 || variant == Variant::PM4;
}

int ModelConfig::branch_input_size(int) const {
    // joint: dt + d + one-hot weekday; split: (dt|d) + one-hot weekday
    return branch_count() == 1 ? 2 + 7 : 1 + 7;
}

int ModelConfig::attention_state_size() const {
    if (attention_top_layer_only) return lstm_layer_sizes.back();
    int k = 0;
    for (int s : lstm_layer_sizes) k += s;
    return k;
}

int ModelConfig::fc_input_size() const {
    switch (variant) {
    case Variant::PM1: return lstm_layer_sizes.back();
    case Variant::PM2: return 2 * lstm_layer_sizes.back();
    case Variant::PM3: return 2 * attention_state_size(); // h* + last state
    case Variant::PM4: return 4 * attention_state_size(); // h*1, h*2, last1, last2
    }
    return 0;
}

void ModelConfig::validate() const {
    if (lstm_layer_sizes.empty() || lstm_layer_sizes.size() > 5)
        throw ConfigError("lstm_layer_sizes must have 1..5 entries");
    for (int s : lstm_layer_sizes)
        if (s < 1) throw ConfigError("lstm layer size must be positive");
    if (fc_sizes.empty() || fc_sizes.size() > 3)
        throw ConfigError("fc_sizes must have 1..3 entries");
    if (fc_sizes.back() != 2) throw ConfigError("last fc size must be 2 (dt, d outputs)");
    if (has_attention() && attention_size < 1)
        throw ConfigError("attention_size must be positive for PM3/PM4");
    if (max_seq_len < 1) throw ConfigError("max_seq_len must be positive");
}

std::vector<Tensor> ModelParams::all() {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t b = 0; b < branches.size(); ++b) {
        const std::string bp = "branch" + std::to_string(b) + ".";
        for (std::size_t l = 0; l < branches[b].size(); ++l) {
            const std::string lp = bp + "layer" + std::to_string(l) + ".";
            auto& p = branches[b][l];
            out.emplace_back(lp + "W_i", p.W_i);
            out.emplace_back(lp + "W_f", p.W_f);
            out.emplace_back(lp + "W_o", p.W_o);
            out.emplace_back(lp + "W_c", p.W_c);
            out.emplace_back(lp + "U_i", p.U_i);
            out.emplace_back(lp + "U_f", p.U_f);
            out.emplace_back(lp + "U_o", p.U_o);
            out.emplace_back(lp + "U_c", p.U_c);
            out.emplace_back(lp + "b_i", p.b_i);
            out.emplace_back(lp + "b_f", p.b_f);
            out.emplace_back(lp + "b_o", p.b_o);
            out.emplace_back(lp + "b_c", p.b_c);
        }
        if (b < attention.size()) {
            const std::string ap = bp + "attention.";
            auto& a = attention[b];
            out.emplace_back(ap + "W_h", a.W_h);
            out.emplace_back(ap + "W_v", a.W_v);
            out.emplace_back(ap + "v_a", a.v_a);
            out.emplace_back(ap + "w", a.w);
            out.emplace_back(ap + "W_p", a.W_p);
            out.emplace_back(ap + "W_x", a.W_x);
        }
    }
    for (std::size_t i = 0; i < fc.size(); ++i) {
        const std::string fp = "fc" + std::to_string(i) + ".";
        out.emplace_back(fp + "W", fc[i].W);
        out.emplace_back(fp + "b", fc[i].b);
    }
    return out;
}

std::size_t ModelParams::count() const {
    std::size_t n = 0;
    for (auto& [name, t] : const_cast<ModelParams*>(this)->named()) n += std::size_t(t.size());
    return n;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed ^ 0xa5a5a5a55a5a5a5aULL);

    ModelParams params;
    for (int b = 0; b < config.branch_count(); ++b) {
        std::vector<LstmLayerParams> layers;
        int in = config.branch_input_size(b);
        for (int s : config.lstm_layer_sizes) {
            layers.push_back(init_lstm_layer(in, s, rng));
            in = s;
        }
        params.branches.push_back(std::move(layers));
    }
    if (config.has_attention()) {
        for (int b = 0; b < config.branch_count(); ++b)
            params.attention.push_back(
                init_attention(config.attention_state_size(), config.attention_size, rng));
    }
    int in = config.fc_input_size();
    for (int s : config.fc_sizes) {
        FcLayer layer;
        layer.W = glorot(s, in, in, s, rng);
        layer.b = Tensor::zeros(s, 1, true);
        params.fc.push_back(std::move(layer));
        in = s;
    }
    return params;
}

std::pair<Tensor, Tensor> lstm_cell_forward(const Tensor& x, const Tensor& h_prev,
                                            const Tensor& c_prev, const LstmLayerParams& p) {
    auto gate = [&](const Tensor& W, const Tensor& U, const Tensor& b) {
        return add(add(matmul(W, x), matmul(U, h_prev)), b);
    };
    Tensor i = sigmoid(gate(p.W_i, p.U_i, p.b_i));
    Tensor f = sigmoid(gate(p.W_f, p.U_f, p.b_f));
    Tensor o = sigmoid(gate(p.W_o, p.U_o, p.b_o));
    Tensor g = tanh(gate(p.W_c, p.U_c, p.b_c));
    Tensor c = add(mul(f, c_prev), mul(i, g));
    Tensor h = mul(o, tanh(c));
    return {h, c};
}

StackOutput lstm_stack_forward(const Tensor& steps, int valid_len,
                               const std::vector<LstmLayerParams>& layers) {
    if (valid_len < 1) throw DataError("lstm_stack_forward: zero valid steps");
    if (steps.cols() < valid_len) {
        throw ShapeError("lstm_stack_forward: " + std::to_string(steps.cols()) +
                         " step columns < valid_len " + std::to_string(valid_len));
    }
    StackOutput out;
    std::vector<Tensor> h(layers.size()), c(layers.size());
    std::vector<std::vector<Tensor>> cols(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        h[l] = Tensor::zeros(layers[l].hidden(), 1);
        c[l] = Tensor::zeros(layers[l].hidden(), 1);
    }
    for (int t = 0; t < valid_len; ++t) {
        Tensor x(Eigen::MatrixXd(steps.value().col(t)));
        for (std::size_t l = 0; l < layers.size(); ++l) {
            auto [hn, cn] = lstm_cell_forward(x, h[l], c[l], layers[l]);
            h[l] = hn;
            c[l] = cn;
            cols[l].push_back(hn);
            x = hn; // state goes to next layer
        }
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        out.hidden.push_back(concat(cols[l], 1));
        out.last_h.push_back(h[l]);
    }
    return out;
}

Embedded project_embed(const Tensor& H, int capacity) {
    if (H.cols() > capacity) {
        throw ShapeError("project_embed: " + std::to_string(H.cols()) +
                         " valid columns exceed capacity " + std::to_string(capacity));
    }
    Embedded e;
    e.padded = pad_cols(H, capacity);
    e.mask = Eigen::VectorXd::Zero(capacity);
    e.mask.head(H.cols()).setOnes();
    return e;
}

AttentionOutput attention_forward(const Tensor& H, const Eigen::VectorXd& mask,
                                  const AttentionParams& p, const Tensor& h_last) {
    const Eigen::Index n = H.cols();
    if (mask.size() != n) {
        throw ShapeError("attention_forward: mask length " + std::to_string(mask.size()) +
                         " vs " + std::to_string(n) + " columns");
    }
    Tensor M = tanh(concat({matmul(p.W_h, H), tile_cols(matmul(p.W_v, p.v_a), n)}, 0));
    Tensor scores = sigmoid(matmul(transpose(p.w), M)); // 1 x n
    Tensor mask_row(Eigen::MatrixXd(mask.transpose()));
    AttentionOutput out;
    out.alpha = mul(scores, mask_row); // masked positions forced to 0
    out.r = matmul(H, transpose(out.alpha));
    out.h_star = tanh(add(matmul(p.W_p, out.r), matmul(p.W_x, h_last)));
    return out;
}

Tensor model_forward(const ModelConfig& config, const ModelParams& params,
                     const SequenceSample& sample) {
    config.validate();
    if (int(params.branches.size()) != config.branch_count() ||
        (config.has_attention() && params.attention.size() != params.branches.size()) ||
        params.fc.size() != config.fc_sizes.size()) {
        throw ConfigError("model_forward: params do not match config variant " +
                          to_string(config.variant));
    }
    if (sample.valid_len < 1 || sample.valid_len > int(sample.features.rows())) {
        throw DataError("model_forward: invalid valid_len " + std::to_string(sample.valid_len));
    }

    std::vector<Tensor> pieces;
    std::vector<Tensor> lasts;
    for (int b = 0; b < config.branch_count(); ++b) {
        StackOutput so =
            lstm_stack_forward(branch_steps(config, b, sample), sample.valid_len,
                               params.branches[std::size_t(b)]);
        Tensor last = config.has_attention() ? stacked_state(config, so.last_h)
                                             : so.last_h.back();
        if (config.has_attention()) {
            Tensor H = config.attention_top_layer_only ? so.hidden.back()
                                                       : concat(so.hidden, 0);
            Embedded e = project_embed(H, config.max_seq_len);
            AttentionOutput at =
                attention_forward(e.padded, e.mask, params.attention[std::size_t(b)], last);
            pieces.push_back(at.h_star);
        }
        lasts.push_back(last);
    }
    pieces.insert(pieces.end(), lasts.begin(), lasts.end());
    Tensor joined = pieces.size() == 1 ? pieces[0] : concat(pieces, 0);
    return fc_head(config, params, joined);
}

} // namespace tripnet
