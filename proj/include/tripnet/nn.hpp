#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tripnet/data.hpp"
#include "tripnet/tensor.hpp"

namespace tripnet {

enum class Variant { PM1, PM2, PM3, PM4 };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

/// One LSTM layer: gate weights W (hidden x input), recurrent weights U
/// (hidden x hidden), biases b (hidden).
struct LstmLayerParams {
    Tensor W_i, W_f, W_o, W_c;
    Tensor U_i, U_f, U_o, U_c;
    Tensor b_i, b_f, b_o, b_c;

    Eigen::Index hidden() const { return b_i.rows(); }
    Eigen::Index input() const { return W_i.cols(); }
};

/// Attention head over a k x n hidden matrix with a learnable aspect
/// embedding v_a of size k_a.
struct AttentionParams {
    Tensor W_h; // k x k
    Tensor W_v; // k_a x k_a
    Tensor v_a; // k_a
    Tensor w;   // k + k_a (scoring vector)
    Tensor W_p; // k x k
    Tensor W_x; // k x k
};

struct ModelConfig {
    Variant variant = Variant::PM4;
    std::vector<int> lstm_layer_sizes{16, 24, 16};
    int attention_size = 16; // k_a, PM3/PM4 only
    std::vector<int> fc_sizes{32, 2}; // last entry is the output width (2)
    int max_seq_len = 16; // L, the padding capacity
    bool attention_top_layer_only = false; // default: all layers' states stacked

    int branch_count() const;
    bool has_attention() const;
    /// Per-step input width of branch b (joint layout for PM1/PM3, split
    /// (dt|d)+weekday for PM2/PM4).
    int branch_input_size(int b) const;
    /// Rows of the hidden matrix fed to attention.
    int attention_state_size() const;
    /// Width of the concatenated vector entering the first FC layer.
    int fc_input_size() const;
    void validate() const;
};

struct FcLayer {
    Tensor W, b;
};

struct ModelParams {
    std::vector<std::vector<LstmLayerParams>> branches; // [branch][layer]
    std::vector<AttentionParams> attention;             // one per branch (PM3/PM4)
    std::vector<FcLayer> fc;
    NormStats norm; // captured at training time

    std::vector<Tensor> all();
    /// Canonical (name, tensor) pairs; names are the checkpoint contract:
    /// branch<i>.layer<j>.{W_i,...,b_c}, branch<i>.attention.{W_h,W_v,v_a,w,W_p,W_x},
    /// fc<i>.{W,b}.
    std::vector<std::pair<std::string, Tensor>> named();
    std::size_t count() const;
};

/// Glorot-uniform weights, zero biases except forget-gate bias = 1.
/// Deterministic for a fixed seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// One LSTM cell step (gates i, f, o, candidate g; c' = f.c + i.g,
/// h' = o.tanh(c')).
std::pair<Tensor, Tensor> lstm_cell_forward(const Tensor& x, const Tensor& h_prev,
                                            const Tensor& c_prev, const LstmLayerParams& p);

struct StackOutput {
    std::vector<Tensor> hidden; // per layer: k_l x n_valid, valid steps only
    std::vector<Tensor> last_h; // per layer: k_l
};

/// Runs the stacked layers over the valid prefix of a step sequence
/// (each column of `steps` is one time step's input). Padded steps are never
/// visited, so they cannot influence the state.
StackOutput lstm_stack_forward(const Tensor& steps, int valid_len,
                               const std::vector<LstmLayerParams>& layers);

struct Embedded {
    Tensor padded;        // k x L, invalid columns zero
    Eigen::VectorXd mask; // L, 1 for valid columns
};

/// Length-equalizing projection: copies the n valid columns into a k x L
/// matrix and reports the validity mask.
Embedded project_embed(const Tensor& H, int capacity);

struct AttentionOutput {
    Tensor alpha;  // 1 x L, masked positions forced to 0
    Tensor r;      // k (context)
    Tensor h_star; // k
};

/// M = tanh([W_h H ; W_v v_a (x) e_n]), alpha = sigmoid(w^T M) (sigmoid, not
/// softmax, so alpha need not sum to 1), r = H alpha^T,
/// h* = tanh(W_p r + W_x h_last).
AttentionOutput attention_forward(const Tensor& H, const Eigen::VectorXd& mask,
                                  const AttentionParams& p, const Tensor& h_last);

/// Full variant forward; returns the (dt_next, d_next) prediction in
/// normalized space (2 x 1). PM1/PM2 heads are linear, PM3/PM4 use
/// relu + sigmoid.
Tensor model_forward(const ModelConfig& config, const ModelParams& params,
                     const SequenceSample& sample);

} // namespace tripnet
