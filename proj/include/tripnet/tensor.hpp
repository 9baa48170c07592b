#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "tripnet/errors.hpp"

namespace tripnet {

class Tape;

/// Dense 2-D tensor of doubles with shared-value semantics. Vectors are
/// column vectors (n x 1). A Tensor participates in reverse-mode
/// differentiation when requires_grad is set and a Tape is active.
class Tensor {
public:
    Tensor() : Tensor(Eigen::MatrixXd(0, 0), false) {}
    explicit Tensor(Eigen::MatrixXd value, bool requires_grad = false);

    static Tensor zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    Eigen::Index rows() const { return impl_->value.rows(); }
    Eigen::Index cols() const { return impl_->value.cols(); }
    Eigen::Index size() const { return impl_->value.size(); }

    const Eigen::MatrixXd& value() const { return impl_->value; }
    /// Mutable access; only meaningful outside a recorded region
    /// (optimizer updates, numeric perturbation).
    Eigen::MatrixXd& value() { return impl_->value; }

    bool requires_grad() const { return impl_->requires_grad; }
    std::uint64_t id() const { return impl_->id; }

    bool is_scalar() const { return size() == 1; }
    double scalar_value() const;

private:
    struct Impl {
        Eigen::MatrixXd value;
        bool requires_grad;
        std::uint64_t id;
    };
    std::shared_ptr<Impl> impl_;
};

/// Records operations for one reverse pass. Constructing a Tape makes it the
/// active tape for the current thread; destruction restores the previous one.
/// A Tape and the tensors flowing through it form one single-writer unit.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    /// Reverse pass from a scalar loss. Accumulators are zeroed first, so
    /// repeated calls do not mix passes.
    void backward(const Tensor& loss);

    /// Gradient of the last backward() target w.r.t. t (zeros if t never
    /// received a contribution).
    Eigen::MatrixXd grad(const Tensor& t) const;

    void accumulate(const Tensor& t, const Eigen::MatrixXd& g);
    const Eigen::MatrixXd* find_grad(std::uint64_t id) const;

    std::size_t node_count() const { return nodes_.size(); }

    /// Records a custom operation. `pull` receives the upstream gradient of
    /// the output and must accumulate into the inputs via tape.accumulate().
    /// Recording happens only when a tape is active and some input requires
    /// grad; the returned tensor then requires grad itself.
    friend Tensor record_op(const std::vector<Tensor>& inputs, Eigen::MatrixXd value,
                            std::function<void(const Eigen::MatrixXd&, Tape&)> pull);

private:
    struct Node {
        std::uint64_t out_id;
        std::function<void(const Eigen::MatrixXd&, Tape&)> pull;
    };
    std::vector<Node> nodes_;
    std::unordered_map<std::uint64_t, Eigen::MatrixXd> grads_;
    Tape* prev_ = nullptr;
};

Tensor record_op(const std::vector<Tensor>& inputs, Eigen::MatrixXd value,
                 std::function<void(const Eigen::MatrixXd&, Tape&)> pull);

// Arithmetic. Elementwise ops require equal shapes; scalar overloads
// broadcast a constant. No other broadcasting.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor mul(const Tensor& a, double s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return mul(a, s); }

// Activations.
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);

/// Concatenation along axis 0 (rows) or 1 (cols); argument order is part of
/// the checkpoint contract.
Tensor concat(const std::vector<Tensor>& ts, int axis);

Tensor transpose(const Tensor& a);

/// Repeats a column vector n times side by side -> (k x n).
Tensor tile_cols(const Tensor& v, Eigen::Index n);

/// Zero-pads columns on the right up to capacity L.
Tensor pad_cols(const Tensor& a, Eigen::Index capacity);

/// Sum of all entries -> 1x1 scalar tensor.
Tensor sum(const Tensor& a);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0; // kinks and below-noise-floor coordinates
};

/// Central-difference gradient check of a scalar-valued function of `params`.
/// Relative error per coordinate is |analytic - numeric| /
/// max(1e-8, |analytic| + |numeric|). Coordinates where forward and backward
/// one-sided differences disagree (kinks, e.g. relu at 0), or where both
/// slopes sit below the finite-difference noise floor, are skipped and
/// counted in `skipped`.
GradCheckResult grad_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                           double step = 1e-5);

} // namespace tripnet
