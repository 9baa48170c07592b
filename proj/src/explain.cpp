#include "tripnet/explain.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <random>

namespace tripnet {

namespace {

double log_binomial(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

void apply_background_row(SequenceSample& s, int row, const Eigen::VectorXd& background) {
    s.features.row(row) = background.transpose();
}

// Column ranges of the logical features within the 9-wide layout.
constexpr int kFeatureStart[kLogicalFeatureCount] = {0, 1, 2};
constexpr int kFeatureWidth[kLogicalFeatureCount] = {1, 1, 7};

} // namespace

ExplainLevel level_from_string(const std::string& s) {
    if (s == "event" || s == "trip") return ExplainLevel::Event;
    if (s == "feature") return ExplainLevel::Feature;
    throw ConfigError("unknown explanation level '" + s + "'");
}

std::string to_string(ExplainLevel level) {
    return level == ExplainLevel::Event ? "event" : "feature";
}

std::string logical_feature_name(int i) {
    switch (i) {
    case 0: return "delta_t";
    case 1: return "distance";
    case 2: return "weekday";
    }
    throw ContractError("logical_feature_name: index out of range");
}

int unit_count(const SequenceSample& X, ExplainLevel level) {
    return level == ExplainLevel::Event ? X.valid_len : kLogicalFeatureCount;
}

SequenceSample perturb(const SequenceSample& X, const Coalition& z,
                       const Eigen::VectorXd& background, ExplainLevel level) {
    const int m = unit_count(X, level);
    if (int(z.size()) != m) {
        throw ContractError("perturb: coalition length " + std::to_string(z.size()) +
                            " does not match " + std::to_string(m) + " units");
    }
    if (background.size() != kFeatureCount) {
        throw ContractError("perturb: background must have " + std::to_string(kFeatureCount) +
                            " entries");
    }
    SequenceSample out = X;
    if (level == ExplainLevel::Event) {
        for (int i = 0; i < m; ++i) {
            if (z[i] == 0) apply_background_row(out, i, background);
        }
    } else {
        for (int fi = 0; fi < m; ++fi) {
            if (z[fi] != 0) continue;
            for (int row = 0; row < X.valid_len; ++row) {
                for (int c = 0; c < kFeatureWidth[fi]; ++c) {
                    out.features(row, kFeatureStart[fi] + c) =
                        background(kFeatureStart[fi] + c);
                }
            }
        }
    }
    return out;
}

Eigen::VectorXd mean_background(const std::vector<SequenceSample>& train) {
    if (train.empty()) throw DataError("mean_background: no training samples");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(kFeatureCount);
    double rows = 0.0;
    for (const auto& s : train) {
        for (int r = 0; r < s.valid_len; ++r) {
            sum += s.features.row(r).transpose();
            rows += 1.0;
        }
    }
    return sum / rows;
}

double shapley_kernel_weight(int m, int s) {
    if (s <= 0 || s >= m) {
        throw ContractError("shapley_kernel_weight: s must be in (0, m); endpoints are "
                            "equality constraints");
    }
    return double(m - 1) / (std::exp(log_binomial(m, s)) * double(s) * double(m - s));
}

Attribution timeshap(const ScoreFn& score, const SequenceSample& X,
                     const Eigen::VectorXd& background, ExplainLevel level,
                     const TimeShapOptions& opts) {
    const int m = unit_count(X, level);
    if (m < 1) throw ContractError("timeshap: sample exposes no units");

    auto eval = [&](const Coalition& z) { return score(perturb(X, z, background, level)); };
    const double f0 = eval(Coalition(std::size_t(m), 0));
    const double f1 = eval(Coalition(std::size_t(m), 1));

    Attribution attr;
    attr.base_score = f0;
    attr.model_score = f1;
    attr.level = level;
    if (m == 1) {
        attr.weights = {f1 - f0}; // efficiency pins the single weight
        return attr;
    }

    // Weighted normal equations over interior coalitions.
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(m);
    auto accumulate = [&](const Coalition& z, double weight) {
        Eigen::VectorXd zv(m);
        for (int i = 0; i < m; ++i) zv(i) = double(z[i]);
        A += weight * zv * zv.transpose();
        c += weight * zv * (eval(z) - f0);
    };

    if (m <= opts.max_exact_m) {
        for (std::uint64_t bits = 1; bits + 1 < (1ULL << m); ++bits) {
            Coalition z(std::size_t(m), 0);
            int s = 0;
            for (int i = 0; i < m; ++i) {
                if (bits & (1ULL << i)) {
                    z[std::size_t(i)] = 1;
                    ++s;
                }
            }
            accumulate(z, shapley_kernel_weight(m, s));
        }
    } else {
        std::mt19937_64 rng(opts.seed);
        // Sample coalition sizes proportionally to the kernel mass per size.
        std::vector<double> size_mass;
        for (int s = 1; s < m; ++s)
            size_mass.push_back(shapley_kernel_weight(m, s) * std::exp(log_binomial(m, s)));
        std::discrete_distribution<int> size_dist(size_mass.begin(), size_mass.end());
        std::vector<int> perm(static_cast<std::size_t>(m));
        std::iota(perm.begin(), perm.end(), 0);
        for (int draw = 0; draw < (opts.n_samples + 1) / 2; ++draw) {
            const int s = 1 + size_dist(rng);
            std::shuffle(perm.begin(), perm.end(), rng);
            Coalition z(std::size_t(m), 0);
            for (int i = 0; i < s; ++i) z[std::size_t(perm[std::size_t(i)])] = 1;
            Coalition zc(std::size_t(m), 1);
            for (int i = 0; i < m; ++i) zc[std::size_t(i)] = 1 - z[std::size_t(i)];
            accumulate(z, 1.0);
            accumulate(zc, 1.0); // paired complement, same implicit weight
        }
    }

    // Minimize (w^T A w - 2 c^T w) subject to sum(w) = f1 - f0 (efficiency).
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + 1, m + 1);
    kkt.topLeftCorner(m, m) = A;
    kkt.block(0, m, m, 1).setOnes();
    kkt.block(m, 0, 1, m).setOnes();
    Eigen::VectorXd rhs(m + 1);
    rhs.head(m) = c;
    rhs(m) = f1 - f0;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) {
        throw NumericError("timeshap: singular kernel regression system (degenerate "
                           "explanation)");
    }
    const Eigen::VectorXd sol = lu.solve(rhs);
    attr.weights.assign(sol.data(), sol.data() + m);
    return attr;
}

std::vector<double> brute_force_shapley(const ScoreFn& score, const SequenceSample& X,
                                        const Eigen::VectorXd& background, ExplainLevel level) {
    const int m = unit_count(X, level);
    if (m > 16) {
        throw ContractError("brute_force_shapley: m = " + std::to_string(m) +
                            " exceeds the 2^m cost guard (16)");
    }
    // Memoize all 2^m coalition scores.
    std::vector<double> f(std::size_t(1) << m);
    for (std::uint64_t bits = 0; bits < f.size(); ++bits) {
        Coalition z(std::size_t(m), 0);
        for (int i = 0; i < m; ++i)
            if (bits & (1ULL << i)) z[std::size_t(i)] = 1;
        f[bits] = score(perturb(X, z, background, level));
    }
    std::vector<double> w(std::size_t(m), 0.0);
    for (int i = 0; i < m; ++i) {
        for (std::uint64_t bits = 0; bits < f.size(); ++bits) {
            if (bits & (1ULL << i)) continue;
            const int s = int(__builtin_popcountll(bits));
            const double coeff = std::exp(std::lgamma(s + 1.0) + std::lgamma(m - s + 0.0) -
                                          std::lgamma(m + 1.0));
            w[std::size_t(i)] += coeff * (f[bits | (1ULL << i)] - f[bits]);
        }
    }
    return w;
}

} // namespace tripnet
