#include "tripnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace tripnet {

namespace {

ModelParams clone_params(ModelParams& p) {
    ModelParams out = p;
    auto deep = [](Tensor& t) { t = Tensor(t.value(), t.requires_grad()); };
    for (auto& branch : out.branches) {
        for (auto& l : branch) {
            deep(l.W_i); deep(l.W_f); deep(l.W_o); deep(l.W_c);
            deep(l.U_i); deep(l.U_f); deep(l.U_o); deep(l.U_c);
            deep(l.b_i); deep(l.b_f); deep(l.b_o); deep(l.b_c);
        }
    }
    for (auto& a : out.attention) {
        deep(a.W_h); deep(a.W_v); deep(a.v_a); deep(a.w); deep(a.W_p); deep(a.W_x);
    }
    for (auto& f : out.fc) {
        deep(f.W);
        deep(f.b);
    }
    return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27; x *= 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

LossKind loss_from_string(const std::string& s) {
    if (s == "mae" || s == "MAE") return LossKind::MAE;
    if (s == "mse" || s == "MSE") return LossKind::MSE;
    if (s == "lhc" || s == "LHC") return LossKind::LHC;
    if (s == "hl" || s == "HL" || s == "huber") return LossKind::HL;
    if (s == "msle" || s == "MSLE") return LossKind::MSLE;
    if (s == "ps" || s == "PS" || s == "poisson") return LossKind::PS;
    throw ConfigError("unknown loss '" + s + "'");
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd" || s == "SGD") return OptimizerKind::SGD;
    if (s == "adam" || s == "Adam") return OptimizerKind::Adam;
    if (s == "adagrad" || s == "Adagrad") return OptimizerKind::Adagrad;
    if (s == "rmsprop" || s == "RMSProp") return OptimizerKind::RMSProp;
    throw ConfigError("unknown optimizer '" + s + "'");
}

std::string to_string(LossKind k) {
    switch (k) {
    case LossKind::MAE: return "mae";
    case LossKind::MSE: return "mse";
    case LossKind::LHC: return "lhc";
    case LossKind::HL: return "hl";
    case LossKind::MSLE: return "msle";
    case LossKind::PS: return "ps";
    }
    return "?";
}

std::string to_string(OptimizerKind k) {
    switch (k) {
    case OptimizerKind::SGD: return "sgd";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::Adagrad: return "adagrad";
    case OptimizerKind::RMSProp: return "rmsprop";
    }
    return "?";
}

Tensor loss(const Tensor& pred, const Tensor& target, LossKind kind) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw ShapeError("loss: prediction " + std::to_string(pred.rows()) + "x" +
                         std::to_string(pred.cols()) + " vs target " +
                         std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
    }
    const Eigen::ArrayXXd p = pred.value().array();
    const Eigen::ArrayXXd t = target.value().array();
    const Eigen::ArrayXXd e = p - t;
    const double n = double(p.size());

    double value = 0.0;
    Eigen::ArrayXXd dpred(p.rows(), p.cols());
    switch (kind) {
    case LossKind::MAE:
        value = e.abs().mean();
        dpred = e.sign() / n;
        break;
    case LossKind::MSE:
        value = e.square().mean();
        dpred = 2.0 * e / n;
        break;
    case LossKind::LHC:
        value = e.cosh().log().mean();
        dpred = e.tanh() / n;
        break;
    case LossKind::HL: { // delta = 1
        const Eigen::ArrayXXd quad = (e.abs() <= 1.0).cast<double>();
        value = (quad * 0.5 * e.square() + (1.0 - quad) * (e.abs() - 0.5)).mean();
        dpred = (quad * e + (1.0 - quad) * e.sign()) / n;
        break;
    }
    case LossKind::MSLE: {
        if ((p <= -1.0).any() || (t <= -1.0).any())
            throw NumericError("loss msle: values must exceed -1");
        const Eigen::ArrayXXd le = (1.0 + p).log() - (1.0 + t).log();
        value = le.square().mean();
        dpred = 2.0 * le / (1.0 + p) / n;
        break;
    }
    case LossKind::PS:
        if ((p <= 0.0).any()) throw NumericError("loss ps: predictions must be positive");
        value = (p - t * p.log()).mean();
        dpred = (1.0 - t / p) / n;
        break;
    }
    if (!std::isfinite(value)) throw NumericError("loss " + to_string(kind) + ": non-finite");

    Eigen::MatrixXd grad_pred = dpred.matrix();
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = value;
    return record_op({pred, target}, std::move(v),
                     [pred, grad_pred](const Eigen::MatrixXd& g, Tape& tape) {
                         if (pred.requires_grad()) tape.accumulate(pred, g(0, 0) * grad_pred);
                     });
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate) {
    if (learning_rate < 0.0) throw ConfigError("optimizer: negative learning rate");
}

void Optimizer::step(std::vector<Tensor>& params, const std::vector<Eigen::MatrixXd>& grads) {
    if (params.size() != grads.size())
        throw ContractError("optimizer: params/grads length mismatch");
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
            v_.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
        }
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8, rho = 0.9;
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Eigen::MatrixXd& g = grads[i];
        if (!g.allFinite()) throw NumericError("optimizer: non-finite gradient");
        Eigen::MatrixXd& theta = params[i].value();
        switch (kind_) {
        case OptimizerKind::SGD:
            theta -= lr_ * g;
            break;
        case OptimizerKind::Adam: {
            m_[i] = b1 * m_[i] + (1.0 - b1) * g;
            v_[i] = b2 * v_[i].array().matrix() + (1.0 - b2) * g.cwiseProduct(g);
            const Eigen::ArrayXXd mhat = m_[i].array() / (1.0 - std::pow(b1, double(t_)));
            const Eigen::ArrayXXd vhat = v_[i].array() / (1.0 - std::pow(b2, double(t_)));
            theta.array() -= lr_ * mhat / (vhat.sqrt() + eps);
            break;
        }
        case OptimizerKind::Adagrad:
            v_[i] += g.cwiseProduct(g);
            theta.array() -= lr_ * g.array() / (v_[i].array().sqrt() + eps);
            break;
        case OptimizerKind::RMSProp:
            v_[i] = rho * v_[i] + (1.0 - rho) * g.cwiseProduct(g);
            theta.array() -= lr_ * g.array() / (v_[i].array().sqrt() + eps);
            break;
        }
    }
}

double prediction_error(const std::vector<double>& preds, const std::vector<double>& labels) {
    if (preds.size() != labels.size() || preds.empty())
        throw ContractError("prediction_error: length mismatch or empty input");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        num += (labels[i] - preds[i]) * (labels[i] - preds[i]);
        den += labels[i] * labels[i];
    }
    if (den == 0.0) throw NumericError("prediction_error: all-zero labels, metric undefined");
    return 100.0 * std::sqrt(num / den);
}

void TrainConfig::validate() const {
    if (learning_rate <= 0.0 || learning_rate > 0.1)
        throw ConfigError("learning_rate must be in (0, 0.1]");
    if (batch_size < 16 || batch_size > 512) throw ConfigError("batch_size must be in [16, 512]");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
}

std::vector<Eigen::Vector2d> predict_all(const ModelConfig& config, const ModelParams& params,
                                         const std::vector<SequenceSample>& samples) {
    std::vector<Eigen::Vector2d> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        const Eigen::MatrixXd y = model_forward(config, params, s).value();
        out.emplace_back(denormalize_dt(y(0, 0), params.norm), denormalize_d(y(1, 0), params.norm));
    }
    return out;
}

EvalReport evaluate(const ModelConfig& config, const ModelParams& params,
                    const std::vector<SequenceSample>& samples) {
    if (samples.empty()) throw ConfigError("evaluate: empty sample set");
    const auto preds = predict_all(config, params, samples);
    std::vector<double> p_all, l_all, p_dt, l_dt, p_d, l_d;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double lt = denormalize_dt(samples[i].target(0), params.norm);
        const double ld = denormalize_d(samples[i].target(1), params.norm);
        p_all.push_back(preds[i](0)); l_all.push_back(lt);
        p_all.push_back(preds[i](1)); l_all.push_back(ld);
        p_dt.push_back(preds[i](0)); l_dt.push_back(lt);
        p_d.push_back(preds[i](1)); l_d.push_back(ld);
    }
    EvalReport r;
    r.prediction_error_pct = prediction_error(p_all, l_all);
    r.dt_error_pct = prediction_error(p_dt, l_dt);
    r.d_error_pct = prediction_error(p_d, l_d);
    r.sample_count = samples.size();
    return r;
}

double persistence_error(const std::vector<SequenceSample>& samples, const NormStats& stats) {
    std::vector<double> preds, labels;
    for (const auto& s : samples) {
        const int last = s.valid_len - 1;
        preds.push_back(denormalize_dt(s.features(last, 0), stats));
        labels.push_back(denormalize_dt(s.target(0), stats));
        preds.push_back(denormalize_d(s.features(last, 1), stats));
        labels.push_back(denormalize_d(s.target(1), stats));
    }
    return prediction_error(preds, labels);
}

namespace {

/// Mini-batch training of `params` in place. Early-stops on validation
/// error; `params` is left at the best-validation checkpoint.
EvalReport train_loop(const ModelConfig& mcfg, ModelParams& params,
                      const std::vector<SequenceSample>& train,
                      const std::vector<SequenceSample>& val,
                      const std::vector<SequenceSample>& test, const TrainConfig& tcfg,
                      Optimizer& opt, std::mt19937_64& rng) {
    if (train.empty() || val.empty()) throw ConfigError("train: empty train or validation split");

    std::vector<Tensor> flat = params.all();
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    EvalReport report;
    double best_val = std::numeric_limits<double>::infinity();
    ModelParams best = clone_params(params);
    int since_best = 0;

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += std::size_t(tcfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + std::size_t(tcfg.batch_size));
            std::vector<Eigen::MatrixXd> grads;
            for (const auto& p : flat) grads.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
            for (std::size_t i = start; i < end; ++i) {
                const SequenceSample& s = train[order[i]];
                Tape tape;
                Tensor pred = model_forward(mcfg, params, s);
                Tensor target(Eigen::MatrixXd(s.target));
                Tensor l = loss(pred, target, tcfg.loss_kind);
                tape.backward(l);
                for (std::size_t pi = 0; pi < flat.size(); ++pi)
                    grads[pi] += tape.grad(flat[pi]);
            }
            const double inv = 1.0 / double(end - start);
            for (auto& g : grads) g *= inv;
            opt.step(flat, grads);
        }

        const double val_err = evaluate(mcfg, params, val).prediction_error_pct;
        if (tcfg.record_history) {
            EpochStats es;
            es.epoch = epoch;
            es.train_error = evaluate(mcfg, params, train).prediction_error_pct;
            es.test_error =
                test.empty() ? val_err : evaluate(mcfg, params, test).prediction_error_pct;
            report.history.push_back(es);
        }
        if (val_err < best_val) {
            best_val = val_err;
            best = clone_params(params);
            since_best = 0;
        } else if (++since_best >= tcfg.patience) {
            break;
        }
    }
    params = best;
    return report;
}

} // namespace

TrainResult train_fixed_split(const ModelConfig& mcfg, const Dataset& data,
                              const TrainConfig& tcfg) {
    mcfg.validate();
    tcfg.validate();
    TrainResult res;
    res.params = init_params(mcfg, tcfg.seed);
    res.params.norm = data.stats;

    Optimizer opt(tcfg.optimizer_kind, tcfg.learning_rate);
    std::mt19937_64 rng(mix_seed(tcfg.seed, 1));
    EvalReport hist = train_loop(mcfg, res.params, data.train, data.val, data.test, tcfg, opt, rng);

    res.report = data.test.empty() ? evaluate(mcfg, res.params, data.val)
                                   : evaluate(mcfg, res.params, data.test);
    res.report.history = std::move(hist.history);
    return res;
}

TrainResult cross_validate_transfer(const ModelConfig& mcfg,
                                    const std::vector<SequenceSample>& pool,
                                    const std::vector<SequenceSample>& test_set,
                                    const NormStats& stats, const TrainConfig& tcfg,
                                    int rounds) {
    mcfg.validate();
    tcfg.validate();
    if (rounds < 1) throw ConfigError("cross_validate_transfer: rounds must be >= 1");

    // Leakage guard: pool and test must be disjoint.
    std::set<std::pair<std::string, std::int64_t>> test_keys;
    for (const auto& s : test_set) test_keys.emplace(s.vehicle_id, s.target_time);
    for (const auto& s : pool) {
        if (test_keys.count({s.vehicle_id, s.target_time}))
            throw DataError("cross_validate_transfer: pool overlaps the test set");
    }

    TrainResult res;
    res.params = init_params(mcfg, tcfg.seed);
    res.params.norm = stats;

    EvalReport hist;
    for (int round = 0; round < rounds; ++round) {
        std::mt19937_64 rng(mix_seed(tcfg.seed, 100 + std::uint64_t(round)));
        std::vector<std::size_t> idx(pool.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n_train = std::size_t(double(pool.size()) * 0.75);
        const auto n_val = std::size_t(double(pool.size()) * 0.15);
        if (n_train == 0 || n_val == 0)
            throw ConfigError("cross_validate_transfer: pool too small");
        std::vector<SequenceSample> train, val;
        for (std::size_t i = 0; i < n_train; ++i) train.push_back(pool[idx[i]]);
        for (std::size_t i = n_train; i < n_train + n_val; ++i) val.push_back(pool[idx[i]]);
        // remaining 10% unused this round

        Optimizer opt(tcfg.optimizer_kind, tcfg.learning_rate);
        EvalReport r = train_loop(mcfg, res.params, train, val, test_set, tcfg, opt, rng);
        for (auto& es : r.history) {
            es.epoch = int(hist.history.size());
            hist.history.push_back(es);
        }
    }
    res.report = evaluate(mcfg, res.params, test_set);
    res.report.history = std::move(hist.history);
    return res;
}

std::size_t GridSpec::point_count() const {
    return window_days.size() * lstm_layer_sizes.size() * attention_sizes.size() *
           batch_sizes.size() * learning_rates.size() * optimizers.size() * losses.size();
}

std::string GridPoint::describe() const {
    std::ostringstream os;
    os << "window=" << window_days << " layers=";
    for (std::size_t i = 0; i < lstm_layer_sizes.size(); ++i)
        os << (i ? "," : "") << lstm_layer_sizes[i];
    os << " ka=" << attention_size << " batch=" << batch_size << " lr=" << learning_rate
       << " opt=" << to_string(optimizer) << " loss=" << to_string(loss);
    return os.str();
}

GridResult grid_search(const GridSpec& grid, Variant variant,
                       const std::vector<TripRecord>& trips, const PipelineConfig& pcfg,
                       const TrainConfig& base, std::size_t budget, std::uint64_t seed) {
    if (budget < 1) throw ConfigError("grid_search: budget must be >= 1");
    std::vector<GridPoint> points;
    for (int w : grid.window_days)
        for (const auto& ls : grid.lstm_layer_sizes)
            for (int ka : grid.attention_sizes)
                for (int bs : grid.batch_sizes)
                    for (double lr : grid.learning_rates)
                        for (auto opt : grid.optimizers)
                            for (auto lk : grid.losses)
                                points.push_back({w, ls, ka, bs, lr, opt, lk});
    if (points.empty()) throw ConfigError("grid_search: empty grid");
    if (points.size() > budget) {
        std::mt19937_64 rng(mix_seed(seed, 7));
        std::shuffle(points.begin(), points.end(), rng);
        points.resize(budget);
    }

    // Datasets per window size, tuned on a seeded 25% subsample of train.
    std::unordered_map<int, Dataset> by_window;
    auto dataset_for = [&](int window) -> const Dataset& {
        auto it = by_window.find(window);
        if (it != by_window.end()) return it->second;
        PipelineConfig pc = pcfg;
        pc.window_days = window;
        Dataset ds = build_dataset(trips, pc);
        std::mt19937_64 rng(mix_seed(seed, std::uint64_t(window)));
        std::shuffle(ds.train.begin(), ds.train.end(), rng);
        ds.train.resize(std::max<std::size_t>(1, ds.train.size() / 4));
        return by_window.emplace(window, std::move(ds)).first->second;
    };

    GridResult result;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const GridPoint& pt = points[i];
        ModelConfig mcfg;
        mcfg.variant = variant;
        mcfg.lstm_layer_sizes = pt.lstm_layer_sizes;
        mcfg.attention_size = pt.attention_size;
        const Dataset& ds = dataset_for(pt.window_days);
        mcfg.max_seq_len = ds.capacity;

        TrainConfig tc = base;
        tc.loss_kind = pt.loss;
        tc.optimizer_kind = pt.optimizer;
        tc.learning_rate = pt.learning_rate;
        tc.batch_size = pt.batch_size;
        tc.seed = mix_seed(seed, 1000 + i);
        tc.record_history = false;

        TrainResult tr = train_fixed_split(mcfg, ds, tc);
        const double val_err = evaluate(mcfg, tr.params, ds.val).prediction_error_pct;
        result.trials.push_back({pt, val_err});
    }
    std::sort(result.trials.begin(), result.trials.end(),
              [](const GridTrial& a, const GridTrial& b) {
                  if (a.val_error != b.val_error) return a.val_error < b.val_error;
                  return a.point.describe() < b.point.describe();
              });
    result.best = result.trials.front().point;

    // Per-hyperparameter error variation, as a percentage of the overall mean.
    double overall = 0.0;
    for (const auto& t : result.trials) overall += t.val_error;
    overall /= double(result.trials.size());
    auto variation = [&](auto key) {
        std::unordered_map<std::string, std::pair<double, int>> groups;
        for (const auto& t : result.trials) {
            auto& g = groups[key(t.point)];
            g.first += t.val_error;
            g.second += 1;
        }
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (auto& [k, g] : groups) {
            const double mean = g.first / g.second;
            lo = std::min(lo, mean);
            hi = std::max(hi, mean);
        }
        return overall > 0.0 ? 100.0 * (hi - lo) / overall : 0.0;
    };
    result.error_variation = {
        {"window_days", variation([](const GridPoint& p) { return std::to_string(p.window_days); })},
        {"lstm_layer_sizes", variation([](const GridPoint& p) {
             std::string s;
             for (int v : p.lstm_layer_sizes) s += std::to_string(v) + ",";
             return s;
         })},
        {"attention_size",
         variation([](const GridPoint& p) { return std::to_string(p.attention_size); })},
        {"batch_size", variation([](const GridPoint& p) { return std::to_string(p.batch_size); })},
        {"learning_rate",
         variation([](const GridPoint& p) { return std::to_string(p.learning_rate); })},
        {"optimizer", variation([](const GridPoint& p) { return to_string(p.optimizer); })},
        {"loss", variation([](const GridPoint& p) { return to_string(p.loss); })},
    };
    return result;
}

} // namespace tripnet
