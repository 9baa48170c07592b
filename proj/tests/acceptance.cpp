// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier than the unit tests; budget is dominated by criterion 3
// (the full synthetic benchmark).

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tripnet/checkpoint.hpp"
#include "tripnet/data.hpp"
#include "tripnet/explain.hpp"
#include "tripnet/nn.hpp"
#include "tripnet/tensor.hpp"
#include "tripnet/train.hpp"

using namespace tripnet;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<SequenceSample> subsample(std::vector<SequenceSample> v, std::size_t max_n,
                                      std::uint64_t seed) {
    if (v.size() <= max_n) return v;
    std::mt19937_64 rng(seed);
    std::shuffle(v.begin(), v.end(), rng);
    v.resize(max_n);
    return v;
}

ModelConfig small_config(Variant v) {
    ModelConfig c;
    c.variant = v;
    c.lstm_layer_sizes = {4, 6, 4};
    c.attention_size = 8;
    c.fc_sizes = {8, 2};
    c.max_seq_len = 6;
    return c;
}

SequenceSample random_sample(int valid_len, int capacity, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.05, 0.95);
    SequenceSample s;
    s.features = Eigen::MatrixXd::Zero(capacity, kFeatureCount);
    for (int r = 0; r < valid_len; ++r) {
        s.features(r, 0) = dist(rng);
        s.features(r, 1) = dist(rng);
        s.features(r, 2 + int(rng() % 7)) = 1.0;
    }
    s.valid_len = valid_len;
    s.target << dist(rng), dist(rng);
    return s;
}

// ---------------------------------------------------------------------------
// 1. Gradient suite: every variant, small dims, 3 seeds, <60 s.
bool criterion1(std::string& note) {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (Variant v : {Variant::PM1, Variant::PM2, Variant::PM3, Variant::PM4}) {
        ModelConfig c = small_config(v);
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            ModelParams mp = init_params(c, seed);
            SequenceSample s = random_sample(4, c.max_seq_len, 1000 + seed);
            std::vector<Tensor> params = mp.all();
            auto res = grad_check([&] { return sum(model_forward(c, mp, s)); }, params);
            worst = std::max(worst, res.max_rel_error);
            if (res.checked == 0) {
                note = "no coordinates checked for " + to_string(v);
                return false;
            }
        }
    }
    const double elapsed = seconds_since(t0);
    std::ostringstream os;
    os << "max rel err " << worst << ", " << elapsed << " s";
    note = os.str();
    return worst <= 1e-4 && elapsed < 60.0;
}

// ---------------------------------------------------------------------------
// 2. Shapley oracle equivalence + efficiency, 20 random games with m <= 10.
bool criterion2(std::string& note) {
    std::mt19937_64 rng(2);
    double worst_gap = 0.0, worst_eff = 0.0;
    for (int game = 0; game < 20; ++game) {
        const int m = 2 + int(rng() % 9); // 2..10 units
        SequenceSample X = random_sample(m, m + 1, 2000 + std::uint64_t(game));
        Eigen::VectorXd bg = Eigen::VectorXd::Constant(kFeatureCount, 0.2);
        std::uniform_real_distribution<double> coef(-1.0, 1.0);
        const double c1 = coef(rng), c2 = coef(rng), c3 = coef(rng);
        auto score = [c1, c2, c3](const SequenceSample& s) {
            double a = 0.0, b = 0.0;
            for (int r = 0; r < s.valid_len; ++r) {
                a += s.features(r, 0);
                b += s.features(r, 1);
            }
            return c1 * a + c2 * b + c3 * std::tanh(a * b);
        };
        auto oracle = brute_force_shapley(score, X, bg, ExplainLevel::Event);
        Attribution attr = timeshap(score, X, bg, ExplainLevel::Event);
        if (attr.weights.size() != oracle.size()) {
            note = "size mismatch";
            return false;
        }
        double total = attr.base_score;
        for (std::size_t i = 0; i < oracle.size(); ++i) {
            worst_gap = std::max(worst_gap, std::abs(attr.weights[i] - oracle[i]));
            total += attr.weights[i];
        }
        worst_eff = std::max(worst_eff, std::abs(total - attr.model_score));
    }
    std::ostringstream os;
    os << "max oracle gap " << worst_gap << ", max efficiency gap " << worst_eff;
    note = os.str();
    return worst_gap <= 1e-6 && worst_eff <= 1e-8;
}

// ---------------------------------------------------------------------------
// 3 & 4. Synthetic benchmark: method ordering and cross-val direction.
struct BenchmarkOutcome {
    double errs[4] = {0, 0, 0, 0}; // PM1..PM4
    double persistence = 0.0;
    double pm4_crossval = 0.0;
    double seconds = 0.0;
};

ModelConfig bench_config(Variant v) {
    ModelConfig c;
    c.variant = v;
    c.lstm_layer_sizes = {12, 16, 12};
    c.attention_size = 12;
    c.fc_sizes = {16, 2};
    return c;
}

BenchmarkOutcome run_benchmark() {
    const auto t0 = Clock::now();
    FleetSpec spec; // 50 vehicles, 180 days
    auto trips = generate_synthetic(spec, 0);
    PipelineConfig pcfg;
    Dataset data = build_dataset(trips, pcfg);

    // Budget: a seeded subsample keeps each variant's training under ~2 min.
    Dataset small = data;
    small.train = subsample(data.train, 2500, 11);
    small.val = subsample(data.val, 600, 12);

    TrainConfig tcfg;
    tcfg.loss_kind = LossKind::MAE;
    tcfg.optimizer_kind = OptimizerKind::Adam;
    tcfg.learning_rate = 0.01;
    tcfg.batch_size = 128;
    tcfg.epochs = 8;
    tcfg.seed = 0;

    BenchmarkOutcome out;
    const Variant variants[] = {Variant::PM1, Variant::PM2, Variant::PM3, Variant::PM4};
    for (int i = 0; i < 4; ++i) {
        ModelConfig mcfg = bench_config(variants[i]);
        mcfg.max_seq_len = data.capacity;
        TrainResult r = train_fixed_split(mcfg, small, tcfg);
        EvalReport rep = evaluate(mcfg, r.params, data.test);
        out.errs[i] = rep.prediction_error_pct;
        std::cout << "    " << to_string(variants[i]) << " fixed-split error "
                  << rep.prediction_error_pct << " %" << std::endl;
    }
    out.persistence = persistence_error(data.test, data.stats);
    std::cout << "    persistence error " << out.persistence << " %" << std::endl;

    // Cross-validation transfer for PM4 on the same benchmark.
    std::vector<SequenceSample> pool = small.train;
    pool.insert(pool.end(), small.val.begin(), small.val.end());
    TrainConfig cv = tcfg;
    cv.epochs = 2; // per round; 10 rounds carry weights forward
    ModelConfig mcfg = bench_config(Variant::PM4);
    mcfg.max_seq_len = data.capacity;
    TrainResult r = cross_validate_transfer(mcfg, pool, data.test, data.stats, cv, 10);
    out.pm4_crossval = r.report.prediction_error_pct;
    std::cout << "    PM4 cross-val error " << out.pm4_crossval << " %" << std::endl;

    out.seconds = seconds_since(t0);
    return out;
}

bool criterion3(const BenchmarkOutcome& b, std::string& note) {
    std::ostringstream os;
    os << "PM1 " << b.errs[0] << ", PM2 " << b.errs[1] << ", PM3 " << b.errs[2] << ", PM4 "
       << b.errs[3] << ", persistence " << b.persistence << " (%), " << b.seconds << " s";
    note = os.str();
    bool ok = b.errs[3] < b.errs[0];
    for (double e : b.errs) ok = ok && e < b.persistence;
    ok = ok && b.seconds <= 15.0 * 60.0;
    // Regression bounds pinned from the first measurement on this generator
    // (PM1 72.8, PM2 69.6, PM3 68.7, PM4 52.9, persistence 118.7 %).
    for (double e : b.errs) ok = ok && e > 40.0 && e < 90.0;
    ok = ok && b.persistence > 100.0 && b.persistence < 140.0;
    return ok;
}

bool criterion4(const BenchmarkOutcome& b, std::string& note) {
    std::ostringstream os;
    os << "PM4 cross-val " << b.pm4_crossval << " % vs fixed " << b.errs[3] << " %";
    note = os.str();
    return b.pm4_crossval <= b.errs[3];
}

// ---------------------------------------------------------------------------
// 5. Metric identities, exact to 1e-12.
bool criterion5(std::string& note) {
    std::vector<double> x{3.0, -4.0, 5.5, 0.25};
    if (prediction_error(x, x) != 0.0) {
        note = "pe(X,X) != 0";
        return false;
    }
    std::vector<double> zero(x.size(), 0.0);
    if (std::abs(prediction_error(zero, x) - 100.0) > 1e-12) {
        note = "pe(0,X) != 100";
        return false;
    }
    std::vector<double> xs = x, ps{2.9, -4.2, 5.0, 0.5}, pss = ps;
    for (auto& v : xs) v *= 1234.5;
    for (auto& v : pss) v *= 1234.5;
    const double gap = std::abs(prediction_error(ps, x) - prediction_error(pss, xs));
    std::ostringstream os;
    os << "scale-invariance gap " << gap;
    note = os.str();
    return gap <= 1e-12;
}

// ---------------------------------------------------------------------------
// 6. Preprocessing properties, incl. the O(n^2) windowing oracle.
std::vector<SequenceSample> brute_windows(const FeatureSeries& s, int window_days, int capacity) {
    // Quadratic reference: for each target index, scan all earlier rows for
    // membership in the window.
    std::vector<SequenceSample> out;
    const auto n = static_cast<int>(s.start_time.size());
    const std::int64_t span = std::int64_t(window_days) * 86400;
    for (int t = 0; t < n; ++t) {
        std::vector<int> rows;
        for (int j = 0; j < t; ++j)
            if (s.start_time[std::size_t(j)] >= s.start_time[std::size_t(t)] - span) rows.push_back(j);
        if (rows.empty()) continue;
        if (static_cast<int>(rows.size()) > capacity)
            rows.erase(rows.begin(), rows.end() - capacity);
        SequenceSample w;
        w.features = Eigen::MatrixXd::Zero(capacity, kFeatureCount);
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto j = std::size_t(rows[k]);
            w.features(Eigen::Index(k), 0) = s.delta_t[j];
            w.features(Eigen::Index(k), 1) = s.distance[j];
            w.features(Eigen::Index(k), 2 + s.weekday[j]) = 1.0;
        }
        w.valid_len = static_cast<int>(rows.size());
        w.target << s.delta_t[std::size_t(t)], s.distance[std::size_t(t)];
        w.vehicle_id = s.vehicle_id;
        w.target_time = s.start_time[std::size_t(t)];
        out.push_back(std::move(w));
    }
    return out;
}

bool criterion6(std::string& note) {
    FleetSpec spec;
    spec.vehicles = 8;
    spec.days = 150; // ~1,000+ trips total for the windowing oracle
    auto trips = generate_synthetic(spec, 6);

    for (const auto& vehicle : group_by_vehicle(trips)) {
        auto merged = merge_trips(vehicle);
        for (std::size_t i = 1; i < merged.size(); ++i)
            if (merged[i].start_time - merged[i - 1].end_time <= 600) {
                note = "post-merge gap <= 600 s";
                return false;
            }
        if (merge_trips(merged) != merged) {
            note = "merge not idempotent";
            return false;
        }
        auto kept = filter_short(merged);
        for (const auto& t : kept)
            if (t.distance_km < 3.0) {
                note = "post-filter distance < 3 km";
                return false;
            }
        if (kept.size() < 2) continue;
        FeatureSeries series = build_features(kept);
        for (int window : {3, 8}) {
            auto fast = make_windows(series, window, 16);
            auto slow = brute_windows(series, window, 16);
            if (fast.size() != slow.size()) {
                note = "window count mismatch";
                return false;
            }
            for (std::size_t i = 0; i < fast.size(); ++i)
                if (fast[i].features != slow[i].features || fast[i].valid_len != slow[i].valid_len ||
                    fast[i].target != slow[i].target) {
                    note = "window content mismatch";
                    return false;
                }
        }
    }
    note = "merge/filter/windowing all consistent";
    return true;
}

// ---------------------------------------------------------------------------
// 7. Masking invariance: padded cells never reach any variant's output.
bool criterion7(std::string& note) {
    for (Variant v : {Variant::PM1, Variant::PM2, Variant::PM3, Variant::PM4}) {
        ModelConfig c = small_config(v);
        ModelParams mp = init_params(c, 5);
        SequenceSample s = random_sample(3, c.max_seq_len, 7);
        Eigen::MatrixXd base = model_forward(c, mp, s).value();
        SequenceSample mutated = s;
        mutated.features.bottomRows(c.max_seq_len - s.valid_len).setConstant(123.456);
        Eigen::MatrixXd after = model_forward(c, mp, mutated).value();
        if (base != after) {
            note = "padding leaked into " + to_string(v);
            return false;
        }
    }
    note = "all variants invariant to padded cells";
    return true;
}

// ---------------------------------------------------------------------------
// 8. Determinism: history, checkpoint bytes, attributions.
std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

bool criterion8(std::string& note) {
    FleetSpec spec;
    spec.vehicles = 6;
    spec.days = 90;
    auto trips = generate_synthetic(spec, 3);
    PipelineConfig pcfg;
    pcfg.window_days = 5;
    pcfg.capacity = 8;
    Dataset data = build_dataset(trips, pcfg);

    ModelConfig mcfg = small_config(Variant::PM4);
    mcfg.lstm_layer_sizes = {4, 4, 4};
    mcfg.max_seq_len = data.capacity;
    TrainConfig tcfg;
    tcfg.epochs = 3;
    tcfg.batch_size = 32;
    tcfg.seed = 9;

    TrainResult a = train_fixed_split(mcfg, data, tcfg);
    TrainResult b = train_fixed_split(mcfg, data, tcfg);

    if (a.report.history.size() != b.report.history.size()) {
        note = "history length differs";
        return false;
    }
    for (std::size_t i = 0; i < a.report.history.size(); ++i)
        if (a.report.history[i].train_error != b.report.history[i].train_error ||
            a.report.history[i].test_error != b.report.history[i].test_error) {
            note = "history values differ";
            return false;
        }

    const std::string pa = "/tmp/tripnet_acc_a.json", pb = "/tmp/tripnet_acc_b.json";
    save_checkpoint(mcfg, a.params, pa, nlohmann::json::object());
    save_checkpoint(mcfg, b.params, pb, nlohmann::json::object());
    const bool same_bytes = slurp(pa) == slurp(pb);
    std::remove(pa.c_str());
    std::remove(pb.c_str());
    if (!same_bytes) {
        note = "checkpoint bytes differ";
        return false;
    }

    Eigen::VectorXd bg = mean_background(data.train);
    auto score = [&](const SequenceSample& s) { return model_forward(mcfg, a.params, s).value()(0, 0); };
    Attribution x = timeshap(score, data.test.front(), bg, ExplainLevel::Event);
    Attribution y = timeshap(score, data.test.front(), bg, ExplainLevel::Event);
    if (x.weights != y.weights || x.base_score != y.base_score || x.model_score != y.model_score) {
        note = "attributions differ";
        return false;
    }
    note = "training history, checkpoint bytes, attributions identical";
    return true;
}

// ---------------------------------------------------------------------------
// 9. Grid search over the reduced reference subgrid.
bool criterion9(std::string& note) {
    FleetSpec spec;
    spec.vehicles = 8;
    spec.days = 90;
    auto trips = generate_synthetic(spec, 1);

    GridSpec grid;
    grid.window_days = {3, 5, 8};
    grid.learning_rates = {0.001, 0.01};
    grid.losses = {LossKind::MAE, LossKind::MSE};
    grid.lstm_layer_sizes = {{4, 4, 4}};
    grid.attention_sizes = {4};
    grid.batch_sizes = {32};
    grid.optimizers = {OptimizerKind::Adam};

    PipelineConfig pcfg;
    pcfg.capacity = 8;
    TrainConfig base;
    base.epochs = 2;
    base.batch_size = 32;

    const auto t0 = Clock::now();
    GridResult r1 = grid_search(grid, Variant::PM2, trips, pcfg, base, 12, 17);
    GridResult r2 = grid_search(grid, Variant::PM2, trips, pcfg, base, 12, 17);
    const double elapsed = seconds_since(t0);

    if (r1.trials.size() != grid.point_count()) {
        note = "not all 12 points evaluated";
        return false;
    }
    for (std::size_t i = 0; i < r1.trials.size(); ++i)
        if (r1.trials[i].point.describe() != r2.trials[i].point.describe() ||
            r1.trials[i].val_error != r2.trials[i].val_error) {
            note = "ranking not deterministic";
            return false;
        }
    for (std::size_t i = 1; i < r1.trials.size(); ++i)
        if (r1.trials[i - 1].val_error > r1.trials[i].val_error) {
            note = "trials not sorted best-first";
            return false;
        }
    bool has_reference_best = false;
    for (const auto& t : r1.trials)
        has_reference_best = has_reference_best ||
                         (t.point.window_days == 8 && t.point.learning_rate == 0.01 &&
                          t.point.loss == LossKind::MAE && t.point.optimizer == OptimizerKind::Adam &&
                          std::isfinite(t.val_error));
    if (!has_reference_best) {
        note = "reference best point missing or invalid";
        return false;
    }
    std::ostringstream os;
    os << "12 points, deterministic ranking, " << elapsed << " s";
    note = os.str();
    return true;
}

} // namespace

int main() {
    int failures = 0;
    auto report = [&](int n, const char* title, bool ok, const std::string& note) {
        std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << n << " (" << title << ")";
        if (!note.empty()) std::cout << ": " << note;
        std::cout << std::endl;
        if (!ok) ++failures;
    };
    auto guard = [&](int n, const char* title, auto&& fn) {
        std::string note;
        bool ok = false;
        try {
            ok = fn(note);
        } catch (const std::exception& e) {
            note = std::string("exception: ") + e.what();
        }
        report(n, title, ok, note);
    };

    guard(1, "gradient suite", [](std::string& n) { return criterion1(n); });
    guard(2, "Shapley oracle equivalence", [](std::string& n) { return criterion2(n); });

    BenchmarkOutcome bench;
    bool bench_ok = false;
    std::string bench_err;
    try {
        std::cout << "  running synthetic benchmark (criteria 3-4)..." << std::endl;
        bench = run_benchmark();
        bench_ok = true;
    } catch (const std::exception& e) {
        bench_err = std::string("exception: ") + e.what();
    }
    if (bench_ok) {
        guard(3, "method ordering", [&](std::string& n) { return criterion3(bench, n); });
        guard(4, "cross-val direction", [&](std::string& n) { return criterion4(bench, n); });
    } else {
        report(3, "method ordering", false, bench_err);
        report(4, "cross-val direction", false, bench_err);
    }

    guard(5, "metric identities", [](std::string& n) { return criterion5(n); });
    guard(6, "preprocessing properties", [](std::string& n) { return criterion6(n); });
    guard(7, "masking invariance", [](std::string& n) { return criterion7(n); });
    guard(8, "determinism", [](std::string& n) { return criterion8(n); });
    guard(9, "grid search subgrid", [](std::string& n) { return criterion9(n); });

    std::cout << (failures == 0 ? "ACCEPTANCE: all criteria passed"
                                : "ACCEPTANCE: " + std::to_string(failures) + " criteria failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
