// tripnet command-line front end: data generation/ingestion, the two training
// regimes, grid search, evaluation, prediction, and TimeSHAP explanations.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "tripnet/checkpoint.hpp"
#include "tripnet/data.hpp"
#include "tripnet/explain.hpp"
#include "tripnet/nn.hpp"
#include "tripnet/train.hpp"

namespace {

using nlohmann::json;
using namespace tripnet;

std::string out_path(const std::string& name) {
    const char* dir = std::getenv("TRIPNET_OUT_DIR");
    if (!dir || !*dir) return name;
    return std::string(dir) + "/" + name;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << text;
}

json history_json(const std::vector<EpochStats>& history) {
    json arr = json::array();
    for (const auto& es : history) {
        arr.push_back({{"epoch", es.epoch},
                       {"train_error", es.train_error},
                       {"test_error", es.test_error}});
    }
    return arr;
}

void write_curve_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::ostringstream os;
    os << "epoch,train_error,test_error\n";
    for (const auto& es : history)
        os << es.epoch << ',' << es.train_error << ',' << es.test_error << '\n';
    write_text(path, os.str());
}

json report_json(const EvalReport& r) {
    return {{"prediction_error_pct", r.prediction_error_pct},
            {"dt_error_pct", r.dt_error_pct},
            {"d_error_pct", r.d_error_pct},
            {"sample_count", r.sample_count}};
}

struct ModelFlags {
    std::string variant = "pm4";
    std::vector<int> layers{16, 24, 16};
    int attention_size = 16;
    int fc_hidden = 32;
    int window_days = 8;
    int capacity = 0;
    bool attention_top_only = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--variant", variant, "architecture: pm1|pm2|pm3|pm4");
        cmd->add_option("--layers", layers, "LSTM layer widths")->delimiter(',');
        cmd->add_option("--attention-size", attention_size, "aspect embedding size k_a");
        cmd->add_option("--fc-hidden", fc_hidden, "width of the first FC layer");
        cmd->add_option("--window-days", window_days, "history window in days (1..14)");
        cmd->add_option("--capacity", capacity, "padding capacity L (0 = auto)");
        cmd->add_flag("--attention-top-only", attention_top_only,
                      "attention sees only the top LSTM layer's states");
    }

    ModelConfig to_config(int resolved_capacity) const {
        ModelConfig c;
        c.variant = variant_from_string(variant);
        c.lstm_layer_sizes = layers;
        c.attention_size = attention_size;
        c.fc_sizes = {fc_hidden, 2};
        c.max_seq_len = resolved_capacity;
        c.attention_top_layer_only = attention_top_only;
        return c;
    }

    json to_json() const {
        return {{"variant", variant},       {"layers", layers},
                {"attention_size", attention_size}, {"fc_hidden", fc_hidden},
                {"window_days", window_days},       {"capacity", capacity},
                {"attention_top_only", attention_top_only}};
    }
};

struct TrainFlags {
    std::string loss = "mae";
    std::string optimizer = "adam";
    double lr = 0.01;
    int batch = 128;
    int epochs = 40;
    int patience = 50;
    std::uint64_t seed = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--loss", loss, "mae|mse|lhc|hl|msle|ps");
        cmd->add_option("--optimizer", optimizer, "sgd|adam|adagrad|rmsprop");
        cmd->add_option("--lr", lr, "learning rate");
        cmd->add_option("--batch", batch, "mini-batch size");
        cmd->add_option("--epochs", epochs, "maximum epochs");
        cmd->add_option("--patience", patience, "early-stop patience (validation)");
        cmd->add_option("--seed", seed, "master seed; all randomness derives from it");
    }

    TrainConfig to_config() const {
        TrainConfig t;
        t.loss_kind = loss_from_string(loss);
        t.optimizer_kind = optimizer_from_string(optimizer);
        t.learning_rate = lr;
        t.batch_size = batch;
        t.epochs = epochs;
        t.patience = patience;
        t.seed = seed;
        return t;
    }

    json to_json() const {
        return {{"loss", loss}, {"optimizer", optimizer}, {"lr", lr},   {"batch", batch},
                {"epochs", epochs}, {"patience", patience}, {"seed", seed}};
    }
};

Dataset load_dataset(const std::string& trips_path, const ModelFlags& mf) {
    PipelineConfig pc;
    pc.window_days = mf.window_days;
    pc.capacity = mf.capacity;
    return build_dataset(ingest_csv(trips_path), pc);
}

int run_training(const std::string& trips_path, const ModelFlags& mf, const TrainFlags& tf,
                 bool cross_val, int rounds, const std::string& checkpoint_path,
                 const std::string& metrics_path, const std::string& curve_path) {
    const auto t0 = std::chrono::steady_clock::now();
    Dataset ds = load_dataset(trips_path, mf);
    ModelConfig mcfg = mf.to_config(ds.capacity);
    TrainConfig tcfg = tf.to_config();

    TrainResult result;
    if (cross_val) {
        std::vector<SequenceSample> pool = ds.train;
        pool.insert(pool.end(), ds.val.begin(), ds.val.end());
        result = cross_validate_transfer(mcfg, pool, ds.test, ds.stats, tcfg, rounds);
    } else {
        result = train_fixed_split(mcfg, ds, tcfg);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json run_config = {{"command", cross_val ? "cross-val" : "train"},
                       {"trips", trips_path},
                       {"model", mf.to_json()},
                       {"train", tf.to_json()},
                       {"rounds", cross_val ? rounds : 1}};
    save_checkpoint(mcfg, result.params, checkpoint_path, run_config);

    json metrics = {{"run_config", run_config},
                    {"final", report_json(result.report)},
                    {"history", history_json(result.report.history)},
                    {"wall_clock_seconds", wall}};
    write_text(metrics_path, metrics.dump(2) + "\n");
    write_curve_csv(curve_path, result.report.history);

    std::cout << "test prediction error: " << result.report.prediction_error_pct << " %\n"
              << "checkpoint: " << checkpoint_path << "\n";
    return 0;
}

ScoreFn make_score(const Checkpoint& cp, int output_index) {
    return [&cp, output_index](const SequenceSample& s) {
        return model_forward(cp.config, cp.params, s).value()(output_index, 0);
    };
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"trip time/distance forecasting with LSTM and attention variants"};
    app.require_subcommand(1);
    app.set_config("--config")->configurable(false);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "write a deterministic synthetic fleet CSV");
    FleetSpec fleet;
    std::uint64_t gen_seed = 0;
    std::string gen_out = out_path("trips.csv");
    gen->add_option("--vehicles", fleet.vehicles, "number of vehicles");
    gen->add_option("--days", fleet.days, "days of history");
    gen->add_option("--commute-prob", fleet.commute_prob, "probability a vehicle commutes");
    gen->add_option("--noise-minutes", fleet.noise_minutes, "departure-time jitter");
    gen->add_option("--errand-rate", fleet.errand_rate, "expected errand trips per day");
    gen->add_option("--distance-lognorm-mu", fleet.distance_lognorm_mu, "errand distance mu");
    gen->add_option("--distance-lognorm-sigma", fleet.distance_lognorm_sigma,
                    "errand distance sigma");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output trips CSV");

    // ingest
    auto* ing = app.add_subcommand("ingest", "validate a trips CSV and report cleaning stats");
    std::string ing_in, ing_out;
    ing->add_option("--in", ing_in, "input trips CSV")->required();
    ing->add_option("--out", ing_out, "optional cleaned (merged+filtered) CSV");

    // train / cross-val
    auto* tr = app.add_subcommand("train", "train on a fixed 70/15/15 split");
    auto* cv = app.add_subcommand("cross-val", "10-round cross-validation transfer training");
    ModelFlags tr_model, cv_model;
    TrainFlags tr_train, cv_train;
    std::string tr_trips, cv_trips;
    std::string tr_ckpt = out_path("checkpoint.json"), cv_ckpt = out_path("checkpoint.json");
    std::string tr_metrics = out_path("metrics.json"), cv_metrics = out_path("metrics.json");
    std::string tr_curve = out_path("curve.csv"), cv_curve = out_path("curve.csv");
    int cv_rounds = 10;
    auto attach_training = [](CLI::App* cmd, ModelFlags& model, TrainFlags& train,
                              std::string& trips, std::string& ckpt, std::string& metrics,
                              std::string& curve) {
        cmd->add_option("--trips", trips, "trips CSV")->required();
        model.attach(cmd);
        train.attach(cmd);
        cmd->add_option("--checkpoint", ckpt, "checkpoint JSON output");
        cmd->add_option("--metrics", metrics, "metrics JSON output");
        cmd->add_option("--curve", curve, "per-epoch curve CSV output");
    };
    attach_training(tr, tr_model, tr_train, tr_trips, tr_ckpt, tr_metrics, tr_curve);
    attach_training(cv, cv_model, cv_train, cv_trips, cv_ckpt, cv_metrics, cv_curve);
    cv->add_option("--rounds", cv_rounds, "cross-validation rounds");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    std::string ev_ckpt, ev_trips, ev_out = out_path("eval.json");
    int ev_window = 8, ev_capacity = 0;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint JSON")->required();
    ev->add_option("--trips", ev_trips, "trips CSV")->required();
    ev->add_option("--window-days", ev_window, "history window in days");
    ev->add_option("--out", ev_out, "EvalReport JSON output");

    // predict
    auto* pr = app.add_subcommand("predict", "predict the next trip from a history CSV");
    std::string pr_ckpt, pr_history;
    int pr_window = 8;
    pr->add_option("--checkpoint", pr_ckpt, "checkpoint JSON")->required();
    pr->add_option("--history", pr_history, "one vehicle's trip history CSV")->required();
    pr->add_option("--window-days", pr_window, "history window in days");

    // explain
    auto* ex = app.add_subcommand("explain", "TimeSHAP attribution for one prediction");
    std::string ex_ckpt, ex_trips, ex_level = "event", ex_output = "distance";
    std::string ex_out = out_path("attribution.json"), ex_csv = out_path("attribution.csv");
    std::string ex_background = "mean";
    int ex_trip_index = -1, ex_window = 8, ex_max_exact = 12, ex_nsamples = 2048;
    std::uint64_t ex_seed = 0;
    ex->add_option("--checkpoint", ex_ckpt, "checkpoint JSON")->required();
    ex->add_option("--trips", ex_trips, "trips CSV")->required();
    ex->add_option("--trip-index", ex_trip_index, "test-sample index to explain")->required();
    ex->add_option("--level", ex_level, "event|feature");
    ex->add_option("--output", ex_output, "dt|distance (explained output)");
    ex->add_option("--background", ex_background, "mean|zeros masking background");
    ex->add_option("--window-days", ex_window, "history window in days");
    ex->add_option("--max-exact-m", ex_max_exact, "exact enumeration limit");
    ex->add_option("--samples", ex_nsamples, "sampled coalitions beyond the exact limit");
    ex->add_option("--seed", ex_seed, "sampling seed");
    ex->add_option("--out", ex_out, "attribution JSON output");
    ex->add_option("--csv", ex_csv, "attribution bar CSV output");

    // grid-search
    auto* gs = app.add_subcommand("grid-search", "hyperparameter sweep on 25% of training data");
    std::string gs_trips, gs_variant = "pm4", gs_out = out_path("grid.json");
    std::vector<int> gs_windows{8}, gs_batches{128};
    std::vector<double> gs_lrs{0.01};
    std::vector<std::string> gs_losses{"mae"}, gs_opts{"adam"};
    std::vector<int> gs_layers{16, 24, 16};
    int gs_attention = 16, gs_epochs = 10;
    std::size_t gs_budget = 64;
    std::uint64_t gs_seed = 0;
    gs->add_option("--trips", gs_trips, "trips CSV")->required();
    gs->add_option("--variant", gs_variant, "architecture: pm1|pm2|pm3|pm4");
    gs->add_option("--windows", gs_windows, "window sizes (days)")->delimiter(',');
    gs->add_option("--lrs", gs_lrs, "learning rates")->delimiter(',');
    gs->add_option("--losses", gs_losses, "loss kinds")->delimiter(',');
    gs->add_option("--optimizers", gs_opts, "optimizer kinds")->delimiter(',');
    gs->add_option("--batches", gs_batches, "batch sizes")->delimiter(',');
    gs->add_option("--layers", gs_layers, "LSTM layer widths")->delimiter(',');
    gs->add_option("--attention-size", gs_attention, "aspect embedding size");
    gs->add_option("--epochs", gs_epochs, "epochs per trial");
    gs->add_option("--budget", gs_budget, "maximum trials");
    gs->add_option("--seed", gs_seed, "sweep seed");
    gs->add_option("--out", gs_out, "ranked results JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    try {
        if (*gen) {
            auto trips = generate_synthetic(fleet, gen_seed);
            write_csv(trips, gen_out);
            std::cout << "wrote " << trips.size() << " trips to " << gen_out << "\n";
        } else if (*ing) {
            auto trips = ingest_csv(ing_in);
            auto vehicles = group_by_vehicle(trips);
            std::size_t kept = 0;
            std::vector<TripRecord> cleaned;
            for (auto& v : vehicles) {
                auto c = filter_short(merge_trips(v));
                kept += c.size();
                if (!ing_out.empty()) cleaned.insert(cleaned.end(), c.begin(), c.end());
            }
            std::cout << trips.size() << " trips, " << vehicles.size() << " vehicles; " << kept
                      << " trips survive merge+filter\n";
            if (!ing_out.empty()) write_csv(cleaned, ing_out);
        } else if (*tr) {
            return run_training(tr_trips, tr_model, tr_train, false, 1, tr_ckpt, tr_metrics,
                                tr_curve);
        } else if (*cv) {
            return run_training(cv_trips, cv_model, cv_train, true, cv_rounds, cv_ckpt,
                                cv_metrics, cv_curve);
        } else if (*ev) {
            Checkpoint cp = load_checkpoint(ev_ckpt);
            PipelineConfig pc;
            pc.window_days = ev_window;
            pc.capacity = cp.config.max_seq_len;
            (void)ev_capacity;
            Dataset ds = build_dataset(ingest_csv(ev_trips), pc);
            EvalReport r = evaluate(cp.config, cp.params, ds.test);
            write_text(ev_out, json{{"report", report_json(r)},
                                    {"checkpoint", ev_ckpt},
                                    {"trips", ev_trips}}
                                   .dump(2) +
                                   "\n");
            std::cout << "prediction error: " << r.prediction_error_pct << " %\n";
        } else if (*pr) {
            Checkpoint cp = load_checkpoint(pr_ckpt);
            auto vehicles = group_by_vehicle(ingest_csv(pr_history));
            if (vehicles.size() != 1)
                throw DataError("predict: history CSV must contain exactly one vehicle");
            auto cleaned = filter_short(merge_trips(vehicles[0]));
            FeatureSeries fs = build_features(cleaned);
            normalize(fs, cp.params.norm);
            // Synthesize a window ending at the last known trip.
            FeatureSeries ext = fs;
            ext.start_time.push_back(ext.start_time.back() + 1);
            ext.delta_t.push_back(0);
            ext.distance.push_back(0);
            ext.weekday.push_back(0);
            auto samples = make_windows(ext, pr_window, cp.config.max_seq_len);
            if (samples.empty()) throw DataError("predict: not enough history in the window");
            const SequenceSample& s = samples.back();
            const Eigen::MatrixXd y = model_forward(cp.config, cp.params, s).value();
            std::cout << "next trip in " << denormalize_dt(y(0, 0), cp.params.norm)
                      << " seconds, distance " << denormalize_d(y(1, 0), cp.params.norm)
                      << " km\n";
        } else if (*ex) {
            Checkpoint cp = load_checkpoint(ex_ckpt);
            PipelineConfig pc;
            pc.window_days = ex_window;
            pc.capacity = cp.config.max_seq_len;
            Dataset ds = build_dataset(ingest_csv(ex_trips), pc);
            if (ex_trip_index < 0 || std::size_t(ex_trip_index) >= ds.test.size())
                throw DataError("explain: --trip-index out of range (test set has " +
                                std::to_string(ds.test.size()) + " samples)");
            const SequenceSample& sample = ds.test[std::size_t(ex_trip_index)];
            const int output_index = ex_output == "dt" ? 0 : 1;
            Eigen::VectorXd background = ex_background == "zeros"
                                             ? Eigen::VectorXd::Zero(kFeatureCount)
                                             : mean_background(ds.train);
            TimeShapOptions opts;
            opts.max_exact_m = ex_max_exact;
            opts.n_samples = ex_nsamples;
            opts.seed = ex_seed;
            const ExplainLevel level = level_from_string(ex_level);
            Attribution attr = timeshap(make_score(cp, output_index), sample, background, level,
                                        opts);
            json weights = json::object();
            for (std::size_t i = 0; i < attr.weights.size(); ++i) {
                if (level == ExplainLevel::Event) {
                    weights[std::to_string(i)] = {
                        {"shap_value", attr.weights[i]},
                        {"delta_t_norm", sample.features(Eigen::Index(i), 0)},
                        {"distance_norm", sample.features(Eigen::Index(i), 1)}};
                } else {
                    weights[logical_feature_name(int(i))] = attr.weights[i];
                }
            }
            json doc = {{"level", ex_level},
                        {"output", ex_output},
                        {"base_score", attr.base_score},
                        {"model_score", attr.model_score},
                        {"weights", weights},
                        {"run_config",
                         {{"checkpoint", ex_ckpt}, {"trips", ex_trips},
                          {"trip_index", ex_trip_index}, {"background", ex_background},
                          {"seed", ex_seed}}}};
            write_text(ex_out, doc.dump(2) + "\n");
            std::ostringstream bars;
            bars << "unit_index,shap_value\n";
            for (std::size_t i = 0; i < attr.weights.size(); ++i)
                bars << i << ',' << attr.weights[i] << '\n';
            write_text(ex_csv, bars.str());
            std::cout << "base score " << attr.base_score << ", model score " << attr.model_score
                      << ", wrote " << ex_out << "\n";
        } else if (*gs) {
            GridSpec grid;
            grid.window_days = gs_windows;
            grid.lstm_layer_sizes = {gs_layers};
            grid.attention_sizes = {gs_attention};
            grid.batch_sizes = gs_batches;
            grid.learning_rates = gs_lrs;
            grid.optimizers.clear();
            for (const auto& s : gs_opts) grid.optimizers.push_back(optimizer_from_string(s));
            grid.losses.clear();
            for (const auto& s : gs_losses) grid.losses.push_back(loss_from_string(s));

            TrainConfig base;
            base.epochs = gs_epochs;
            PipelineConfig pc;
            GridResult res = grid_search(grid, variant_from_string(gs_variant),
                                         ingest_csv(gs_trips), pc, base, gs_budget, gs_seed);
            json trials = json::array();
            for (const auto& t : res.trials)
                trials.push_back({{"point", t.point.describe()}, {"val_error", t.val_error}});
            json var = json::object();
            for (const auto& [name, v] : res.error_variation) var[name] = v;
            write_text(gs_out, json{{"best", res.best.describe()},
                                    {"trials", trials},
                                    {"error_variation_pct", var},
                                    {"seed", gs_seed}}
                                   .dump(2) +
                                   "\n");
            std::cout << "best: " << res.best.describe() << "\n";
        }
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
