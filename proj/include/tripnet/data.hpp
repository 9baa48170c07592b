#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "tripnet/errors.hpp"

namespace tripnet {

/// One GPS-logged trip. Times are epoch seconds (UTC).
struct TripRecord {
    std::string vehicle_id;
    std::int64_t start_time = 0;
    std::int64_t end_time = 0;
    double distance_km = 0.0;

    bool operator==(const TripRecord&) const = default;
};

/// Cleaned per-vehicle trip log turned into aligned feature vectors.
/// delta_t[j] and distance[j] describe trip j+1 of the underlying log: the
/// first trip anchors the series and has no time gap of its own.
struct FeatureSeries {
    std::string vehicle_id;
    std::vector<std::int64_t> start_time; // of trips 1..T-1
    std::vector<double> delta_t;          // seconds between consecutive trip starts
    std::vector<double> distance;         // km
    std::vector<int> weekday;             // 0 = Monday .. 6 = Sunday

    std::size_t size() const { return delta_t.size(); }
};

/// Per-feature max-min statistics, computed on the training split only.
struct NormStats {
    double dt_min = 0.0, dt_max = 1.0;
    double d_min = 0.0, d_max = 1.0;
};

constexpr int kFeatureCount = 9; // [dt, d, onehot weekday x 7]

/// One fixed-capacity training window. Rows 0..valid_len-1 hold the history
/// (oldest first), rows >= valid_len are exactly zero.
struct SequenceSample {
    Eigen::MatrixXd features; // L x 9, normalized
    int valid_len = 0;
    Eigen::Vector2d target;   // (dt_next, d_next), normalized
    std::string vehicle_id;
    std::int64_t target_time = 0;
};

// -- preprocessing ----------------------------------------------------------

/// Collapses trips separated by at most 600 s (GPS-disconnection artifact):
/// start of the first, end of the last, distances summed. Transitive and
/// idempotent. Input must be time-sorted per vehicle.
std::vector<TripRecord> merge_trips(const std::vector<TripRecord>& trips);

/// Drops trips strictly shorter than 3 km (3.0 km survives).
std::vector<TripRecord> filter_short(const std::vector<TripRecord>& trips);

/// Builds the (delta_t, distance, weekday) series for one vehicle's cleaned,
/// sorted trips. Weekday uses a fixed UTC offset in minutes (default +60,
/// Stockholm standard time). Requires at least 2 trips.
FeatureSeries build_features(const std::vector<TripRecord>& trips, int utc_offset_minutes = 60);

NormStats compute_norm_stats(const std::vector<double>& delta_t,
                             const std::vector<double>& distance);

double normalize_dt(double v, const NormStats& s);
double normalize_d(double v, const NormStats& s);
double denormalize_dt(double v, const NormStats& s);
double denormalize_d(double v, const NormStats& s);

/// Max-min normalizes a series in place. Training values land in [0,1];
/// out-of-range values (test data) are NOT clipped.
void normalize(FeatureSeries& series, const NormStats& stats);

/// For each trip with at least one prior trip inside the trailing window of
/// `window_days`, emits a sample of those prior trips (most recent L kept)
/// targeting that trip. Samples are ordered by target time.
std::vector<SequenceSample> make_windows(const FeatureSeries& series, int window_days,
                                         int capacity);

// -- dataset assembly -------------------------------------------------------

struct PipelineConfig {
    int window_days = 8;
    int capacity = 0; // 0: 99th percentile of window lengths, capped at 64
    int utc_offset_minutes = 60;
    double train_frac = 0.70;
    double val_frac = 0.15;
};

struct Dataset {
    std::vector<SequenceSample> train, val, test;
    NormStats stats;
    int capacity = 0;
};

/// Full pipeline in the fixed order merge -> filter -> features -> split ->
/// normalize -> window. The split is per-sample chronological within each
/// vehicle; normalization stats never see validation/test targets.
Dataset build_dataset(const std::vector<TripRecord>& trips, const PipelineConfig& cfg);

// -- synthetic fleet --------------------------------------------------------

struct FleetSpec {
    int vehicles = 50;
    int days = 180;
    double commute_prob = 0.9;       // probability a vehicle is a commuter
    double noise_minutes = 12.0;     // jitter on commute departure times
    double errand_rate = 0.25;       // expected errand trips per day
    double distance_lognorm_mu = 2.2;
    double distance_lognorm_sigma = 0.5;
};

/// Deterministic synthetic fleet: weekday-periodic commute pairs plus
/// Poisson-timed errands with log-normal distances. Same seed, same trips.
std::vector<TripRecord> generate_synthetic(const FleetSpec& spec, std::uint64_t seed);

// -- CSV --------------------------------------------------------------------

/// Reads `vehicle_id,start_time,end_time,distance_km`; times are epoch
/// seconds or ISO-8601. Validates records and sorts per vehicle.
std::vector<TripRecord> ingest_csv(const std::string& path);

void write_csv(const std::vector<TripRecord>& trips, const std::string& path);

/// Groups by vehicle preserving per-vehicle time order; vehicles ordered by id.
std::vector<std::vector<TripRecord>> group_by_vehicle(const std::vector<TripRecord>& trips);

} // namespace tripnet
