#include "tripnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace tripnet {

namespace {

constexpr std::int64_t kMergeGapSeconds = 600;
constexpr double kMinTripKm = 3.0;
constexpr std::int64_t kSecondsPerDay = 86400;

// 1970-01-01 is a Thursday; Monday = 0.
int weekday_of(std::int64_t epoch_seconds, int utc_offset_minutes) {
    const std::int64_t local = epoch_seconds + std::int64_t(utc_offset_minutes) * 60;
    std::int64_t days = local / kSecondsPerDay;
    if (local < 0 && local % kSecondsPerDay != 0) --days;
    return int(((days + 3) % 7 + 7) % 7);
}

std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = unsigned(y - era * 400);
    const unsigned doy = (153u * unsigned(m + (m > 2 ? -3 : 9)) + 2u) / 5u + unsigned(d) - 1u;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + std::int64_t(doe) - 719468;
}

std::int64_t parse_time(const std::string& field, int line_no) {
    bool numeric = !field.empty();
    for (std::size_t i = 0; i < field.size(); ++i) {
        const char c = field[i];
        if (!(std::isdigit(static_cast<unsigned char>(c)) || (i == 0 && c == '-'))) {
            numeric = false;
            break;
        }
    }
    if (numeric) {
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec == std::errc() && p == field.data() + field.size()) return v;
    }
    int y, mo, d, h, mi, s;
    if (std::sscanf(field.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s) == 6 ||
        std::sscanf(field.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &s) == 6) {
        return days_from_civil(y, mo, d) * kSecondsPerDay + h * 3600 + mi * 60 + s;
    }
    throw DataError("line " + std::to_string(line_no) + ": unparsable timestamp '" + field + "'");
}

void validate_record(const TripRecord& r, int line_no) {
    if (r.end_time < r.start_time) {
        throw DataError("line " + std::to_string(line_no) + ": end_time precedes start_time");
    }
    if (r.distance_km < 0.0 || !std::isfinite(r.distance_km)) {
        throw DataError("line " + std::to_string(line_no) + ": invalid distance " +
                        std::to_string(r.distance_km));
    }
}

std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

struct IndexedSample {
    SequenceSample sample;
    std::size_t target_row; // row index in the FeatureSeries
};

std::vector<IndexedSample> make_windows_indexed(const FeatureSeries& series, int window_days,
                                                int capacity) {
    if (window_days < 1) throw ConfigError("make_windows: window_days must be >= 1");
    if (capacity < 1) throw ConfigError("make_windows: capacity must be >= 1");
    std::vector<IndexedSample> out;
    const std::int64_t span = std::int64_t(window_days) * kSecondsPerDay;
    for (std::size_t j = 1; j < series.size(); ++j) {
        const std::int64_t lo = series.start_time[j] - span;
        std::size_t first = j;
        while (first > 0 && series.start_time[first - 1] >= lo) --first;
        if (first == j) continue; // no history inside the window
        std::size_t count = j - first;
        if (count > std::size_t(capacity)) { // keep the most recent L
            first = j - std::size_t(capacity);
            count = std::size_t(capacity);
        }
        SequenceSample s;
        s.features = Eigen::MatrixXd::Zero(capacity, kFeatureCount);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t r = first + i;
            s.features(Eigen::Index(i), 0) = series.delta_t[r];
            s.features(Eigen::Index(i), 1) = series.distance[r];
            s.features(Eigen::Index(i), 2 + series.weekday[r]) = 1.0;
        }
        s.valid_len = int(count);
        s.target << series.delta_t[j], series.distance[j];
        s.vehicle_id = series.vehicle_id;
        s.target_time = series.start_time[j];
        out.push_back({std::move(s), j});
    }
    return out;
}

} // namespace

std::vector<TripRecord> merge_trips(const std::vector<TripRecord>& trips) {
    std::vector<TripRecord> out;
    for (std::size_t i = 0; i < trips.size(); ++i) {
        if (i > 0) {
            if (trips[i].vehicle_id != trips[i - 1].vehicle_id) {
                throw DataError("merge_trips: records span more than one vehicle");
            }
            if (trips[i].start_time < trips[i - 1].start_time) {
                throw DataError("merge_trips: input not sorted by start_time");
            }
        }
        if (!out.empty() && trips[i].start_time - out.back().end_time <= kMergeGapSeconds) {
            out.back().end_time = std::max(out.back().end_time, trips[i].end_time);
            out.back().distance_km += trips[i].distance_km;
        } else {
            out.push_back(trips[i]);
        }
    }
    return out;
}

std::vector<TripRecord> filter_short(const std::vector<TripRecord>& trips) {
    std::vector<TripRecord> out;
    for (const auto& t : trips) {
        if (t.distance_km >= kMinTripKm) out.push_back(t);
    }
    return out;
}

FeatureSeries build_features(const std::vector<TripRecord>& trips, int utc_offset_minutes) {
    if (trips.size() < 2) {
        throw DataError("build_features: need at least 2 trips, got " +
                        std::to_string(trips.size()));
    }
    FeatureSeries fs;
    fs.vehicle_id = trips.front().vehicle_id;
    for (std::size_t j = 1; j < trips.size(); ++j) {
        const std::int64_t dt = trips[j].start_time - trips[j - 1].start_time;
        if (dt <= 0) {
            throw DataError("build_features: non-increasing start times for vehicle " +
                            fs.vehicle_id);
        }
        fs.start_time.push_back(trips[j].start_time);
        fs.delta_t.push_back(double(dt));
        fs.distance.push_back(trips[j].distance_km);
        fs.weekday.push_back(weekday_of(trips[j].start_time, utc_offset_minutes));
    }
    return fs;
}

NormStats compute_norm_stats(const std::vector<double>& delta_t,
                             const std::vector<double>& distance) {
    if (delta_t.empty() || distance.empty()) {
        throw DataError("compute_norm_stats: empty feature vectors");
    }
    NormStats s;
    auto [dt_lo, dt_hi] = std::minmax_element(delta_t.begin(), delta_t.end());
    auto [d_lo, d_hi] = std::minmax_element(distance.begin(), distance.end());
    s.dt_min = *dt_lo;
    s.dt_max = *dt_hi;
    s.d_min = *d_lo;
    s.d_max = *d_hi;
    if (s.dt_max <= s.dt_min || s.d_max <= s.d_min) {
        throw DataError("compute_norm_stats: degenerate feature (max == min)");
    }
    return s;
}

double normalize_dt(double v, const NormStats& s) { return (v - s.dt_min) / (s.dt_max - s.dt_min); }
double normalize_d(double v, const NormStats& s) { return (v - s.d_min) / (s.d_max - s.d_min); }
double denormalize_dt(double v, const NormStats& s) { return v * (s.dt_max - s.dt_min) + s.dt_min; }
double denormalize_d(double v, const NormStats& s) { return v * (s.d_max - s.d_min) + s.d_min; }

void normalize(FeatureSeries& series, const NormStats& stats) {
    for (auto& v : series.delta_t) v = normalize_dt(v, stats);
    for (auto& v : series.distance) v = normalize_d(v, stats);
}

std::vector<SequenceSample> make_windows(const FeatureSeries& series, int window_days,
                                         int capacity) {
    auto indexed = make_windows_indexed(series, window_days, capacity);
    std::vector<SequenceSample> out;
    out.reserve(indexed.size());
    for (auto& s : indexed) out.push_back(std::move(s.sample));
    return out;
}

Dataset build_dataset(const std::vector<TripRecord>& trips, const PipelineConfig& cfg) {
    auto vehicles = group_by_vehicle(trips);

    std::vector<FeatureSeries> series;
    for (auto& v : vehicles) {
        auto cleaned = filter_short(merge_trips(v));
        if (cleaned.size() < 2) continue; // vehicle has no usable history
        series.push_back(build_features(cleaned, cfg.utc_offset_minutes));
    }
    if (series.empty()) throw DataError("build_dataset: no vehicle has usable history");

    // Per-sample chronological split within each vehicle: targets in the
    // first train_frac of each series train, the next val_frac validate.
    auto split_of = [&](std::size_t row, std::size_t n) {
        const auto train_end = std::size_t(double(n) * cfg.train_frac);
        const auto val_end = std::size_t(double(n) * (cfg.train_frac + cfg.val_frac));
        if (row < train_end) return 0;
        if (row < val_end) return 1;
        return 2;
    };

    // Stats from training targets/features only.
    std::vector<double> train_dt, train_d;
    for (const auto& fs : series) {
        for (std::size_t j = 0; j < fs.size(); ++j) {
            if (split_of(j, fs.size()) == 0) {
                train_dt.push_back(fs.delta_t[j]);
                train_d.push_back(fs.distance[j]);
            }
        }
    }
    Dataset ds;
    ds.stats = compute_norm_stats(train_dt, train_d);

    int capacity = cfg.capacity;
    if (capacity == 0) {
        // 99th percentile of raw window lengths, capped at 64.
        std::vector<int> lengths;
        for (const auto& fs : series) {
            for (auto& is : make_windows_indexed(fs, cfg.window_days, 64))
                lengths.push_back(is.sample.valid_len);
        }
        if (lengths.empty()) throw DataError("build_dataset: no windows produced");
        std::sort(lengths.begin(), lengths.end());
        capacity = lengths[std::size_t(double(lengths.size() - 1) * 0.99)];
        capacity = std::clamp(capacity, 1, 64);
    }
    ds.capacity = capacity;

    for (auto& fs : series) {
        FeatureSeries norm = fs;
        normalize(norm, ds.stats);
        for (auto& is : make_windows_indexed(norm, cfg.window_days, capacity)) {
            switch (split_of(is.target_row, norm.size())) {
            case 0: ds.train.push_back(std::move(is.sample)); break;
            case 1: ds.val.push_back(std::move(is.sample)); break;
            default: ds.test.push_back(std::move(is.sample)); break;
            }
        }
    }
    return ds;
}

std::vector<TripRecord> generate_synthetic(const FleetSpec& spec, std::uint64_t seed) {
    if (spec.vehicles < 1) throw ConfigError("generate_synthetic: vehicles must be >= 1");
    if (spec.days < 1) throw ConfigError("generate_synthetic: days must be >= 1");

    // Monday 2023-01-02 00:00 UTC, so day index mod 7 is the weekday.
    constexpr std::int64_t kOrigin = 1672617600;

    std::vector<TripRecord> all;
    for (int v = 0; v < spec.vehicles; ++v) {
        std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + std::uint64_t(v) + 1);
        auto uniform = [&](double a, double b) {
            return std::uniform_real_distribution<double>(a, b)(rng);
        };
        auto gauss = [&](double sd) {
            return sd > 0.0 ? std::normal_distribution<double>(0.0, sd)(rng) : 0.0;
        };

        const bool commuter = uniform(0.0, 1.0) < spec.commute_prob;
        const double out_hour = 7.0 + uniform(0.0, 2.0);
        const double back_hour = 16.0 + uniform(0.0, 2.0);
        const double commute_km =
            std::max(3.5, std::exp(spec.distance_lognorm_mu +
                                   spec.distance_lognorm_sigma * gauss(1.0)));

        std::vector<TripRecord> trips;
        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "veh%04d", v);
        auto emit = [&](double day_offset_seconds, int day, double km, double speed_kmh) {
            TripRecord t;
            t.vehicle_id = idbuf;
            t.start_time = kOrigin + std::int64_t(day) * kSecondsPerDay +
                           std::int64_t(std::llround(day_offset_seconds));
            t.end_time = t.start_time + std::int64_t(std::llround(km / speed_kmh * 3600.0));
            t.distance_km = km;
            trips.push_back(t);
        };

        for (int day = 0; day < spec.days; ++day) {
            const int wd = day % 7;
            if (commuter && wd < 5) {
                const double jitter = spec.noise_minutes * 60.0;
                emit(out_hour * 3600.0 + gauss(jitter), day, commute_km, 40.0);
                emit(back_hour * 3600.0 + gauss(jitter), day,
                     std::max(3.0, commute_km + gauss(0.02 * spec.noise_minutes)), 40.0);
            }
            if (spec.errand_rate > 0.0) {
                const int n = std::poisson_distribution<int>(spec.errand_rate)(rng);
                for (int e = 0; e < n; ++e) {
                    const double hour = uniform(9.0, 21.0);
                    const double km = std::exp(spec.distance_lognorm_mu +
                                               spec.distance_lognorm_sigma * gauss(1.0));
                    emit(hour * 3600.0, day, km, 30.0);
                }
            }
        }
        std::sort(trips.begin(), trips.end(), [](const TripRecord& a, const TripRecord& b) {
            return a.start_time != b.start_time ? a.start_time < b.start_time
                                                : a.end_time < b.end_time;
        });
        all.insert(all.end(), trips.begin(), trips.end());
    }
    return all;
}

std::vector<TripRecord> ingest_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("ingest_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("ingest_csv: empty file " + path);
    if (line.ends_with("\r")) line.pop_back();
    if (line != "vehicle_id,start_time,end_time,distance_km") {
        throw DataError("ingest_csv: unexpected header '" + line + "'");
    }
    std::vector<TripRecord> trips;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.ends_with("\r")) line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f0, f1, f2, f3;
        if (!std::getline(ss, f0, ',') || !std::getline(ss, f1, ',') ||
            !std::getline(ss, f2, ',') || !std::getline(ss, f3)) {
            throw DataError("line " + std::to_string(line_no) + ": malformed row '" + line + "'");
        }
        TripRecord r;
        r.vehicle_id = f0;
        r.start_time = parse_time(f1, line_no);
        r.end_time = parse_time(f2, line_no);
        try {
            r.distance_km = std::stod(f3);
        } catch (const std::exception&) {
            throw DataError("line " + std::to_string(line_no) + ": bad distance '" + f3 + "'");
        }
        validate_record(r, line_no);
        trips.push_back(std::move(r));
    }
    std::stable_sort(trips.begin(), trips.end(), [](const TripRecord& a, const TripRecord& b) {
        if (a.vehicle_id != b.vehicle_id) return a.vehicle_id < b.vehicle_id;
        return a.start_time < b.start_time;
    });
    return trips;
}

void write_csv(const std::vector<TripRecord>& trips, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_csv: cannot open " + path);
    out << "vehicle_id,start_time,end_time,distance_km\n";
    for (const auto& t : trips) {
        out << t.vehicle_id << ',' << t.start_time << ',' << t.end_time << ','
            << format_double(t.distance_km) << '\n';
    }
}

std::vector<std::vector<TripRecord>> group_by_vehicle(const std::vector<TripRecord>& trips) {
    std::map<std::string, std::vector<TripRecord>> groups;
    for (const auto& t : trips) groups[t.vehicle_id].push_back(t);
    std::vector<std::vector<TripRecord>> out;
    out.reserve(groups.size());
    for (auto& [id, v] : groups) {
        std::stable_sort(v.begin(), v.end(), [](const TripRecord& a, const TripRecord& b) {
            return a.start_time < b.start_time;
        });
        out.push_back(std::move(v));
    }
    return out;
}

} // namespace tripnet
