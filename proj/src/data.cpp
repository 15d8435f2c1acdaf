#include "stms/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "stms/embedding.hpp"

namespace stms {

namespace {

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_cells(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
    throw std::invalid_argument("csv parse error at line " +
                                std::to_string(line_no) + ": " + what);
}

}  // namespace

std::string WindowSplits::report() const {
    std::ostringstream os;
    os << "train: " << train_frames << " frames -> " << train.size()
       << " windows; val: " << val_frames << " frames -> " << val.size()
       << " windows; test: " << test_frames << " frames -> " << test.size()
       << " windows";
    return os.str();
}

Tensor Scaler::transform(const Tensor& x) const {
    const std::size_t N = mean.dim(0), d = mean.dim(1);
    if (x.rank() < 2 || x.dim(x.rank() - 2) != N || x.dim(x.rank() - 1) != d)
        throw std::invalid_argument("scaler: trailing dims must be (" +
                                    std::to_string(N) + "," +
                                    std::to_string(d) + "), got " +
                                    shape_str(x.shape()));
    Tensor out = x.clone();
    double* o = out.mut();
    const std::size_t inner = N * d;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t j = i % inner;
        o[i] = (o[i] - mean[j]) / std[j];
    }
    return out;
}

Tensor Scaler::inverse_transform(const Tensor& z) const {
    const std::size_t N = mean.dim(0), d = mean.dim(1);
    if (z.rank() < 2 || z.dim(z.rank() - 2) != N || z.dim(z.rank() - 1) != d)
        throw std::invalid_argument("scaler: trailing dims must be (" +
                                    std::to_string(N) + "," +
                                    std::to_string(d) + "), got " +
                                    shape_str(z.shape()));
    Tensor out = z.clone();
    double* o = out.mut();
    const std::size_t inner = N * d;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t j = i % inner;
        o[i] = o[i] * std[j] + mean[j];
    }
    return out;
}

TrafficDataset load_csv(const std::string& path, std::size_t steps_per_day,
                        std::size_t start_weekday) {
    if (steps_per_day == 0) throw std::invalid_argument("load_csv: steps_per_day must be >= 1");
    if (start_weekday > 6) throw std::invalid_argument("load_csv: start_weekday must be 0..6");
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_csv: cannot open " + path);

    std::string line;
    if (!std::getline(is, line)) parse_fail(1, "missing header row");
    const std::vector<std::string> ids = split_cells(line);
    const std::size_t N = ids.size();
    if (N == 0 || (N == 1 && ids[0].empty())) parse_fail(1, "empty header");

    // raw[t*N + n], NaN marks a missing cell
    std::vector<double> raw;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() && is.eof()) break;
        const std::vector<std::string> cells = split_cells(line);
        if (cells.size() != N)
            parse_fail(line_no, "expected " + std::to_string(N) + " cells, got " +
                                    std::to_string(cells.size()));
        for (std::size_t n = 0; n < N; ++n) {
            const std::string& c = cells[n];
            if (c.empty()) {
                raw.push_back(std::nan(""));
                continue;
            }
            char* end = nullptr;
            const double v = std::strtod(c.c_str(), &end);
            if (end != c.c_str() + c.size() || !std::isfinite(v))
                parse_fail(line_no, "non-numeric cell '" + c + "' in column " +
                                        ids[n]);
            raw.push_back(v);
        }
    }
    const std::size_t T = raw.size() / N;
    if (T == 0) parse_fail(line_no, "no data rows");

    // impute: forward fill, with leading gaps back-filled from the first
    // observed value of that sensor
    for (std::size_t n = 0; n < N; ++n) {
        std::size_t first_valid = T;
        for (std::size_t t = 0; t < T; ++t) {
            if (!std::isnan(raw[t * N + n])) {
                first_valid = t;
                break;
            }
        }
        if (first_valid == T)
            throw std::invalid_argument("load_csv: column " + ids[n] +
                                        " has no readings at all");
        for (std::size_t t = 0; t < first_valid; ++t)
            raw[t * N + n] = raw[first_valid * N + n];
        for (std::size_t t = first_valid + 1; t < T; ++t)
            if (std::isnan(raw[t * N + n])) raw[t * N + n] = raw[(t - 1) * N + n];
    }

    TrafficDataset ds;
    ds.values = Tensor::from_vector({T, N, 1}, std::move(raw));
    ds.steps_per_day = steps_per_day;
    ds.start_weekday = start_weekday;
    ds.name = path;
    ds.sensor_ids = ids;
    return ds;
}

void save_dataset(const TrafficDataset& ds, const std::string& path) {
    if (ds.channels() != 1)
        throw std::invalid_argument("save_dataset: CSV holds one channel, got " +
                                    std::to_string(ds.channels()));
    const std::size_t T = ds.frames(), N = ds.nodes();
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("save_dataset: cannot open " + path);
    for (std::size_t n = 0; n < N; ++n) {
        if (n) os << ',';
        os << (n < ds.sensor_ids.size() ? ds.sensor_ids[n] : "s" + std::to_string(n));
    }
    os << '\n';
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t n = 0; n < N; ++n) {
            if (n) os << ',';
            os << fmt_g17(ds.values[t * N + n]);
        }
        os << '\n';
    }
    os.flush();
    if (!os) throw std::runtime_error("save_dataset: write failed: " + path);

    std::ofstream ms(path + ".meta", std::ios::trunc);
    if (!ms) throw std::runtime_error("save_dataset: cannot open " + path + ".meta");
    ms << "name=" << ds.name << '\n'
       << "steps_per_day=" << ds.steps_per_day << '\n'
       << "start_weekday=" << ds.start_weekday << '\n';
    ms.flush();
    if (!ms) throw std::runtime_error("save_dataset: write failed: " + path + ".meta");
}

TrafficDataset load_dataset(const std::string& path) {
    std::ifstream ms(path + ".meta");
    if (!ms)
        throw std::runtime_error("load_dataset: missing metadata sidecar " +
                                 path + ".meta");
    std::string name;
    std::size_t spd = 0, wd = 7;
    std::string line;
    while (std::getline(ms, line)) {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
        if (k == "name") name = v;
        else if (k == "steps_per_day") spd = std::stoul(v);
        else if (k == "start_weekday") wd = std::stoul(v);
    }
    if (spd == 0 || wd > 6)
        throw std::runtime_error("load_dataset: sidecar missing steps_per_day/start_weekday");
    TrafficDataset ds = load_csv(path, spd, wd);
    ds.name = name;
    return ds;
}

TrafficDataset generate_synthetic(std::size_t N, std::size_t days,
                                  std::uint64_t seed, double noise_scale) {
    if (N < 1) throw std::invalid_argument("generate_synthetic: N must be >= 1");
    if (days < 1) throw std::invalid_argument("generate_synthetic: days must be >= 1");
    if (noise_scale < 0.0)
        throw std::invalid_argument("generate_synthetic: noise_scale must be >= 0");

    constexpr std::size_t kSpd = 288;
    constexpr double kTwoPi = 6.283185307179586;
    const std::size_t T = days * kSpd;
    const Rng root(seed);

    std::vector<double> base(N), amp(N), phase(N), sigma(N), dip(N);
    {
        Rng pr = root.split("profile");
        for (std::size_t n = 0; n < N; ++n) {
            base[n] = pr.uniform(80.0, 120.0);
            amp[n] = pr.uniform(20.0, 40.0);
            phase[n] = pr.uniform(0.0, kTwoPi);
            sigma[n] = pr.uniform(0.2, 0.5);
            dip[n] = pr.uniform(0.1, 0.3);
        }
    }

    TrafficDataset ds;
    ds.values = Tensor::zeros({T, N, 1});
    ds.steps_per_day = kSpd;
    ds.start_weekday = 0;
    ds.name = "synthetic";
    double* v = ds.values.mut();
    for (std::size_t n = 0; n < N; ++n) {
        ds.sensor_ids.push_back("s" + std::to_string(n));
        Rng nr = root.split("noise").split(static_cast<std::uint64_t>(n));
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t tod = t % kSpd;
            const std::size_t weekday = (t / kSpd) % 7;  // start_weekday = 0
            double x = base[n] +
                       amp[n] * std::sin(kTwoPi * static_cast<double>(tod) /
                                             static_cast<double>(kSpd) +
                                         phase[n]);
            if (weekday == 5 || weekday == 6) x -= dip[n] * base[n];
            if (noise_scale > 0.0) x += noise_scale * sigma[n] * nr.normal();
            if (x < 0.0) x = 0.0;
            v[t * N + n] = x;
        }
    }
    return ds;
}

namespace {

Tensor slice_frames(const Tensor& values, std::size_t lo, std::size_t count) {
    const std::size_t N = values.dim(1), d = values.dim(2);
    Tensor out = Tensor::zeros({count, N, d});
    const std::size_t inner = N * d;
    double* o = out.mut();
    for (std::size_t i = 0; i < count * inner; ++i) o[i] = values[lo * inner + i];
    return out;
}

void cut_segment(const TrafficDataset& ds, std::size_t lo, std::size_t hi,
                 std::size_t M, std::size_t Z, std::vector<TrafficWindow>& out) {
    if (hi - lo < M + Z) return;
    for (std::size_t s = lo; s + M + Z <= hi; ++s) {
        TrafficWindow w;
        w.t0 = s;
        w.x = slice_frames(ds.values, s, M);
        w.y = slice_frames(ds.values, s + M, Z);
        calendar_indices(s, M, ds.steps_per_day, ds.start_weekday, w.weekday_idx,
                         w.tod_idx);
        out.push_back(std::move(w));
    }
}

}  // namespace

WindowSplits make_windows(const TrafficDataset& ds, std::size_t M,
                          std::size_t Z, const SplitSpec& split) {
    if (M < 1 || Z < 1) throw std::invalid_argument("make_windows: M and Z must be >= 1");
    const unsigned sum = split.train + split.val + split.test;
    if (sum == 0) throw std::invalid_argument("make_windows: split ratios sum to 0");
    const std::size_t T = ds.frames();
    const std::size_t t1 = T * split.train / sum;
    const std::size_t t2 = T * (split.train + split.val) / sum;

    WindowSplits ws;
    ws.train_frames = t1;
    ws.val_frames = t2 - t1;
    ws.test_frames = T - t2;
    cut_segment(ds, 0, t1, M, Z, ws.train);
    cut_segment(ds, t1, t2, M, Z, ws.val);
    cut_segment(ds, t2, T, M, Z, ws.test);
    return ws;
}

Scaler standardize(WindowSplits& splits,
                   const std::vector<std::string>& sensor_ids) {
    if (splits.train.empty())
        throw std::invalid_argument("standardize: no training windows to fit on");
    const Tensor& x0 = splits.train[0].x;
    const std::size_t N = x0.dim(1), d = x0.dim(2), inner = N * d;

    // two-pass mean/variance over all train x elements, per (sensor, channel)
    std::vector<double> sum(inner, 0.0);
    std::size_t frames = 0;
    for (const TrafficWindow& w : splits.train) {
        for (std::size_t i = 0; i < w.x.size(); ++i) sum[i % inner] += w.x[i];
        frames += w.x.dim(0);
    }
    Scaler sc;
    sc.mean = Tensor::zeros({N, d});
    sc.std = Tensor::zeros({N, d});
    for (std::size_t j = 0; j < inner; ++j)
        sc.mean.mut()[j] = sum[j] / static_cast<double>(frames);
    std::vector<double> sq(inner, 0.0);
    for (const TrafficWindow& w : splits.train)
        for (std::size_t i = 0; i < w.x.size(); ++i) {
            const double e = w.x[i] - sc.mean[i % inner];
            sq[i % inner] += e * e;
        }
    for (std::size_t j = 0; j < inner; ++j) {
        const double v = sq[j] / static_cast<double>(frames);
        if (v <= 1e-24) {
            const std::size_t sensor = j / d;
            const std::string id = sensor < sensor_ids.size()
                                       ? sensor_ids[sensor]
                                       : "sensor " + std::to_string(sensor);
            throw std::invalid_argument(
                "standardize: zero variance in training data for " + id);
        }
        sc.std.mut()[j] = std::sqrt(v);
    }

    for (auto* coll : {&splits.train, &splits.val, &splits.test})
        for (TrafficWindow& w : *coll) w.x = sc.transform(w.x);
    return sc;
}

}  // namespace stms
