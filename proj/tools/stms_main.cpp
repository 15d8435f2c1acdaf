// stms: batch command-line front end. Subcommands: synth, train, eval,
// bench, verify. Exit codes: 0 success, 1 validation error, 2 runtime
// failure, 3 verification failure.
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "stms/bench.hpp"
#include "stms/checkpoint.hpp"
#include "stms/data.hpp"
#include "stms/duality.hpp"
#include "stms/flops.hpp"
#include "stms/metrics.hpp"
#include "stms/model.hpp"
#include "stms/train.hpp"

namespace {

using namespace stms;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitVerification = 3;

struct Flags {
    std::string data;
    std::string out;
    std::string checkpoint;
    std::string resume;
    std::uint64_t seed = 1;
    std::size_t attn_layers = 1;
    std::size_t mamba_layers = 1;
    std::size_t d_embed = 24;
    std::size_t d_adaptive = 8;
    std::size_t d_state = 16;
    std::size_t horizon = 12;
    std::size_t window = 12;
    std::size_t batch = 16;
    std::size_t patience = 30;
    std::size_t epochs = 100;
    double lr = 0.001;
    std::size_t heads = 4;
    std::size_t expand = 2;
    double mape_floor = 1e-3;
    double stop_train_mae = 0.0;
    std::size_t nodes = 4;
    std::size_t days = 14;
    double noise = 1.0;
    std::size_t repeats = 5;
    bool ablation = false;
    bool verbose = false;
    std::size_t threads = 1;
};

// ---- config file merge -----------------------------------------------

// Optional key=value file per subcommand; a key sets its flag only when
// that flag was not given on the command line (flags win).
class ConfigMerge {
public:
    explicit ConfigMerge(CLI::App* sub) {
        sub->add_option("--config", path_,
                        "key=value config file; command-line flags win");
    }

    void bind(CLI::Option* opt, const std::string& key,
              std::function<void(const std::string&)> set) {
        bindings_[key] = {opt, std::move(set)};
    }

    void apply() const {
        if (path_.empty()) return;
        std::ifstream is(path_);
        if (!is)
            throw std::invalid_argument("cannot read config file " + path_);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::string where =
                path_ + " line " + std::to_string(lineno);
            std::string s = trim(line);
            if (s.empty() || s[0] == '#') continue;
            const std::size_t eq = s.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument(where + ": expected key=value");
            const std::string key = trim(s.substr(0, eq));
            const std::string val = trim(s.substr(eq + 1));
            const auto it = bindings_.find(key);
            if (it == bindings_.end())
                throw std::invalid_argument(where + ": unknown key '" + key +
                                            "'");
            if (it->second.opt->count() > 0) continue;  // flag wins
            it->second.set(val);
        }
    }

private:
    struct Binding {
        CLI::Option* opt = nullptr;
        std::function<void(const std::string&)> set;
    };

    static std::string trim(const std::string& s) {
        const std::size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        const std::size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    std::string path_;
    std::map<std::string, Binding> bindings_;
};

std::uint64_t parse_uint_value(const std::string& key, const std::string& v,
                               bool positive) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    // strtoull silently wraps negatives, so reject a sign explicitly
    if (v.empty() || v.find_first_of("+-") != std::string::npos ||
        *end != '\0' || errno != 0 || (positive && x == 0))
        throw std::invalid_argument("config key '" + key + "': '" + v +
                                    "' is not a valid " +
                                    (positive ? "positive " : "") + "integer");
    return x;
}

double parse_double_value(const std::string& key, const std::string& v,
                          bool positive) {
    errno = 0;
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0' || errno != 0 || (positive && x <= 0.0))
        throw std::invalid_argument("config key '" + key + "': '" + v +
                                    "' is not a valid " +
                                    (positive ? "positive " : "") + "number");
    return x;
}

bool parse_bool_value(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw std::invalid_argument("config key '" + key +
                                "': expected 0/1/true/false, got '" + v + "'");
}

template <typename T>
void bind_uint(ConfigMerge& cm, CLI::Option* opt, const std::string& key,
               T& ref, bool positive) {
    cm.bind(opt, key, [key, &ref, positive](const std::string& v) {
        ref = static_cast<T>(parse_uint_value(key, v, positive));
    });
}

void bind_double(ConfigMerge& cm, CLI::Option* opt, const std::string& key,
                 double& ref, bool positive) {
    cm.bind(opt, key, [key, &ref, positive](const std::string& v) {
        ref = parse_double_value(key, v, positive);
    });
}

void bind_string(ConfigMerge& cm, CLI::Option* opt, const std::string& key,
                 std::string& ref) {
    cm.bind(opt, key, [&ref](const std::string& v) { ref = v; });
}

void bind_bool(ConfigMerge& cm, CLI::Option* opt, const std::string& key,
               bool& ref) {
    cm.bind(opt, key, [key, &ref](const std::string& v) {
        ref = parse_bool_value(key, v);
    });
}

// ---- shared plumbing ---------------------------------------------------

// The compute kernels are single-threaded; the cap is recorded and honored
// trivially. An unparsable value is still rejected so scripts fail loudly.
std::size_t resolve_threads() {
    const char* env = std::getenv("STMS_THREADS");
    if (env == nullptr || *env == '\0') return 1;
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (*end != '\0' || v == 0)
        throw std::invalid_argument(
            std::string("STMS_THREADS must be a positive integer, got '") +
            env + "'");
    return static_cast<std::size_t>(v);
}

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error("cannot create output directory " + dir +
                                 ": " + ec.message());
}

// Every run directory gets the fully resolved configuration, enough to
// reproduce the run from scratch.
void write_resolved(const std::string& out_dir,
                    const std::map<std::string, std::string>& kv) {
    const std::string path = out_dir + "/config_resolved.txt";
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path);
    for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + path);
}

ModelConfig config_from_flags(const Flags& f, const TrafficDataset& ds) {
    ModelConfig cfg;
    cfg.embed.d = ds.channels();
    cfg.embed.d_e = f.d_embed;
    cfg.embed.d_s = f.d_adaptive;
    cfg.embed.M = f.window;
    cfg.embed.N = ds.nodes();
    cfg.embed.steps_per_day = ds.steps_per_day;
    cfg.heads = f.heads;
    cfg.n_attention_layers = f.attn_layers;
    cfg.n_mamba_layers = f.mamba_layers;
    cfg.expand = f.expand;
    cfg.d_state = f.d_state;
    cfg.Z = f.horizon;
    return cfg;
}

std::map<std::string, std::string> model_kv(const ModelConfig& cfg) {
    std::map<std::string, std::string> kv;
    kv["model.d"] = std::to_string(cfg.embed.d);
    kv["model.d_embed"] = std::to_string(cfg.embed.d_e);
    kv["model.d_adaptive"] = std::to_string(cfg.embed.d_s);
    kv["model.window"] = std::to_string(cfg.embed.M);
    kv["model.nodes"] = std::to_string(cfg.embed.N);
    kv["model.steps_per_day"] = std::to_string(cfg.embed.steps_per_day);
    kv["model.heads"] = std::to_string(cfg.heads);
    kv["model.attn_layers"] = std::to_string(cfg.n_attention_layers);
    kv["model.mamba_layers"] = std::to_string(cfg.n_mamba_layers);
    kv["model.expand"] = std::to_string(cfg.expand);
    kv["model.d_state"] = std::to_string(cfg.d_state);
    kv["model.horizon"] = std::to_string(cfg.Z);
    return kv;
}

std::size_t kv_num(const Checkpoint& ck, const std::string& key) {
    const auto it = ck.config.find(key);
    if (it == ck.config.end())
        throw std::runtime_error("checkpoint is missing config key " + key);
    return static_cast<std::size_t>(std::stoull(it->second));
}

ModelConfig config_from_checkpoint(const Checkpoint& ck) {
    ModelConfig cfg;
    cfg.embed.d = kv_num(ck, "model.d");
    cfg.embed.d_e = kv_num(ck, "model.d_embed");
    cfg.embed.d_s = kv_num(ck, "model.d_adaptive");
    cfg.embed.M = kv_num(ck, "model.window");
    cfg.embed.N = kv_num(ck, "model.nodes");
    cfg.embed.steps_per_day = kv_num(ck, "model.steps_per_day");
    cfg.heads = kv_num(ck, "model.heads");
    cfg.n_attention_layers = kv_num(ck, "model.attn_layers");
    cfg.n_mamba_layers = kv_num(ck, "model.mamba_layers");
    cfg.expand = kv_num(ck, "model.expand");
    cfg.d_state = kv_num(ck, "model.d_state");
    cfg.Z = kv_num(ck, "model.horizon");
    return cfg;
}

void save_model_checkpoint(const std::string& path, Model& m,
                           const Scaler& scaler,
                           std::map<std::string, std::string> extra) {
    Checkpoint ck;
    ck.config = model_kv(m.cfg);
    for (auto& [k, v] : extra) ck.config[k] = v;
    for (const Parameter* p : m.params())
        ck.tensors.emplace_back(p->name, p->value);
    ck.tensors.emplace_back("scaler.mean", scaler.mean);
    ck.tensors.emplace_back("scaler.std", scaler.std);
    save_checkpoint(path, ck);
}

// Copies parameter values (and nothing else) out of a checkpoint into an
// already-built model of the same architecture.
void load_params_from(Model& m, const Checkpoint& ck) {
    for (Parameter* p : m.params()) {
        const Tensor* t = ck.find(p->name);
        if (t == nullptr)
            throw std::invalid_argument("checkpoint has no tensor named " +
                                        p->name);
        if (!t->same_shape(p->value))
            throw std::invalid_argument(
                "checkpoint tensor " + p->name +
                " does not match the configured architecture");
        p->value = t->clone();
    }
}

Scaler scaler_from_checkpoint(const Checkpoint& ck) {
    const Tensor* mean = ck.find("scaler.mean");
    const Tensor* std_t = ck.find("scaler.std");
    if (mean == nullptr || std_t == nullptr)
        throw std::runtime_error("checkpoint is missing scaler tensors");
    return Scaler{mean->clone(), std_t->clone()};
}

void check_dataset_matches(const ModelConfig& cfg, const TrafficDataset& ds) {
    if (ds.nodes() != cfg.embed.N)
        throw std::invalid_argument(
            "dataset has " + std::to_string(ds.nodes()) +
            " sensors but the checkpoint was trained with " +
            std::to_string(cfg.embed.N));
    if (ds.channels() != cfg.embed.d)
        throw std::invalid_argument(
            "dataset has " + std::to_string(ds.channels()) +
            " channels but the checkpoint was trained with " +
            std::to_string(cfg.embed.d));
    if (ds.steps_per_day != cfg.embed.steps_per_day)
        throw std::invalid_argument(
            "dataset has " + std::to_string(ds.steps_per_day) +
            " frames per day but the checkpoint was trained with " +
            std::to_string(cfg.embed.steps_per_day));
}

TrainConfig train_config_from_flags(const Flags& f) {
    TrainConfig tc;
    tc.lr0 = f.lr;
    tc.batch_size = f.batch;
    tc.patience = f.patience;
    tc.max_epochs = f.epochs;
    tc.seed = f.seed;
    tc.mape_floor = f.mape_floor;
    tc.stop_train_mae = f.stop_train_mae;
    tc.verbose = f.verbose;
    return tc;
}

std::map<std::string, std::string> common_kv(const char* cmd, const Flags& f) {
    std::map<std::string, std::string> kv;
    kv["command"] = cmd;
    kv["seed"] = std::to_string(f.seed);
    kv["threads"] = std::to_string(f.threads);
    return kv;
}

void print_metrics(const EvalReport& rep) {
    std::printf("%6s %12s %12s %12s\n", "step", "mae", "rmse", "mape");
    for (std::size_t k = 0; k < rep.per_step.size(); ++k)
        std::printf("%6zu %12.5f %12.5f %12.5f\n", k + 1, rep.per_step[k].mae,
                    rep.per_step[k].rmse, rep.per_step[k].mape);
    std::printf("%6s %12.5f %12.5f %12.5f\n", "all", rep.overall.mae,
                rep.overall.rmse, rep.overall.mape);
}

// ---- subcommands ---------------------------------------------------------

int cmd_synth(const Flags& f) {
    if (f.nodes == 0) throw std::invalid_argument("--nodes must be positive");
    if (f.days == 0) throw std::invalid_argument("--days must be positive");
    ensure_dir(f.out);
    const TrafficDataset ds =
        generate_synthetic(f.nodes, f.days, f.seed, f.noise);
    const std::string csv = f.out + "/synthetic.csv";
    save_dataset(ds, csv);

    auto kv = common_kv("synth", f);
    kv["nodes"] = std::to_string(f.nodes);
    kv["days"] = std::to_string(f.days);
    kv["noise"] = fmt_g17(f.noise);
    kv["out"] = f.out;
    write_resolved(f.out, kv);

    std::printf("wrote %s (%zu frames, %zu sensors) and %s.meta\n",
                csv.c_str(), ds.frames(), ds.nodes(), csv.c_str());
    return kExitOk;
}

int cmd_train(const Flags& f) {
    ensure_dir(f.out);
    TrafficDataset ds = load_dataset(f.data);
    WindowSplits splits = make_windows(ds, f.window, f.horizon, {6, 2, 2});
    const Scaler scaler = standardize(splits, ds.sensor_ids);
    std::printf("%s\n", splits.report().c_str());

    const ModelConfig cfg = config_from_flags(f, ds);
    Model model = make_model(cfg, f.seed);
    if (!f.resume.empty()) {
        const Checkpoint ck = load_checkpoint(f.resume);
        load_params_from(model, ck);
        std::printf("resumed parameters from %s\n", f.resume.c_str());
    }

    const TrainConfig tc = train_config_from_flags(f);
    const RunReport rep = train_model(model, splits, scaler, tc);

    write_epoch_csv(f.out + "/epochs.csv", rep);
    if (!rep.test.per_step.empty())
        write_metrics_csv(f.out + "/metrics.csv", rep.test);

    auto kv = common_kv("train", f);
    for (auto& [k, v] : model_kv(cfg)) kv[k] = v;
    kv["data"] = f.data;
    kv["out"] = f.out;
    kv["lr"] = fmt_g17(f.lr);
    kv["batch"] = std::to_string(f.batch);
    kv["patience"] = std::to_string(f.patience);
    kv["epochs"] = std::to_string(f.epochs);
    kv["mape_floor"] = fmt_g17(f.mape_floor);
    kv["stop_train_mae"] = fmt_g17(f.stop_train_mae);
    kv["resume"] = f.resume;
    kv["dataset.name"] = ds.name;
    write_resolved(f.out, kv);

    std::map<std::string, std::string> extra;
    extra["train.seed"] = std::to_string(f.seed);
    extra["train.best_epoch"] = std::to_string(rep.best_epoch);
    extra["train.best_val_mae"] = fmt_g17(rep.best_val_mae);
    extra["dataset.name"] = ds.name;
    save_model_checkpoint(f.out + "/checkpoint.stms", model, scaler, extra);

    std::printf("trained %zu epochs; best epoch %zu val MAE %.5f\n",
                rep.epochs.size(), rep.best_epoch, rep.best_val_mae);
    if (!rep.test.per_step.empty()) {
        std::printf("test metrics:\n");
        print_metrics(rep.test);
    }
    std::printf("wrote %s/checkpoint.stms, epochs.csv, metrics.csv\n",
                f.out.c_str());
    return kExitOk;
}

int cmd_eval(const Flags& f) {
    ensure_dir(f.out);
    const Checkpoint ck = load_checkpoint(f.checkpoint);
    const ModelConfig cfg = config_from_checkpoint(ck);
    TrafficDataset ds = load_dataset(f.data);
    check_dataset_matches(cfg, ds);

    Model model = make_model(cfg, f.seed);
    load_params_from(model, ck);
    const Scaler scaler = scaler_from_checkpoint(ck);

    WindowSplits splits = make_windows(ds, cfg.embed.M, cfg.Z, {6, 2, 2});
    if (splits.test.empty())
        throw std::invalid_argument(
            "dataset is too short: the test segment yields no window");
    for (TrafficWindow& w : splits.test) w.x = scaler.transform(w.x);

    const EvalReport rep = evaluate(model, splits.test, scaler, f.mape_floor);
    write_metrics_csv(f.out + "/metrics.csv", rep);

    auto kv = common_kv("eval", f);
    for (auto& [k, v] : model_kv(cfg)) kv[k] = v;
    kv["data"] = f.data;
    kv["out"] = f.out;
    kv["checkpoint"] = f.checkpoint;
    kv["mape_floor"] = fmt_g17(f.mape_floor);
    write_resolved(f.out, kv);

    std::printf("evaluated %zu test windows\n", splits.test.size());
    print_metrics(rep);
    std::printf("wrote %s/metrics.csv\n", f.out.c_str());
    return kExitOk;
}

int cmd_bench(const Flags& f) {
    ensure_dir(f.out);
    TrafficDataset ds = load_dataset(f.data);

    ModelConfig cfg;
    Model model;
    Scaler scaler;
    WindowSplits splits;
    if (!f.checkpoint.empty()) {
        const Checkpoint ck = load_checkpoint(f.checkpoint);
        cfg = config_from_checkpoint(ck);
        check_dataset_matches(cfg, ds);
        model = make_model(cfg, f.seed);
        load_params_from(model, ck);
        scaler = scaler_from_checkpoint(ck);
        splits = make_windows(ds, cfg.embed.M, cfg.Z, {6, 2, 2});
        for (TrafficWindow& w : splits.test) w.x = scaler.transform(w.x);
    } else {
        cfg = config_from_flags(f, ds);
        model = make_model(cfg, f.seed);
        splits = make_windows(ds, cfg.embed.M, cfg.Z, {6, 2, 2});
        scaler = standardize(splits, ds.sensor_ids);
    }
    if (splits.test.empty())
        throw std::invalid_argument(
            "dataset is too short: the test segment yields no window");

    const FlopsReport flops = count_flops(cfg);
    const std::string table = format_flops(flops);
    std::printf("%s", table.c_str());
    {
        std::ofstream os(f.out + "/flops.txt", std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write flops.txt");
        os << table;
    }

    const BenchStats st =
        bench_inference(model, splits.test, scaler, f.repeats);
    std::printf(
        "inference over %zu windows: median %.6f s, IQR %.6f s (%zu repeats)\n",
        st.windows, st.median_s, st.iqr_s, st.samples_s.size());
    {
        std::ofstream os(f.out + "/bench.txt", std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write bench.txt");
        os << "windows=" << st.windows << "\nrepeats=" << st.samples_s.size()
           << "\nmedian_s=" << fmt_g17(st.median_s)
           << "\niqr_s=" << fmt_g17(st.iqr_s) << '\n';
    }

    if (f.ablation) {
        const std::vector<std::pair<std::size_t, std::size_t>> grid = {
            {1, 0}, {0, 1}, {1, 1}};
        TrainConfig tc = train_config_from_flags(f);
        std::printf("running %zu-point ablation grid...\n", grid.size());
        const std::vector<AblationRow> rows =
            ablation_run(ds, grid, cfg, tc, cfg.embed.M, {6, 2, 2}, f.out);
        std::printf("%11s %12s %10s %10s %10s %10s\n", "attn/mamba", "mae",
                    "rmse", "mape", "flops_m", "infer_s");
        for (const AblationRow& r : rows)
            std::printf("%5zu/%5zu %12.5f %10.5f %10.5f %10.2f %10.6f\n",
                        r.attn_layers, r.mamba_layers, r.test.mae, r.test.rmse,
                        r.test.mape, r.flops_m, r.infer_s);
        std::printf("wrote %s/ablation.csv and per_step.csv\n", f.out.c_str());
    }

    auto kv = common_kv("bench", f);
    for (auto& [k, v] : model_kv(cfg)) kv[k] = v;
    kv["data"] = f.data;
    kv["out"] = f.out;
    kv["checkpoint"] = f.checkpoint;
    kv["repeats"] = std::to_string(f.repeats);
    kv["ablation"] = f.ablation ? "1" : "0";
    write_resolved(f.out, kv);
    return kExitOk;
}

int cmd_verify(const Flags& f) {
    const std::vector<DualityCheck> checks = run_duality_suite(f.seed);
    std::printf("%s", format_duality_table(checks).c_str());
    bool all = true;
    for (const DualityCheck& c : checks) all = all && c.pass();
    if (!all) {
        std::fprintf(stderr, "verification FAILED\n");
        return kExitVerification;
    }
    std::printf("all %zu checks passed\n", checks.size());
    return kExitOk;
}

// ---- flag wiring ----------------------------------------------------------

void add_model_flags(CLI::App* sub, ConfigMerge& cm, Flags& f) {
    bind_uint(cm,
              sub->add_option("--attn-layers", f.attn_layers,
                              "number of spatio-temporal attention layers"),
              "attn-layers", f.attn_layers, false);
    bind_uint(cm,
              sub->add_option("--mamba-layers", f.mamba_layers,
                              "number of state-space layers"),
              "mamba-layers", f.mamba_layers, false);
    bind_uint(cm,
              sub->add_option("--d-embed", f.d_embed,
                              "feature/calendar embedding width")
                  ->check(CLI::PositiveNumber),
              "d-embed", f.d_embed, true);
    bind_uint(cm,
              sub->add_option("--d-adaptive", f.d_adaptive,
                              "adaptive embedding width")
                  ->check(CLI::PositiveNumber),
              "d-adaptive", f.d_adaptive, true);
    bind_uint(cm,
              sub->add_option("--d-state", f.d_state,
                              "state dimension per channel")
                  ->check(CLI::PositiveNumber),
              "d-state", f.d_state, true);
    bind_uint(cm,
              sub->add_option("--heads", f.heads, "attention heads")
                  ->check(CLI::PositiveNumber),
              "heads", f.heads, true);
    bind_uint(cm,
              sub->add_option("--expand", f.expand,
                              "inner-width expansion factor")
                  ->check(CLI::PositiveNumber),
              "expand", f.expand, true);
    bind_uint(cm,
              sub->add_option("--window", f.window,
                              "input window length M in frames")
                  ->check(CLI::PositiveNumber),
              "window", f.window, true);
    bind_uint(cm,
              sub->add_option("--horizon", f.horizon,
                              "forecast horizon Z in frames")
                  ->check(CLI::PositiveNumber),
              "horizon", f.horizon, true);
}

void add_train_flags(CLI::App* sub, ConfigMerge& cm, Flags& f) {
    bind_uint(cm,
              sub->add_option("--batch", f.batch, "mini-batch size")
                  ->check(CLI::PositiveNumber),
              "batch", f.batch, true);
    bind_double(cm,
                sub->add_option("--lr", f.lr, "initial learning rate")
                    ->check(CLI::PositiveNumber),
                "lr", f.lr, true);
    bind_uint(cm,
              sub->add_option("--patience", f.patience,
                              "epochs without val improvement before stopping")
                  ->check(CLI::PositiveNumber),
              "patience", f.patience, true);
    bind_uint(cm,
              sub->add_option("--epochs", f.epochs, "maximum training epochs")
                  ->check(CLI::PositiveNumber),
              "epochs", f.epochs, true);
    bind_double(
        cm,
        sub->add_option(
            "--mape-floor", f.mape_floor,
            "exclude targets at or below this magnitude from MAPE"),
        "mape-floor", f.mape_floor, false);
    bind_double(cm,
                sub->add_option("--stop-train-mae", f.stop_train_mae,
                                "stop once train MAE falls below this (0 = off)"),
                "stop-train-mae", f.stop_train_mae, false);
    bind_bool(cm,
              sub->add_flag("--verbose", f.verbose,
                            "per-epoch progress lines"),
              "verbose", f.verbose);
}

void add_seed_flag(CLI::App* sub, ConfigMerge& cm, Flags& f,
                   const char* help) {
    bind_uint(cm, sub->add_option("--seed", f.seed, help), "seed", f.seed,
              false);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatio-temporal traffic forecasting toolkit"};
    app.require_subcommand(1);
    Flags f;

    CLI::App* synth =
        app.add_subcommand("synth", "generate a seeded synthetic dataset");
    ConfigMerge cm_synth(synth);
    bind_uint(cm_synth,
              synth->add_option("--nodes", f.nodes, "sensor count")
                  ->check(CLI::PositiveNumber),
              "nodes", f.nodes, true);
    bind_uint(cm_synth,
              synth->add_option("--days", f.days, "days of 5-minute frames")
                  ->check(CLI::PositiveNumber),
              "days", f.days, true);
    bind_double(cm_synth,
                synth->add_option("--noise", f.noise,
                                  "noise scale (0 = deterministic)"),
                "noise", f.noise, false);
    add_seed_flag(synth, cm_synth, f, "generator seed");
    bind_string(cm_synth,
                synth->add_option("--out", f.out, "output directory")
                    ->required(),
                "out", f.out);

    CLI::App* train =
        app.add_subcommand("train", "train a model and write a checkpoint");
    ConfigMerge cm_train(train);
    bind_string(cm_train,
                train->add_option("--data", f.data,
                                  "dataset CSV (with .meta sidecar)")
                    ->required(),
                "data", f.data);
    bind_string(cm_train,
                train->add_option("--out", f.out, "run output directory")
                    ->required(),
                "out", f.out);
    add_seed_flag(train, cm_train, f, "init/shuffle seed");
    bind_string(cm_train,
                train->add_option("--resume", f.resume,
                                  "checkpoint whose parameters seed this run"),
                "resume", f.resume);
    add_model_flags(train, cm_train, f);
    add_train_flags(train, cm_train, f);

    CLI::App* eval_cmd =
        app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    ConfigMerge cm_eval(eval_cmd);
    bind_string(cm_eval,
                eval_cmd->add_option("--data", f.data,
                                     "dataset CSV (with .meta sidecar)")
                    ->required(),
                "data", f.data);
    bind_string(cm_eval,
                eval_cmd->add_option("--checkpoint", f.checkpoint,
                                     "trained checkpoint")
                    ->required(),
                "checkpoint", f.checkpoint);
    bind_string(cm_eval,
                eval_cmd->add_option("--out", f.out, "output directory")
                    ->required(),
                "out", f.out);
    add_seed_flag(eval_cmd, cm_eval, f, "unused placeholder seed");
    bind_double(cm_eval,
                eval_cmd->add_option(
                    "--mape-floor", f.mape_floor,
                    "exclude targets at or below this magnitude"),
                "mape-floor", f.mape_floor, false);

    CLI::App* bench = app.add_subcommand(
        "bench", "count FLOPS and time inference; optional ablation grid");
    ConfigMerge cm_bench(bench);
    bind_string(cm_bench,
                bench->add_option("--data", f.data,
                                  "dataset CSV (with .meta sidecar)")
                    ->required(),
                "data", f.data);
    bind_string(cm_bench,
                bench->add_option("--out", f.out, "output directory")
                    ->required(),
                "out", f.out);
    bind_string(
        cm_bench,
        bench->add_option("--checkpoint", f.checkpoint,
                          "optional checkpoint (otherwise fresh parameters)"),
        "checkpoint", f.checkpoint);
    add_seed_flag(bench, cm_bench, f, "init seed for fresh parameters");
    bind_uint(cm_bench,
              bench->add_option("--repeats", f.repeats,
                                "timed sweeps after warm-up")
                  ->check(CLI::PositiveNumber),
              "repeats", f.repeats, true);
    bind_bool(cm_bench,
              bench->add_flag("--ablation", f.ablation,
                              "train the layer-count grid and write "
                              "ablation.csv"),
              "ablation", f.ablation);
    add_model_flags(bench, cm_bench, f);
    add_train_flags(bench, cm_bench, f);

    CLI::App* verify =
        app.add_subcommand("verify", "run the numerical verification suite");
    ConfigMerge cm_verify(verify);
    add_seed_flag(verify, cm_verify, f, "suite seed");

    try {
        app.parse(argc, argv);
        f.threads = resolve_threads();
        if (synth->parsed()) {
            cm_synth.apply();
            return cmd_synth(f);
        }
        if (train->parsed()) {
            cm_train.apply();
            return cmd_train(f);
        }
        if (eval_cmd->parsed()) {
            cm_eval.apply();
            return cmd_eval(f);
        }
        if (bench->parsed()) {
            cm_bench.apply();
            return cmd_bench(f);
        }
        if (verify->parsed()) {
            cm_verify.apply();
            return cmd_verify(f);
        }
        return kExitValidation;  // unreachable: a subcommand is required
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}
