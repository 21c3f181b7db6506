#pragma once

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "lsmix/core.hpp"
#include "lsmix/datagen.hpp"
#include "lsmix/diagnostics.hpp"
#include "lsmix/losses.hpp"
#include "lsmix/models.hpp"
#include "lsmix/train.hpp"

namespace lsmix {

enum class Method { weight_decay, label_smoothing, mixup };
enum class Recipe { defC1, spurious_binary, colored_multiclass, boundary2d };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::weight_decay: return "weight_decay";
        case Method::label_smoothing: return "label_smoothing";
        case Method::mixup: return "mixup";
    }
    return "?";
}

inline std::string to_string(Recipe r) {
    switch (r) {
        case Recipe::defC1: return "defC1";
        case Recipe::spurious_binary: return "spurious_binary";
        case Recipe::colored_multiclass: return "colored_multiclass";
        case Recipe::boundary2d: return "boundary2d";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "weight_decay" || s == "wd") return Method::weight_decay;
    if (s == "label_smoothing" || s == "ls") return Method::label_smoothing;
    if (s == "mixup") return Method::mixup;
    throw ConfigError("unknown method '" + s + "' (weight_decay | label_smoothing | mixup)");
}

inline Recipe parse_recipe(const std::string& s) {
    if (s == "defC1") return Recipe::defC1;
    if (s == "spurious_binary") return Recipe::spurious_binary;
    if (s == "colored_multiclass") return Recipe::colored_multiclass;
    if (s == "boundary2d") return Recipe::boundary2d;
    throw ConfigError("unknown recipe '" + s + "' (defC1 | spurious_binary | colored_multiclass | boundary2d)");
}

/// Inclusive uniform grid. For Mixup a value a means Beta(a,a), with a = 0 meaning plain ERM.
inline std::vector<double> plan_grid(Method, double lo, double hi, std::size_t count) {
    require(lo <= hi, "grid needs lo <= hi");
    require(count >= 1, "grid needs count >= 1");
    if (count == 1) return {lo};
    std::vector<double> g(count);
    const double step = (hi - lo) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) g[i] = lo + step * static_cast<double>(i);
    g.back() = hi;
    return g;
}

/// Recipe-specific data settings. Fields a recipe does not use are ignored.
struct RecipeData {
    // defC1
    SyntheticConfig synthetic;
    std::size_t test_n = 2000;
    // spurious_binary
    std::string cifar_dir;
    int neg_class = 0;
    int pos_class = 1;
    double spurious_gamma = 0.1;
    std::size_t max_train = 10000;
    std::size_t max_test = 2000;
    std::size_t standin_per_class = 5000;
    /// Per-class template strength of the stand-in. 1.5 puts weight-decay logistic regression near
    /// 15% test error, roughly where raw-pixel logistic regression sits on CIFAR classes 0 vs 1.
    double standin_amplitude = 1.5;
    // colored_multiclass
    std::string mnist_dir;
    std::size_t hidden = 2048;
    int max_intensity = 16;
    // boundary2d
    std::size_t boundary_n = 500;
};

struct SweepConfig {
    Method method = Method::label_smoothing;
    std::vector<double> grid;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    Recipe recipe = Recipe::defC1;
    std::uint64_t master_seed = 0;
    TrainConfig train;
    RecipeData data;
    /// Added on top of the swept setting, e.g. a little weight decay under LS or Mixup.
    double base_weight_decay = 0.0;

    void validate() const {
        if (grid.empty()) throw ConfigError("sweep grid is empty");
        if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
        train.validate();
        require(base_weight_decay >= 0.0, "base weight decay must be non-negative");
        for (double v : grid) {
            require(std::isfinite(v) && v >= 0.0, "grid values must be finite and non-negative");
            if (method == Method::label_smoothing) require(v <= 1.0, "label smoothing alpha must be <= 1");
        }
    }
};

/// Paper defaults for a recipe and method: 20-point grids, 5 seeds, recipe training settings.
inline SweepConfig default_sweep_config(Recipe recipe, Method method) {
    SweepConfig c;
    c.recipe = recipe;
    c.method = method;
    switch (method) {
        case Method::weight_decay: c.grid = plan_grid(method, 0.0, 0.1, 20); break;
        case Method::label_smoothing: c.grid = plan_grid(method, 0.0, 0.75, 20); break;
        case Method::mixup: c.grid = plan_grid(method, 0.0, 8.0, 20); break;
    }
    c.train.optimizer.kind = OptimizerConfig::Kind::adamw;
    c.train.optimizer.lr = 5e-3;
    switch (recipe) {
        case Recipe::defC1:
            c.train.epochs = 100;
            c.train.batch_size = 500;
            break;
        case Recipe::spurious_binary:
            c.train.epochs = 200;
            c.train.batch_size = 1024;
            break;
        case Recipe::colored_multiclass:
            c.train.epochs = 20;
            c.train.batch_size = 1024;
            c.data.hidden = 2048;
            break;
        case Recipe::boundary2d:
            c.train.epochs = 500;
            c.train.batch_size = c.data.boundary_n;
            c.train.optimizer.kind = OptimizerConfig::Kind::sgd;
            c.train.optimizer.lr = 1e-2;
            if (method == Method::weight_decay) c.grid = {5e-4, 5e-3, 5e-2};
            if (method == Method::label_smoothing) c.grid = {0.1, 0.25, 0.5};
            if (method == Method::mixup) c.grid = {1.0, 2.0, 4.0};
            break;
    }
    return c;
}

/// Loss and optimizer for one grid value. Weight decay lives in the optimizer (decoupled for
/// AdamW, coupled for SGD).
inline std::pair<LossSpec, OptimizerConfig> cell_setup(const SweepConfig& cfg, double value) {
    OptimizerConfig opt = cfg.train.optimizer;
    opt.weight_decay = cfg.base_weight_decay;
    LossSpec spec = LossSpec::ce();
    switch (cfg.method) {
        case Method::weight_decay: opt.weight_decay += value; break;
        case Method::label_smoothing: spec = LossSpec::label_smoothing(value); break;
        case Method::mixup: spec = LossSpec::mixup(MixingDistribution::symmetric_beta_or_erm(value)); break;
    }
    return {spec, opt};
}

struct CellResult {
    std::size_t value_index = 0;
    std::size_t seed_index = 0;
    double value = 0.0;
    std::uint64_t seed = 0;
    std::string status = "pending";
    double test_error = std::numeric_limits<double>::quiet_NaN();
    double train_loss = std::numeric_limits<double>::quiet_NaN();
    double norm_L = std::numeric_limits<double>::quiet_NaN();
    double norm_H = std::numeric_limits<double>::quiet_NaN();
    double ratio_first = std::numeric_limits<double>::quiet_NaN();
    double output_variance = std::numeric_limits<double>::quiet_NaN();
    double target_output_variance = std::numeric_limits<double>::quiet_NaN();
    double activation_variance = std::numeric_limits<double>::quiet_NaN();
    double angle_deg = std::numeric_limits<double>::quiet_NaN();
    std::vector<EpochRecord> epochs;
    std::vector<DiagnosticSample> series;

    bool ok() const { return status == "ok"; }
};

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"test_error",      "train_loss",
                                                "norm_L",          "norm_H",
                                                "ratio_first",     "output_variance",
                                                "target_output_variance", "activation_variance",
                                                "angle_deg"};
    return names;
}

inline double metric(const CellResult& c, const std::string& name) {
    if (name == "test_error") return c.test_error;
    if (name == "train_loss") return c.train_loss;
    if (name == "norm_L") return c.norm_L;
    if (name == "norm_H") return c.norm_H;
    if (name == "ratio_first") return c.ratio_first;
    if (name == "output_variance") return c.output_variance;
    if (name == "target_output_variance") return c.target_output_variance;
    if (name == "activation_variance") return c.activation_variance;
    if (name == "angle_deg") return c.angle_deg;
    throw ConfigError("unknown metric '" + name + "'");
}

struct Aggregate {
    std::size_t value_index = 0;
    double value = 0.0;
    std::size_t count = 0;
    std::size_t failed = 0;
    std::map<std::string, std::pair<double, double>> stats;  // mean, std (ddof 0)

    double mean_of(const std::string& m) const { return stats.at(m).first; }
    double std_of(const std::string& m) const { return stats.at(m).second; }
};

struct SweepResult {
    SweepConfig config;
    /// Value-major: cell (v, s) sits at v * seeds + s.
    std::vector<CellResult> cells;
    std::vector<Aggregate> aggregates;

    const CellResult& cell(std::size_t v, std::size_t s) const { return cells.at(v * config.seeds.size() + s); }
    std::size_t failed() const {
        return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return !c.ok(); }));
    }
};

/// Mean and population std over finite values; NaN when none.
inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double x : xs)
        if (std::isfinite(x)) {
            sum += x;
            ++n;
        }
    if (n == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double x : xs)
        if (std::isfinite(x)) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(n))};
}

inline std::vector<Aggregate> aggregate_cells(const SweepConfig& cfg, const std::vector<CellResult>& cells) {
    std::vector<Aggregate> out;
    const std::size_t ns = cfg.seeds.size();
    for (std::size_t v = 0; v < cfg.grid.size(); ++v) {
        Aggregate a;
        a.value_index = v;
        a.value = cfg.grid[v];
        for (const auto& name : metric_names()) {
            std::vector<double> xs;
            for (std::size_t s = 0; s < ns; ++s) {
                const auto& c = cells[v * ns + s];
                if (c.ok()) xs.push_back(metric(c, name));
            }
            a.stats[name] = mean_std(xs);
        }
        for (std::size_t s = 0; s < ns; ++s) (cells[v * ns + s].ok() ? a.count : a.failed) += 1;
        out.push_back(std::move(a));
    }
    return out;
}

// Data preparation.

struct PreparedData {
    Dataset train;
    Dataset test;
};

namespace detail {

inline Dataset head_rows(const Dataset& ds, std::size_t n) {
    if (ds.n() <= n) return ds;
    Dataset out = ds;
    out.features = ds.features.topRows(static_cast<Eigen::Index>(n));
    out.labels.resize(n);
    return out;
}

inline std::string mnist_file(const std::string& dir, const char* name) {
    return (std::filesystem::path(dir) / name).string();
}

}  // namespace detail

/// True when the spurious-binary recipe would read real CIFAR-10 files from `dir`.
inline bool cifar_available(const std::string& dir) {
    namespace fs = std::filesystem;
    if (dir.empty()) return false;
    for (int b = 1; b <= 5; ++b)
        if (!fs::exists(fs::path(dir) / ("data_batch_" + std::to_string(b) + ".bin"))) return false;
    return fs::exists(fs::path(dir) / "test_batch.bin");
}

inline PreparedData prepare_spurious_binary(const RecipeData& d, std::uint64_t seed) {
    namespace fs = std::filesystem;
    ImageDataset train_img, test_img;
    if (cifar_available(d.cifar_dir)) {
        std::vector<std::string> paths;
        for (int b = 1; b <= 5; ++b) paths.push_back((fs::path(d.cifar_dir) / ("data_batch_" + std::to_string(b) + ".bin")).string());
        train_img = load_cifar10_binary(paths);
        test_img = load_cifar10_binary({(fs::path(d.cifar_dir) / "test_batch.bin").string()});
    } else {
        StandinConfig sc;
        sc.classes = std::max(d.neg_class, d.pos_class) + 1;
        sc.per_class = d.standin_per_class;
        sc.template_amplitude = d.standin_amplitude;
        sc.seed = seed;
        train_img = make_cifar_standin(sc);
        sc.per_class = std::max<std::size_t>(1, d.standin_per_class / 5);
        sc.seed = seed ^ 0x7e57ULL;
        test_img = make_cifar_standin(sc);
    }
    const Dataset train = detail::head_rows(select_binary_classes(train_img, d.neg_class, d.pos_class), d.max_train);
    const Dataset test = detail::head_rows(select_binary_classes(test_img, d.neg_class, d.pos_class), d.max_test);
    auto std_pair = standardize_channels(train, test, ChannelLayout::planar(3, kCifarSide * kCifarSide));
    PreparedData out{inject_spurious_dim(std_pair.train, d.spurious_gamma), std::move(std_pair.test)};
    out.test.low_var_dims = {0};
    return out;
}

inline PreparedData prepare_colored_multiclass(const RecipeData& d, std::uint64_t seed) {
    if (d.mnist_dir.empty()) throw ConfigError("colored_multiclass needs data.mnist_dir (MNIST IDX files)");
    auto train_img = load_mnist_idx(detail::mnist_file(d.mnist_dir, "train-images-idx3-ubyte"),
                                    detail::mnist_file(d.mnist_dir, "train-labels-idx1-ubyte"));
    auto test_img = load_mnist_idx(detail::mnist_file(d.mnist_dir, "t10k-images-idx3-ubyte"),
                                   detail::mnist_file(d.mnist_dir, "t10k-labels-idx1-ubyte"));
    const auto train_c = colorize_backgrounds(train_img, d.max_intensity, false, seed);
    const auto test_c = colorize_backgrounds(test_img, d.max_intensity, true, seed);
    const Dataset train = detail::head_rows(to_multiclass(train_c), d.max_train);
    const Dataset test = detail::head_rows(to_multiclass(test_c), d.max_test);
    auto std_pair = standardize_channels(train, test, ChannelLayout::planar(3, train_c.plane_size()));
    std_pair.train.name = "colored_mnist(train)";
    std_pair.test.name = "colored_mnist(test,permuted)";
    return {std::move(std_pair.train), std::move(std_pair.test)};
}

inline PreparedData prepare_data(const SweepConfig& cfg, std::uint64_t data_seed) {
    const auto& d = cfg.data;
    switch (cfg.recipe) {
        case Recipe::defC1: {
            SyntheticConfig sc = d.synthetic;
            sc.seed = data_seed;
            PreparedData out;
            out.train = sample_lowvar_highvar(sc);
            sc.n = d.test_n;
            sc.seed = data_seed ^ 0x7e57ULL;
            out.test = sample_lowvar_highvar(sc);
            return out;
        }
        case Recipe::spurious_binary: return prepare_spurious_binary(d, data_seed);
        case Recipe::colored_multiclass: return prepare_colored_multiclass(d, data_seed);
        case Recipe::boundary2d:
            return {sample_boundary_2d(d.boundary_n, data_seed), sample_boundary_2d(d.boundary_n, data_seed ^ 0x7e57ULL)};
    }
    throw ConfigError("unknown recipe");
}

/// Synthetic recipes resample data per seed; image recipes share one dataset across seeds.
inline bool data_per_seed(Recipe r) { return r == Recipe::defC1 || r == Recipe::boundary2d; }

inline std::uint64_t data_seed_for(const SweepConfig& cfg, std::size_t seed_index) {
    const std::uint64_t s = data_per_seed(cfg.recipe) ? cfg.seeds[seed_index] : 0;
    Rng rng = make_rng({cfg.master_seed, 0xda7aULL, s});
    return rng();
}

/// Training stream of cell (v, s): the first two draws of seed_seq(master, v, s) seed model
/// initialization and the shuffle/mixing streams.
inline std::pair<std::uint64_t, std::uint64_t> cell_seeds(const SweepConfig& cfg, std::size_t v, std::size_t s) {
    Rng rng = make_rng({cfg.master_seed, static_cast<std::uint64_t>(v), static_cast<std::uint64_t>(s), cfg.seeds[s]});
    const std::uint64_t init = rng();
    return {init, rng()};
}

namespace detail {

template <class Model>
void finish_cell(CellResult& c, const Model& model, const PreparedData& data, const TrainReport& rep) {
    c.epochs = rep.epochs;
    c.series = rep.samples;
    c.test_error = rep.final_test_error();
    c.train_loss = rep.final_train_loss();
    const auto last = detail::sample_diagnostics(model, data.train, data.test, rep.epochs.back().epoch);
    c.output_variance = last.output_variance;
    c.target_output_variance = last.target_output_variance;
    c.activation_variance = last.activation_variance;
    if constexpr (std::is_same_v<Model, LinearBinaryModel>) {
        c.norm_L = last.norm_L;
        c.norm_H = last.norm_H;
        c.ratio_first = last.ratio_first;
        const Vector& w = model.weights();
        if (w.size() == 2) c.angle_deg = std::atan2(std::abs(w(1)), std::abs(w(0))) * 180.0 / M_PI;
    }
}

/// `model_json`, when given, receives the trained model.
inline void run_cell(const SweepConfig& cfg, const PreparedData& data, CellResult& c, std::string* model_json = nullptr) {
    const auto [spec, opt] = cell_setup(cfg, c.value);
    const auto [init_seed, train_seed] = cell_seeds(cfg, c.value_index, c.seed_index);
    TrainConfig tc = cfg.train;
    tc.optimizer = opt;
    tc.seed = train_seed;
    try {
        if (cfg.recipe == Recipe::colored_multiclass) {
            auto model = MlpModel::init(data.train.d(), cfg.data.hidden, data.train.k, init_seed);
            const auto rep = fit(model, data.train, data.test, spec, tc);
            finish_cell(c, model, data, rep);
            if (model_json) *model_json = to_json(model);
        } else {
            auto model = LinearBinaryModel::init(data.train.d(), init_seed);
            const auto rep = fit(model, data.train, data.test, spec, tc);
            finish_cell(c, model, data, rep);
            if (model_json) *model_json = to_json(model);
        }
        c.status = "ok";
    } catch (const NumericError& e) {
        c.status = std::string("numeric_error: ") + e.what();
    }
}

}  // namespace detail

/// Runs every (grid value, seed) cell on `jobs` worker threads. Cells write to fixed slots, so the
/// result does not depend on scheduling. Numeric failures are recorded per cell.
inline SweepResult run_sweep(const SweepConfig& cfg, std::size_t jobs = 1) {
    cfg.validate();
    require(jobs >= 1, "jobs must be >= 1");
    SweepResult res;
    res.config = cfg;
    const std::size_t ns = cfg.seeds.size();

    std::map<std::uint64_t, PreparedData> data;
    std::vector<const PreparedData*> data_of(ns);
    for (std::size_t s = 0; s < ns; ++s) {
        const auto ds = data_seed_for(cfg, s);
        auto it = data.find(ds);
        if (it == data.end()) it = data.emplace(ds, prepare_data(cfg, ds)).first;
        data_of[s] = &it->second;
    }

    res.cells.resize(cfg.grid.size() * ns);
    for (std::size_t v = 0; v < cfg.grid.size(); ++v)
        for (std::size_t s = 0; s < ns; ++s) {
            auto& c = res.cells[v * ns + s];
            c.value_index = v;
            c.seed_index = s;
            c.value = cfg.grid[v];
            c.seed = cfg.seeds[s];
        }

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= res.cells.size()) return;
            try {
                detail::run_cell(cfg, *data_of[res.cells[i].seed_index], res.cells[i]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
                next = res.cells.size();
                return;
            }
        }
    };
    const std::size_t threads = std::min(jobs, res.cells.size());
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    res.aggregates = aggregate_cells(cfg, res.cells);
    return res;
}

// Serialization.

/// Schema version of config files; files may omit it.
inline constexpr int kConfigVersion = 1;

inline nlohmann::json to_json(const SweepConfig& c) {
    nlohmann::json j;
    j["method"] = to_string(c.method);
    j["recipe"] = to_string(c.recipe);
    j["grid"] = c.grid;
    j["seeds"] = c.seeds;
    j["master_seed"] = c.master_seed;
    j["base_weight_decay"] = c.base_weight_decay;
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"optimizer", c.train.optimizer.kind == OptimizerConfig::Kind::adamw ? "adamw" : "sgd"},
                  {"lr", c.train.optimizer.lr},
                  {"beta1", c.train.optimizer.beta1},
                  {"beta2", c.train.optimizer.beta2},
                  {"eps", c.train.optimizer.eps},
                  {"diagnostics_every", c.train.diagnostics_every}};
    const auto& d = c.data;
    j["data"] = {{"d", d.synthetic.d},
                 {"n", d.synthetic.n},
                 {"gamma", d.synthetic.gamma},
                 {"high_lo", d.synthetic.high_lo},
                 {"high_hi", d.synthetic.high_hi},
                 {"low_noise_width", d.synthetic.low_noise_width},
                 {"test_n", d.test_n},
                 {"cifar_dir", d.cifar_dir},
                 {"neg_class", d.neg_class},
                 {"pos_class", d.pos_class},
                 {"spurious_gamma", d.spurious_gamma},
                 {"max_train", d.max_train},
                 {"max_test", d.max_test},
                 {"standin_per_class", d.standin_per_class},
                 {"standin_amplitude", d.standin_amplitude},
                 {"mnist_dir", d.mnist_dir},
                 {"hidden", d.hidden},
                 {"max_intensity", d.max_intensity},
                 {"boundary_n", d.boundary_n}};
    return j;
}

namespace detail {

template <class T>
void take(const nlohmann::json& j, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

}  // namespace detail

/// Overlays a JSON document on `base`. Unknown keys are rejected so typos do not pass silently.
/// "grid" is either a list or {"lo","hi","count"}.
inline SweepConfig sweep_config_from_json(const nlohmann::json& j, SweepConfig base) {
    static const std::set<std::string> top{"method", "recipe", "grid", "seeds", "master_seed", "base_weight_decay", "train", "data", "version"};
    static const std::set<std::string> train_keys{"epochs", "batch_size", "optimizer", "lr", "beta1", "beta2", "eps", "diagnostics_every"};
    static const std::set<std::string> data_keys{"d", "n", "gamma", "high_lo", "high_hi", "low_noise_width", "test_n", "cifar_dir",
                                                 "neg_class", "pos_class", "spurious_gamma", "max_train", "max_test",
                                                 "standin_per_class", "standin_amplitude", "mnist_dir", "hidden", "max_intensity", "boundary_n"};
    if (!j.is_object()) throw ConfigError("sweep config must be a JSON object");
    auto check_keys = [](const nlohmann::json& o, const std::set<std::string>& allowed, const std::string& where) {
        if (!o.is_object()) throw ConfigError(where + " must be an object");
        for (const auto& [k, v] : o.items())
            if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
    };
    check_keys(j, top, "sweep config");
    if (j.contains("version") && j["version"] != kConfigVersion)
        throw ConfigError("config version " + j["version"].dump() + " is not supported (expected " + std::to_string(kConfigVersion) + ")");
    SweepConfig c = std::move(base);
    if (j.contains("method")) c.method = parse_method(j["method"].get<std::string>());
    if (j.contains("recipe")) c.recipe = parse_recipe(j["recipe"].get<std::string>());
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        if (g.is_array()) {
            detail::take(j, "grid", c.grid);
        } else {
            check_keys(g, {"lo", "hi", "count"}, "grid");
            double lo = 0, hi = 0;
            std::size_t count = 0;
            detail::take(g, "lo", lo);
            detail::take(g, "hi", hi);
            detail::take(g, "count", count);
            c.grid = plan_grid(c.method, lo, hi, count);
        }
    }
    detail::take(j, "seeds", c.seeds);
    detail::take(j, "master_seed", c.master_seed);
    detail::take(j, "base_weight_decay", c.base_weight_decay);
    if (j.contains("train")) {
        const auto& t = j["train"];
        check_keys(t, train_keys, "train");
        detail::take(t, "epochs", c.train.epochs);
        detail::take(t, "batch_size", c.train.batch_size);
        if (t.contains("optimizer")) {
            const auto k = t["optimizer"].get<std::string>();
            if (k == "adamw") c.train.optimizer.kind = OptimizerConfig::Kind::adamw;
            else if (k == "sgd") c.train.optimizer.kind = OptimizerConfig::Kind::sgd;
            else throw ConfigError("unknown optimizer '" + k + "' (adamw | sgd)");
        }
        detail::take(t, "lr", c.train.optimizer.lr);
        detail::take(t, "beta1", c.train.optimizer.beta1);
        detail::take(t, "beta2", c.train.optimizer.beta2);
        detail::take(t, "eps", c.train.optimizer.eps);
        detail::take(t, "diagnostics_every", c.train.diagnostics_every);
    }
    if (j.contains("data")) {
        const auto& dj = j["data"];
        check_keys(dj, data_keys, "data");
        auto& d = c.data;
        detail::take(dj, "d", d.synthetic.d);
        detail::take(dj, "n", d.synthetic.n);
        detail::take(dj, "gamma", d.synthetic.gamma);
        detail::take(dj, "high_lo", d.synthetic.high_lo);
        detail::take(dj, "high_hi", d.synthetic.high_hi);
        detail::take(dj, "low_noise_width", d.synthetic.low_noise_width);
        detail::take(dj, "test_n", d.test_n);
        detail::take(dj, "cifar_dir", d.cifar_dir);
        detail::take(dj, "neg_class", d.neg_class);
        detail::take(dj, "pos_class", d.pos_class);
        detail::take(dj, "spurious_gamma", d.spurious_gamma);
        detail::take(dj, "max_train", d.max_train);
        detail::take(dj, "max_test", d.max_test);
        detail::take(dj, "standin_per_class", d.standin_per_class);
        detail::take(dj, "standin_amplitude", d.standin_amplitude);
        detail::take(dj, "mnist_dir", d.mnist_dir);
        detail::take(dj, "hidden", d.hidden);
        detail::take(dj, "max_intensity", d.max_intensity);
        detail::take(dj, "boundary_n", d.boundary_n);
    }
    return c;
}

inline std::string csv_num(double v) { return std::isfinite(v) ? fmt17(v) : (std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf")); }

/// Status text is free-form; keep it CSV-safe.
inline std::string csv_text(std::string s) {
    for (auto& ch : s)
        if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ch = ';';
    return s;
}

inline std::string raw_csv(const SweepResult& r) {
    std::ostringstream o;
    o << "method,value,value_index,seed,seed_index,status";
    for (const auto& m : metric_names()) o << ',' << m;
    o << '\n';
    for (const auto& c : r.cells) {
        o << to_string(r.config.method) << ',' << fmt17(c.value) << ',' << c.value_index << ',' << c.seed << ','
          << c.seed_index << ',' << csv_text(c.status);
        for (const auto& m : metric_names()) o << ',' << csv_num(metric(c, m));
        o << '\n';
    }
    return o.str();
}

inline std::string aggregate_csv(const SweepResult& r) {
    std::ostringstream o;
    o << "method,value,value_index,count,failed";
    for (const auto& m : metric_names()) o << ',' << m << "_mean," << m << "_std";
    o << '\n';
    for (const auto& a : r.aggregates) {
        o << to_string(r.config.method) << ',' << fmt17(a.value) << ',' << a.value_index << ',' << a.count << ',' << a.failed;
        for (const auto& m : metric_names()) o << ',' << csv_num(a.mean_of(m)) << ',' << csv_num(a.std_of(m));
        o << '\n';
    }
    return o.str();
}

/// One row per diagnostic sample of every successful cell.
inline std::string timeseries_csv(const SweepResult& r) {
    std::ostringstream o;
    o << "method,value,value_index,seed_index,epoch,train_loss,test_error,activation_variance,output_variance,"
         "target_output_variance,norm_L,norm_H,ratio_first\n";
    for (const auto& c : r.cells) {
        if (!c.ok()) continue;
        for (const auto& s : c.series) {
            const auto& e = c.epochs.at(s.epoch);
            o << to_string(r.config.method) << ',' << fmt17(c.value) << ',' << c.value_index << ',' << c.seed_index << ','
              << s.epoch << ',' << csv_num(e.train_loss) << ',' << csv_num(e.test_error) << ','
              << csv_num(s.activation_variance) << ',' << csv_num(s.output_variance) << ','
              << csv_num(s.target_output_variance) << ',' << csv_num(s.norm_L) << ',' << csv_num(s.norm_H) << ','
              << csv_num(s.ratio_first) << '\n';
        }
    }
    return o.str();
}

inline std::string config_hash(const SweepConfig& c) { return hex64(fnv1a(to_json(c).dump())); }

inline constexpr const char* kRngScheme =
    "data: seed_seq(master, 0xda7a, seed or 0 for image recipes)[0]; "
    "cell (v,s): seed_seq(master, v, s, seeds[s]) -> [init, train]; "
    "train: shuffle seed_seq(train, 0x5f17), mixing seed_seq(train, 0x313)";

struct FileManifest {
    std::vector<std::string> files;
    std::string hash;
};

/// Writes raw.csv, aggregate.csv, timeseries.csv and manifest.json into out_dir.
inline FileManifest aggregate_and_write(const SweepResult& r, const std::string& out_dir) {
    namespace fs = std::filesystem;
    require(r.cells.size() == r.config.grid.size() * r.config.seeds.size(), "sweep result is incomplete");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error("cannot create output directory " + out_dir + ": " + ec.message());
    FileManifest m;
    m.hash = config_hash(r.config);
    auto put = [&](const std::string& name, const std::string& text) {
        const auto path = (fs::path(out_dir) / name).string();
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write " + path);
        f << text;
        if (!f) throw Error("write failed: " + path);
        m.files.push_back(path);
    };
    put("raw.csv", raw_csv(r));
    put("aggregate.csv", aggregate_csv(r));
    put("timeseries.csv", timeseries_csv(r));
    nlohmann::json j;
    j["tool"] = "lsmix";
    j["version"] = kVersion;
    j["config_version"] = kConfigVersion;
    j["config"] = to_json(r.config);
    j["config_hash"] = m.hash;
    j["rng_scheme"] = kRngScheme;
    j["cells"] = r.cells.size();
    j["failed_cells"] = r.failed();
    j["files"] = {"raw.csv", "aggregate.csv", "timeseries.csv"};
    put("manifest.json", j.dump(2) + "\n");
    return m;
}

}  // namespace lsmix
