// lsmix command-line front end.
//
// Exit codes: 0 ok, 1 configuration error, 2 data/parse error, 3 numeric failure,
// 4 verification-suite failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "lsmix/lsmix.hpp"

namespace fs = std::filesystem;
using namespace lsmix;

namespace {

constexpr int kExitOk = 0, kExitConfig = 1, kExitData = 2, kExitNumeric = 3, kExitVerify = 4;

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw ParseError("cannot write file: " + path.string());
    out << text;
    if (!out) throw ParseError("write failed: " + path.string());
}

std::vector<double> parse_grid(const std::string& text, Method m) {
    if (text.find(':') != std::string::npos) {
        const auto parts = split(text, ':');
        if (parts.size() != 3) throw ConfigError("--grid range must be lo:hi:count");
        return plan_grid(m, parse_double(parts[0]), parse_double(parts[1]), static_cast<std::size_t>(parse_double(parts[2])));
    }
    std::vector<double> out;
    for (const auto& p : split(text, ',')) out.push_back(parse_double(trim(p)));
    return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> out;
    for (const auto& p : split(text, ',')) {
        const auto t = trim(p);
        try {
            std::size_t used = 0;
            out.push_back(std::stoull(t, &used));
            if (used != t.size()) throw std::invalid_argument(t);
        } catch (const std::exception&) {
            throw ConfigError("bad seed '" + t + "' in --seeds");
        }
    }
    return out;
}

// Flags shared by train, sweep and boundary. Unset optionals leave the config file value alone.
struct RunFlags {
    std::string config;
    std::string recipe, method;
    std::string grid, seeds;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs, batch_size, diagnostics_every, n, d, hidden;
    std::optional<double> lr, base_weight_decay;
    std::string optimizer, mnist_dir, cifar_dir;
    std::string out = "out";
    std::size_t jobs = 1;

    void add_to(CLI::App* app, bool with_grid) {
        app->add_option("--config", config, "JSON config file (defaults < file < flags)");
        app->add_option("--recipe", recipe, "defC1 | spurious_binary | colored_multiclass | boundary2d");
        app->add_option("--method", method, "weight_decay | label_smoothing | mixup");
        if (with_grid) {
            app->add_option("--grid", grid, "comma list of values or lo:hi:count");
            app->add_option("--seeds", seeds, "comma list of per-cell seeds");
        }
        app->add_option("--seed", seed, "master seed");
        app->add_option("--epochs", epochs);
        app->add_option("--batch-size", batch_size);
        app->add_option("--diagnostics-every", diagnostics_every, "record diagnostics every k epochs (0 = final only)");
        app->add_option("--lr", lr);
        app->add_option("--optimizer", optimizer, "adamw | sgd");
        app->add_option("--base-weight-decay", base_weight_decay, "weight decay added to LS/Mixup runs");
        app->add_option("--n", n, "training set size (synthetic recipes)");
        app->add_option("--d", d, "dimension (defC1)");
        app->add_option("--hidden", hidden, "MLP hidden width (colored_multiclass)");
        app->add_option("--mnist-dir", mnist_dir, "directory with MNIST IDX files");
        app->add_option("--cifar-dir", cifar_dir, "directory with CIFAR-10 binary batches");
        app->add_option("--out", out, "output directory");
    }

    SweepConfig resolve() const {
        nlohmann::json j = nlohmann::json::object();
        if (!config.empty()) j = read_json_file(config);
        if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
        auto pick = [&](const std::string& flag, const char* key, const char* fallback) {
            if (!flag.empty()) return flag;
            if (j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
            return std::string(fallback);
        };
        const Recipe r = parse_recipe(pick(recipe, "recipe", "defC1"));
        const Method m = parse_method(pick(method, "method", "weight_decay"));
        SweepConfig c = sweep_config_from_json(j, default_sweep_config(r, m));
        c.recipe = r;
        c.method = m;
        if (!grid.empty()) c.grid = parse_grid(grid, m);
        if (!seeds.empty()) c.seeds = parse_seeds(seeds);
        if (seed) c.master_seed = *seed;
        if (epochs) c.train.epochs = *epochs;
        if (batch_size) c.train.batch_size = *batch_size;
        if (diagnostics_every) c.train.diagnostics_every = *diagnostics_every;
        if (lr) c.train.optimizer.lr = *lr;
        if (base_weight_decay) c.base_weight_decay = *base_weight_decay;
        if (!optimizer.empty()) {
            if (optimizer == "adamw") c.train.optimizer.kind = OptimizerConfig::Kind::adamw;
            else if (optimizer == "sgd") c.train.optimizer.kind = OptimizerConfig::Kind::sgd;
            else throw ConfigError("unknown optimizer '" + optimizer + "' (adamw | sgd)");
        }
        if (n) {
            c.data.synthetic.n = *n;
            c.data.boundary_n = *n;
        }
        if (d) c.data.synthetic.d = *d;
        if (hidden) c.data.hidden = *hidden;
        if (!mnist_dir.empty()) c.data.mnist_dir = mnist_dir;
        if (!cifar_dir.empty()) c.data.cifar_dir = cifar_dir;
        return c;
    }
};

nlohmann::json manifest_head(const char* command, const SweepConfig& c) {
    nlohmann::json j;
    j["tool"] = "lsmix";
    j["version"] = kVersion;
    j["command"] = command;
    j["config"] = to_json(c);
    j["config_hash"] = config_hash(c);
    j["rng_scheme"] = kRngScheme;
    return j;
}

std::string history_csv(const CellResult& c) {
    std::ostringstream o;
    o << "epoch,train_loss,test_error\n";
    for (const auto& e : c.epochs) o << e.epoch << ',' << csv_num(e.train_loss) << ',' << csv_num(e.test_error) << '\n';
    return o.str();
}

nlohmann::json cell_metrics(const CellResult& c) {
    nlohmann::json m;
    m["status"] = c.status;
    for (const auto& name : metric_names()) m[name] = detail::num(metric(c, name));
    return m;
}

/// Trains the single cell (value, seed) of `c` and returns the cell plus the model JSON.
std::pair<CellResult, std::string> train_one(SweepConfig& c, double value) {
    c.grid = {value};
    if (c.seeds.size() != 1) c.seeds = {c.seeds.empty() ? 1 : c.seeds.front()};
    c.validate();
    const auto data = prepare_data(c, data_seed_for(c, 0));
    CellResult cell;
    cell.value = value;
    cell.seed = c.seeds[0];
    std::string model;
    detail::run_cell(c, data, cell, &model);
    if (!cell.ok()) throw NumericError(cell.status);
    return {cell, model};
}

int cmd_train(const RunFlags& f, double value, std::uint64_t cell_seed) {
    SweepConfig c = f.resolve();
    c.seeds = {cell_seed};
    auto [cell, model] = train_one(c, value);
    const fs::path out(f.out);
    fs::create_directories(out);
    write_text(out / "model.json", model + "\n");
    write_text(out / "history.csv", history_csv(cell));
    auto j = manifest_head("train", c);
    j["value"] = value;
    j["metrics"] = cell_metrics(cell);
    j["files"] = {"model.json", "history.csv"};
    write_text(out / "manifest.json", j.dump(2) + "\n");
    std::cout << "test_error " << fmt17(cell.test_error) << "  train_loss " << fmt17(cell.train_loss) << "\n";
    for (const char* name : {"model.json", "history.csv", "manifest.json"}) std::cout << (out / name).string() << "\n";
    return kExitOk;
}

int cmd_sweep(const RunFlags& f) {
    SweepConfig c = f.resolve();
    c.validate();
    const auto r = run_sweep(c, std::max<std::size_t>(1, f.jobs));
    const auto man = aggregate_and_write(r, f.out);
    std::cout << to_string(c.method) << " on " << to_string(c.recipe) << ": " << r.cells.size() << " cells, " << r.failed()
              << " failed, hash " << man.hash << "\n";
    for (const auto& file : man.files) std::cout << file << "\n";
    return r.failed() == r.cells.size() ? kExitNumeric : kExitOk;
}

int cmd_boundary(const RunFlags& f, const std::string& model_path, double value, std::uint64_t cell_seed,
                 const std::vector<double>& region, std::size_t resolution) {
    if (region.size() != 4) throw ConfigError("--region needs x_min,x_max,y_min,y_max");
    const Region reg{region[0], region[1], region[2], region[3]};
    const fs::path out(f.out);
    nlohmann::json j;
    LinearBinaryModel model;
    if (!model_path.empty()) {
        model = load_model<LinearBinaryModel>(model_path);
        j["tool"] = "lsmix";
        j["version"] = kVersion;
        j["command"] = "boundary";
        j["model"] = model_path;
    } else {
        RunFlags g = f;
        if (g.recipe.empty()) g.recipe = "boundary2d";
        SweepConfig c = g.resolve();
        c.seeds = {cell_seed};
        auto [cell, text] = train_one(c, value);
        model = model_from_json<LinearBinaryModel>(text);
        j = manifest_head("boundary", c);
        j["value"] = value;
        j["metrics"] = cell_metrics(cell);
    }
    const auto g = boundary_grid(model, reg, resolution);
    fs::create_directories(out);
    write_boundary_csv(g, (out / "boundary.csv").string());
    write_text(out / "model.json", to_json(model) + "\n");
    j["region"] = region;
    j["resolution"] = resolution;
    j["angle_deg"] = detail::num(g.angle_deg);
    j["files"] = {"boundary.csv", "model.json"};
    write_text(out / "manifest.json", j.dump(2) + "\n");
    std::cout << "angle_deg " << fmt17(g.angle_deg) << "\n";
    for (const char* name : {"boundary.csv", "model.json", "manifest.json"}) std::cout << (out / name).string() << "\n";
    return kExitOk;
}

int cmd_verify(const std::vector<std::string>& suites, std::uint64_t seed, const std::string& out) {
    std::vector<std::string> names = suites;
    if (names.empty() || (names.size() == 1 && names[0] == "all")) names = verify_suite_names();
    fs::create_directories(out);
    bool all_ok = true;
    nlohmann::json report = nlohmann::json::array();
    for (const auto& name : names) {
        const auto r = run_verify_suite(name, {seed, out});
        all_ok = all_ok && r.ok();
        std::cout << (r.ok() ? "PASS " : "FAIL ") << r.name << ": " << r.passed << "/" << r.checks << " checks passed\n";
        if (!r.note.empty()) std::cout << "  " << r.note << "\n";
        for (const auto& msg : r.failures) std::cout << "  " << msg << "\n";
        report.push_back({{"suite", r.name}, {"checks", r.checks}, {"passed", r.passed}, {"worst", detail::num(r.worst)},
                          {"failures", r.failures}});
    }
    const fs::path path = fs::path(out) / "verify.json";
    write_text(path, nlohmann::json{{"tool", "lsmix"}, {"version", kVersion}, {"seed", seed}, {"suites", report}}.dump(2) + "\n");
    std::cout << path.string() << "\n";
    return all_ok ? kExitOk : kExitVerify;
}

void print_image_summary(const ImageDataset& ds, const std::string& what) {
    std::map<int, std::size_t> counts;
    for (int y : ds.labels) ++counts[y];
    nlohmann::json j{{"source", what}, {"n", ds.n()}, {"height", ds.height}, {"width", ds.width}, {"channels", ds.channels}};
    for (const auto& [y, c] : counts) j["label_counts"][std::to_string(y)] = c;
    std::cout << j.dump(2) << "\n";
}

int cmd_data_gen(const std::string& kind, const SyntheticConfig& sc, std::size_t per_class, double amplitude,
                 const std::string& out) {
    if (out.empty()) throw ConfigError("data gen needs --out");
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    if (kind == "lowvar") {
        write_dataset_csv(sample_lowvar_highvar(sc), out);
    } else if (kind == "boundary2d") {
        write_dataset_csv(sample_boundary_2d(sc.n, sc.seed), out);
    } else if (kind == "standin") {
        StandinConfig st;
        st.per_class = per_class;
        st.template_amplitude = amplitude;
        st.seed = sc.seed;
        write_cifar10_binary(make_cifar_standin(st), out);
    } else {
        throw ConfigError("unknown data kind '" + kind + "' (lowvar | boundary2d | standin)");
    }
    std::cout << out << "\n";
    return kExitOk;
}

int run(int argc, char** argv) {
    CLI::App app{"lsmix: label smoothing and Mixup versus weight decay, at desk scale"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    // data
    auto* data = app.add_subcommand("data", "generate or inspect datasets");
    data->require_subcommand(1);
    auto* gen = data->add_subcommand("gen", "write a synthetic dataset (CSV) or CIFAR-format stand-in");
    std::string gen_kind = "lowvar", gen_out;
    SyntheticConfig sc;
    std::size_t per_class = 5000;
    double amplitude = RecipeData{}.standin_amplitude;
    gen->add_option("--kind", gen_kind, "lowvar | boundary2d | standin");
    gen->add_option("--n", sc.n);
    gen->add_option("--d", sc.d);
    gen->add_option("--gamma", sc.gamma, "low-variance coordinate magnitude");
    gen->add_option("--high-lo", sc.high_lo);
    gen->add_option("--high-hi", sc.high_hi);
    gen->add_option("--low-noise", sc.low_noise_width, "uniform noise width on low-variance dims");
    gen->add_option("--per-class", per_class, "stand-in images per class");
    gen->add_option("--amplitude", amplitude, "stand-in class template amplitude");
    gen->add_option("--seed", sc.seed);
    gen->add_option("--out", gen_out, "output file")->required();

    auto* lm = data->add_subcommand("load-mnist", "parse MNIST IDX files and print a summary");
    std::string images, labels;
    lm->add_option("--images", images)->required();
    lm->add_option("--labels", labels, "defaults to the images path with images-idx3 replaced by labels-idx1");
    std::uint64_t unused_seed = 0;
    lm->add_option("--seed", unused_seed, "accepted for uniformity; loading is deterministic");

    auto* lc = data->add_subcommand("load-cifar", "parse CIFAR-10 binary batches and print a summary");
    std::vector<std::string> batches;
    lc->add_option("--batch", batches, "batch file (repeatable)")->required();
    lc->add_option("--seed", unused_seed, "accepted for uniformity; loading is deterministic");

    // train
    auto* train = app.add_subcommand("train", "train one model and save it");
    RunFlags train_flags;
    train_flags.add_to(train, false);
    double train_value = 0.0;
    std::uint64_t train_cell_seed = 1;
    train->add_option("--value", train_value, "regularization strength (WD lambda, LS alpha or Mixup Beta alpha)");
    train->add_option("--cell-seed", train_cell_seed, "per-run seed (the sweep's seeds entry)");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "grid x seeds sweep with CSV and manifest output");
    RunFlags sweep_flags;
    sweep_flags.add_to(sweep, true);
    sweep->add_option("--jobs", sweep_flags.jobs, "worker threads");

    // verify
    auto* verify = app.add_subcommand("verify", "run property suites");
    std::vector<std::string> suites;
    std::uint64_t verify_seed = 0;
    std::string verify_out = "verify_out";
    verify->add_option("--suite", suites, "suite name (repeatable) or all");
    verify->add_option("--seed", verify_seed);
    verify->add_option("--out", verify_out, "directory for scratch files and verify.json");

    // boundary
    auto* boundary = app.add_subcommand("boundary", "export a 2-D decision boundary grid");
    RunFlags boundary_flags;
    boundary_flags.add_to(boundary, false);
    std::string boundary_model;
    double boundary_value = 5e-4;
    std::uint64_t boundary_cell_seed = 1;
    std::vector<double> region{-1.0, 1.0, -1.0, 1.0};
    std::size_t resolution = 100;
    boundary->add_option("--model", boundary_model, "saved linear model; otherwise one is trained");
    boundary->add_option("--value", boundary_value, "regularization strength when training");
    boundary->add_option("--cell-seed", boundary_cell_seed);
    boundary->add_option("--region", region, "x_min,x_max,y_min,y_max")->delimiter(',')->expected(4);
    boundary->add_option("--resolution", resolution);

    // plot
    auto* plot = app.add_subcommand("plot", "render CSV output as a static SVG");
    std::string plot_kind = "sweep_curve", plot_out = "plot.svg";
    std::vector<std::string> csvs;
    PlotOptions popt;
    plot->add_option("--kind", plot_kind, "sweep_curve | boundary_heatmap | variance_timeseries");
    plot->add_option("--csv", csvs, "input CSV (repeatable for sweep_curve overlays)")->required();
    plot->add_option("--out", plot_out);
    plot->add_option("--metric", popt.metric);
    plot->add_option("--title", popt.title);
    plot->add_option("--seed", unused_seed, "accepted for uniformity; plotting is deterministic");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (data->got_subcommand(gen)) return cmd_data_gen(gen_kind, sc, per_class, amplitude, gen_out);
    if (data->got_subcommand(lm)) {
        if (labels.empty()) {
            labels = images;
            const auto pos = labels.find("images-idx3");
            if (pos == std::string::npos) {
                // Surface the images problem first; a missing file is a data error.
                if (!fs::exists(images)) throw ParseError("cannot open file: " + images);
                throw ConfigError("cannot infer --labels from '" + images + "'");
            }
            labels.replace(pos, 11, "labels-idx1");
        }
        print_image_summary(load_mnist_idx(images, labels), images);
        return kExitOk;
    }
    if (data->got_subcommand(lc)) {
        print_image_summary(load_cifar10_binary(batches), batches.front());
        return kExitOk;
    }
    if (app.got_subcommand(train)) return cmd_train(train_flags, train_value, train_cell_seed);
    if (app.got_subcommand(sweep)) return cmd_sweep(sweep_flags);
    if (app.got_subcommand(verify)) return cmd_verify(suites, verify_seed, verify_out);
    if (app.got_subcommand(boundary))
        return cmd_boundary(boundary_flags, boundary_model, boundary_value, boundary_cell_seed, region, resolution);
    if (app.got_subcommand(plot)) {
        emit_svg_plot(csvs, parse_plot_kind(plot_kind), plot_out, popt);
        std::cout << plot_out << "\n";
        return kExitOk;
    }
    return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}
