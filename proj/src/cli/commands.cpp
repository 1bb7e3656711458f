#include "tedl/cli.hpp"

#include "tedl/errors.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <thread>

namespace tedl::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

// Shortest decimal text that reads back as the same double.
std::string short_fmt(double v) {
    char buf[32];
    for (int precision = 1; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

struct GenArgs {
    std::string kind = "blobs";
    std::size_t n = 1000;
    std::size_t dims = 2;
    std::size_t classes = 2;
    double separation = 4.0;
    double noise = 0.0;
    bool soft = false;
    std::uint64_t seed = 0;
    double radius = 100.0;
    std::string out = ".";
    std::string name;
};

int cmd_gen(const GenArgs& a) {
    Dataset ds;
    json params;
    if (a.kind == "blobs") {
        ds = gen_blobs({a.n, a.dims, a.classes, a.separation, a.noise, a.soft, a.seed});
        params = {{"n", a.n},          {"dims", a.dims},    {"classes", a.classes}, {"separation", a.separation},
                  {"label_noise", a.noise}, {"soft", a.soft}, {"seed", a.seed}};
    } else {
        ds = gen_ood_ring(a.n, a.dims, a.radius, a.seed, a.classes);
        params = {{"n", a.n}, {"dims", a.dims}, {"classes", a.classes}, {"radius", a.radius}, {"seed", a.seed}};
    }
    const std::string stem = a.name.empty() ? a.kind : a.name;
    const fs::path dir = a.out;
    const std::string csv = to_csv(ds);
    write_atomic(dir / (stem + ".csv"), csv);
    const json manifest{{"kind", a.kind},
                        {"params", params},
                        {"rows", ds.size()},
                        {"file", stem + ".csv"},
                        {"checksum", crc32_hex(csv)},
                        {"features_only", ds.features_only()}};
    write_atomic(dir / (stem + ".manifest.json"), manifest.dump(1) + "\n");
    std::printf("wrote %s (%zu rows)\n", (dir / (stem + ".csv")).string().c_str(), ds.size());
    return ok;
}

RunConfig prepare_config(const std::string& path, const std::string& out_override) {
    RunConfig config = load_config(path);
    if (!out_override.empty()) config.out_dir = out_override;
    if (apply_seed_override(config))
        std::fprintf(stderr, "EVIDENTIAL_SEED overrides seed: %llu\n", static_cast<unsigned long long>(config.plan.seed));
    return config;
}

int cmd_train(const std::string& config_path, const std::string& out_override, bool verbose) {
    const RunConfig config = prepare_config(config_path, out_override);
    const auto [train, validation] = materialize(config.data);
    const RunResult r = train_to_directory(config, train, validation, verbose);
    for (const auto& s : r.summary)
        std::printf("%s: %zu epochs, final AUC %s -> %s\n", s.method.c_str(), s.epochs, fmt(s.final_auc).c_str(),
                    config.out_dir.string().c_str());
    return ok;
}

struct EvalArgs {
    std::string model;
    std::string data;
    std::string out = "eval";
    std::size_t bins = 20;
};

int cmd_eval(const EvalArgs& a) {
    const Network net = load_model(a.model);
    const Dataset ds = load_csv(a.data);
    if (ds.dims() != net.input_dim())
        throw ShapeError("model expects " + std::to_string(net.input_dim()) + " features, dataset has " +
                         std::to_string(ds.dims()));
    if (ds.classes() != net.classes())
        throw ShapeError("model has " + std::to_string(net.classes()) + " classes, dataset has " +
                         std::to_string(ds.classes()));

    Predictions pred = predict(net, ds.features);
    EvalReport report;
    ReportOptions options;
    options.histogram_bins = a.bins;
    if (ds.features_only()) {
        // No labels to rank against: only the uncertainty distribution is meaningful.
        report.method = "eval";
        report.stage = "ood";
        report.samples = ds.size();
        if (pred.uncertainty) report.uncertainty_histogram = uncertainty_histogram(*pred.uncertainty, a.bins);
    } else {
        EpochScores scores{0, "eval", "validation", std::move(pred.probs), std::move(pred.uncertainty),
                           ds.hard_labels()};
        report = evaluate_epoch(scores, options);
    }

    const fs::path dir = a.out;
    json j = report_to_json(report);
    j["model"] = a.model;
    j["data"] = a.data;
    j["features_only"] = ds.features_only();
    j["dead_evidence_frac"] = pred.dead_evidence_frac;
    write_atomic(dir / "eval_report.json", j.dump(1) + "\n");
    write_atomic(dir / "curves.csv", curve_csv({report}));
    write_atomic(dir / "histograms.csv", histogram_csv({report}));
    if (report.overall_auc)
        std::printf("overall_auc %s\n", fmt(report.overall_auc).c_str());
    else
        std::printf("overall_auc absent (%s)\n", ds.features_only() ? "features-only data" : "single-class data");
    return ok;
}

struct CompareArgs {
    std::string config;
    std::vector<std::string> methods;
    std::vector<double> lambdas;
    std::string out;
    unsigned jobs = 0;
};

struct CompareRun {
    Mode mode;
    std::optional<double> lambda;  // absent for ce_only
    RunConfig config;
    std::optional<RunResult> result;
    std::string error;
};

std::string lambda_label(const std::optional<double>& l) { return l ? short_fmt(*l) : std::string(); }

int cmd_compare(const CompareArgs& a) {
    if (a.methods.empty()) throw ConfigError("compare needs at least one method");
    std::vector<Mode> modes;
    for (const auto& m : a.methods) {
        const auto mode = parse_mode(m);
        if (!mode) throw ConfigError("unknown method \"" + m + "\" (expected ce, edl or tedl)");
        if (std::find(modes.begin(), modes.end(), *mode) == modes.end()) modes.push_back(*mode);
    }
    RunConfig base = prepare_config(a.config, a.out);
    std::vector<double> lambdas = a.lambdas.empty() ? std::vector<double>{base.plan.lambda} : a.lambdas;
    if (modes.size() < 2 && lambdas.size() < 2) throw ConfigError("compare needs at least 2 methods or 2 lambda values");
    for (double l : lambdas)
        if (!(l >= 0.0)) throw ConfigError("lambda values must be >= 0");

    // One dataset instantiation and one split shared by every run.
    const auto [train, validation] = materialize(base.data);

    std::vector<CompareRun> runs;
    for (Mode m : modes) {
        const std::vector<std::optional<double>> ls =
            m == Mode::ce_only ? std::vector<std::optional<double>>{std::nullopt}
                               : std::vector<std::optional<double>>(lambdas.begin(), lambdas.end());
        for (const auto& l : ls) {
            RunConfig c = base;
            c.plan.mode = m;
            if (l) c.plan.lambda = *l;
            c.out_dir = base.out_dir / (std::string(method_tag(m)) + (l ? "_lambda" + short_fmt(*l) : std::string()));
            runs.push_back({m, l, std::move(c), std::nullopt, {}});
        }
    }

    const unsigned workers = std::max(1u, std::min<unsigned>(a.jobs ? a.jobs : std::thread::hardware_concurrency(),
                                                             static_cast<unsigned>(runs.size())));
    std::atomic<std::size_t> next{0};
    std::mutex log;
    auto worker = [&] {
        for (std::size_t i; (i = next++) < runs.size();) {
            CompareRun& r = runs[i];
            try {
                r.result = train_to_directory(r.config, train, validation);
            } catch (const std::exception& e) {
                r.error = e.what();
            }
            std::lock_guard lock(log);
            std::fprintf(stderr, "%s lambda=%s: %s\n", std::string(method_tag(r.mode)).c_str(),
                         lambda_label(r.lambda).c_str(), r.error.empty() ? "done" : ("FAILED: " + r.error).c_str());
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::string table = "method,lambda,epoch,stage,overall_auc,status\n";
    std::string curves = "method,lambda,epoch,threshold,auc,count\n";
    json run_list = json::array();
    bool failed = false;
    for (const auto& r : runs) {
        const std::string method(method_tag(r.mode));
        const std::string lambda = lambda_label(r.lambda);
        if (!r.result) {
            failed = true;
            std::string msg = r.error;
            std::replace(msg.begin(), msg.end(), ',', ';');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            table += method + ',' + lambda + ",,,,failed: " + msg + '\n';
        } else {
            for (const auto& rep : r.result->reports) {
                table += method + ',' + lambda + ',' + std::to_string(rep.epoch) + ',' + rep.stage + ',' +
                         fmt(rep.overall_auc) + ",ok\n";
                for (const auto& p : rep.threshold_curve)
                    curves += method + ',' + lambda + ',' + std::to_string(rep.epoch) + ',' + fmt(p.threshold) + ',' +
                              fmt(p.auc) + ',' + std::to_string(p.count) + '\n';
            }
        }
        run_list.push_back({{"method", method},
                            {"lambda", r.lambda ? json(*r.lambda) : json(nullptr)},
                            {"dir", r.config.out_dir.string()},
                            {"status", r.result ? "ok" : "failed"},
                            {"error", r.error}});
    }
    write_atomic(base.out_dir / "compare.csv", table);
    write_atomic(base.out_dir / "curves.csv", curves);
    const json manifest{{"config", to_json(base)},
                        {"methods", a.methods},
                        {"lambdas", lambdas},
                        {"dataset_checksums",
                         {{"train", crc32_hex(to_csv(train))}, {"validation", crc32_hex(to_csv(validation))}}},
                        {"files", {{"compare.csv", crc32_hex(table)}, {"curves.csv", crc32_hex(curves)}}},
                        {"runs", run_list}};
    write_atomic(base.out_dir / "manifest.json", manifest.dump(1) + "\n");
    std::printf("%zu runs, %s -> %s\n", runs.size(), failed ? "some failed" : "all ok",
                (base.out_dir / "compare.csv").string().c_str());
    return failed ? runtime_failure : ok;
}

template <class F>
int guarded(F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return usage_error;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return usage_error;
    } catch (const DomainError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return usage_error;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return runtime_failure;
    }
}

} // namespace

int run(int argc, char** argv) {
    CLI::App app{"Two-stage evidential deep learning experiments"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a synthetic dataset (CSV plus manifest)");
    g->add_option("--kind", gen.kind, "blobs or ring")->check(CLI::IsMember({"blobs", "ring"}));
    g->add_option("--n", gen.n, "Number of rows")->check(CLI::Range(std::size_t{1}, std::size_t{100000000}));
    g->add_option("--dims,--d", gen.dims, "Feature dimension")->check(CLI::Range(std::size_t{1}, std::size_t{100000}));
    g->add_option("--k", gen.classes, "Number of classes")->check(CLI::Range(std::size_t{2}, std::size_t{100000}));
    g->add_option("--sep", gen.separation, "Distance between cluster centres")->check(CLI::PositiveNumber);
    g->add_option("--noise", gen.noise, "Label noise rate")->check(CLI::Range(0.0, 1.0));
    g->add_flag("--soft", gen.soft, "Posterior soft labels");
    g->add_option("--seed", gen.seed, "Random seed");
    g->add_option("--radius", gen.radius, "Ring radius")->check(CLI::PositiveNumber);
    g->add_option("--out", gen.out, "Output directory");
    g->add_option("--name", gen.name, "File stem (default: the kind)");

    std::string config_path, out_override;
    bool verbose = false;
    auto* t = app.add_subcommand("train", "Train one configuration");
    t->add_option("--config,config", config_path, "JSON config file")->required();
    t->add_option("--out", out_override, "Output directory (overrides out_dir)");
    t->add_flag("-v,--verbose", verbose, "Print per-epoch progress");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate a saved model on a dataset");
    e->add_option("--model", ev.model, "model.json")->required();
    e->add_option("--data", ev.data, "Dataset CSV")->required();
    e->add_option("--out", ev.out, "Output directory");
    e->add_option("--bins", ev.bins, "Histogram bins")->check(CLI::Range(std::size_t{1}, std::size_t{100000}));

    CompareArgs cmp;
    auto* c = app.add_subcommand("compare", "Run several methods and lambdas on one dataset");
    c->add_option("--config", cmp.config, "Base JSON config")->required();
    c->add_option("--methods", cmp.methods, "Methods: ce, edl, tedl")->delimiter(',')->required();
    c->add_option("--lambdas", cmp.lambdas, "Lambda values")->delimiter(',');
    c->add_option("--out", cmp.out, "Output directory (overrides out_dir)");
    c->add_option("--jobs", cmp.jobs, "Parallel runs (default: hardware threads)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? ok : usage_error;
    }

    if (*g) return guarded([&] { return cmd_gen(gen); });
    if (*t) return guarded([&] { return cmd_train(config_path, out_override, verbose); });
    if (*e) return guarded([&] { return cmd_eval(ev); });
    return guarded([&] { return cmd_compare(cmp); });
}

} // namespace tedl::cli
