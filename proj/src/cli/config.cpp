#include "tedl/cli.hpp"

#include "tedl/errors.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace tedl::cli {

namespace {

using nlohmann::json;

// Reads typed values from a flat JSON object, remembering which keys were
// consumed and collecting every problem instead of stopping at the first.
class Reader {
public:
    explicit Reader(const json& doc) : doc_(doc) {}

    bool has(const std::string& key) const { return doc_.contains(key) && !doc_.at(key).is_null(); }

    template <class F>
    void with(const std::string& key, const char* expected, F&& take) {
        seen_.insert(key);
        if (!has(key)) return;
        const json& v = doc_.at(key);
        if (!take(v)) fail(key + ": expected " + expected + ", got " + v.dump());
    }

    void number(const std::string& key, double& out) {
        with(key, "a number", [&](const json& v) {
            if (!v.is_number()) return false;
            out = v.get<double>();
            return true;
        });
    }

    void count(const std::string& key, std::size_t& out) {
        with(key, "a non-negative integer", [&](const json& v) {
            if (v.is_number_unsigned()) {
                out = v.get<std::size_t>();
                return true;
            }
            if (v.is_number_integer() && v.get<long long>() >= 0) {
                out = static_cast<std::size_t>(v.get<long long>());
                return true;
            }
            return false;
        });
    }

    void seed(const std::string& key, std::uint64_t& out) {
        with(key, "a non-negative integer", [&](const json& v) {
            if (v.is_number_unsigned()) {
                out = v.get<std::uint64_t>();
                return true;
            }
            if (v.is_number_integer() && v.get<long long>() >= 0) {
                out = static_cast<std::uint64_t>(v.get<long long>());
                return true;
            }
            return false;
        });
    }

    void flag(const std::string& key, bool& out) {
        with(key, "true or false", [&](const json& v) {
            if (!v.is_boolean()) return false;
            out = v.get<bool>();
            return true;
        });
    }

    void text(const std::string& key, std::string& out) {
        with(key, "a string", [&](const json& v) {
            if (!v.is_string()) return false;
            out = v.get<std::string>();
            return true;
        });
    }

    template <class T, class Parse>
    void tag(const std::string& key, T& out, Parse&& parse, const char* choices) {
        with(key, choices, [&](const json& v) {
            if (!v.is_string()) return false;
            const auto parsed = parse(v.get<std::string>());
            if (!parsed) return false;
            out = *parsed;
            return true;
        });
    }

    void fail(std::string message) { errors_.push_back(std::move(message)); }

    void reject_unknown() {
        for (const auto& [key, value] : doc_.items())
            if (!seen_.count(key)) fail("unknown key \"" + key + "\"");
    }

    std::vector<std::string>& errors() { return errors_; }

private:
    const json& doc_;
    std::set<std::string> seen_;
    std::vector<std::string> errors_;
};

std::optional<NoiseScope> parse_scope(std::string_view s) {
    if (s == "train") return NoiseScope::train;
    if (s == "all") return NoiseScope::all;
    return std::nullopt;
}

std::string_view to_string(NoiseScope s) { return s == NoiseScope::train ? "train" : "all"; }

// Splits a ConfigError message from validate() back into its bullet lines.
void absorb_plan_errors(const TrainPlan& plan, Reader& r) {
    try {
        validate(plan);
    } catch (const ConfigError& e) {
        std::istringstream lines(e.what());
        std::string line;
        while (std::getline(lines, line))
            if (line.rfind("  - ", 0) == 0) r.fail(line.substr(4));
    }
}

} // namespace

RunConfig parse_config(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    Reader r(doc);
    RunConfig c;
    TrainPlan& p = c.plan;

    r.tag("mode", p.mode, parse_mode, "one of ce_only, edl_only, tedl");
    r.count("stage1_epochs", p.stage1_epochs);
    r.count("stage2_epochs", p.stage2_epochs);
    r.number("lambda", p.lambda);
    r.count("batch_size", p.batch_size);
    r.seed("seed", p.seed);
    r.tag("stage1_optimizer", p.stage1_optimizer.kind, parse_optimizer, "sgd or adam");
    r.number("stage1_learning_rate", p.stage1_optimizer.learning_rate);
    r.tag("stage2_optimizer", p.stage2_optimizer.kind, parse_optimizer, "sgd or adam");
    r.number("stage2_learning_rate", p.stage2_optimizer.learning_rate);
    double beta1 = p.stage1_optimizer.beta1, beta2 = p.stage1_optimizer.beta2, eps = p.stage1_optimizer.epsilon;
    r.number("adam_beta1", beta1);
    r.number("adam_beta2", beta2);
    r.number("adam_epsilon", eps);
    for (auto* o : {&p.stage1_optimizer, &p.stage2_optimizer}) {
        o->beta1 = beta1;
        o->beta2 = beta2;
        o->epsilon = eps;
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0)) r.fail("adam_beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) r.fail("adam_beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) r.fail("adam_epsilon must be positive");

    r.with("evidence_head_stage2", "relu_evidence or elu_evidence", [&](const json& v) {
        if (!v.is_string()) return false;
        const auto h = parse_head(v.get<std::string>());
        if (!h || !is_evidence_head(*h)) return false;
        p.evidence_head_stage2 = *h;
        return true;
    });
    r.tag("init_mode", p.init.mode, parse_init_mode, "standard or hostile");
    r.number("hostile_bias", p.init.hostile_bias);

    Activation hidden_act = p.hidden.empty() ? Activation::relu : p.hidden.front().activation;
    r.tag("hidden_activation", hidden_act, parse_activation, "one of identity, tanh, relu, elu");
    std::vector<std::size_t> units;
    for (const auto& h : p.hidden) units.push_back(h.units);
    r.with("hidden_units", "an array of positive integers", [&](const json& v) {
        if (!v.is_array()) return false;
        units.clear();
        for (const auto& u : v) {
            if (!u.is_number_integer() || u.get<long long>() < 1) return false;
            units.push_back(u.get<std::size_t>());
        }
        return true;
    });
    p.hidden.clear();
    for (auto u : units) p.hidden.push_back({u, hidden_act});

    r.count("histogram_bins", p.report.histogram_bins);
    r.with("thresholds", "a strictly increasing array of positive numbers", [&](const json& v) {
        if (!v.is_array()) return false;
        p.report.thresholds.clear();
        for (const auto& t : v) {
            if (!t.is_number() || !(t.get<double>() > 0.0)) return false;
            if (!p.report.thresholds.empty() && !(t.get<double>() > p.report.thresholds.back())) return false;
            p.report.thresholds.push_back(t.get<double>());
        }
        return true;
    });

    DataSource& d = c.data;
    std::string csv, validation_csv;
    r.text("data_csv", csv);
    r.text("validation_csv", validation_csv);
    if (!csv.empty()) d.csv = csv;
    if (!validation_csv.empty()) d.validation_csv = validation_csv;
    std::string kind = "blobs";
    r.text("data_kind", kind);
    if (kind != "blobs") r.fail("data_kind: only \"blobs\" can be generated for training");
    d.blobs = BlobParams{20000, 10, 2, 2.2, 0.1, false, p.seed};
    r.count("data_n", d.blobs.n);
    r.count("data_dims", d.blobs.dims);
    r.count("data_classes", d.blobs.classes);
    r.number("data_separation", d.blobs.separation);
    r.number("data_label_noise", d.blobs.label_noise);
    r.flag("data_soft", d.blobs.soft);
    d.seed_follows_run = !r.has("data_seed");
    r.seed("data_seed", d.blobs.seed);
    r.tag("label_noise_scope", d.noise_scope, parse_scope, "train or all");
    r.number("train_fraction", d.split.train_fraction);
    r.number("validation_fraction", d.split.validation_fraction);
    d.split.seed = p.seed;
    d.split_seed_follows_run = !r.has("split_seed");
    r.seed("split_seed", d.split.seed);

    if (d.validation_csv && !d.csv) r.fail("validation_csv needs data_csv");
    for (const auto* path : {&d.csv, &d.validation_csv})
        if (*path && !std::filesystem::is_regular_file(**path)) r.fail("dataset file not found: " + (*path)->string());
    if (!d.csv) {
        if (d.blobs.n == 0) r.fail("data_n must be >= 1");
        if (d.blobs.dims == 0) r.fail("data_dims must be >= 1");
        if (d.blobs.classes < 2) r.fail("data_classes must be >= 2");
        if (d.blobs.classes > 2 && d.blobs.dims < 2) r.fail("data_dims must be >= 2 for more than 2 classes");
        if (!(d.blobs.separation > 0.0)) r.fail("data_separation must be positive");
        if (!(d.blobs.label_noise >= 0.0 && d.blobs.label_noise <= 1.0)) r.fail("data_label_noise must lie in [0, 1]");
    }
    if (!d.validation_csv) {
        const SplitSpec& s = d.split;
        if (!(s.train_fraction > 0.0) || !(s.validation_fraction > 0.0) ||
            s.train_fraction + s.validation_fraction > 1.0 + 1e-12)
            r.fail("train_fraction and validation_fraction must be positive and sum to at most 1");
    }

    std::string out_dir = c.out_dir.string();
    r.text("out_dir", out_dir);
    c.out_dir = out_dir;
    r.with("report_formats", "an array containing \"csv\" and/or \"json\"", [&](const json& v) {
        if (!v.is_array() || v.empty()) return false;
        c.write_csv = c.write_json = false;
        for (const auto& f : v) {
            if (f == "csv")
                c.write_csv = true;
            else if (f == "json")
                c.write_json = true;
            else
                return false;
        }
        return true;
    });

    absorb_plan_errors(p, r);
    r.reject_unknown();
    if (!r.errors().empty()) {
        std::string msg = "invalid config (" + std::to_string(r.errors().size()) + " problem" +
                          (r.errors().size() == 1 ? "" : "s") + "):";
        for (const auto& e : r.errors()) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

json to_json(const RunConfig& c) {
    const TrainPlan& p = c.plan;
    json j;
    j["mode"] = to_string(p.mode);
    j["stage1_epochs"] = p.stage1_epochs;
    j["stage2_epochs"] = p.stage2_epochs;
    j["lambda"] = p.lambda;
    j["batch_size"] = p.batch_size;
    j["seed"] = p.seed;
    j["stage1_optimizer"] = to_string(p.stage1_optimizer.kind);
    j["stage1_learning_rate"] = p.stage1_optimizer.learning_rate;
    j["stage2_optimizer"] = to_string(p.stage2_optimizer.kind);
    j["stage2_learning_rate"] = p.stage2_optimizer.learning_rate;
    j["adam_beta1"] = p.stage1_optimizer.beta1;
    j["adam_beta2"] = p.stage1_optimizer.beta2;
    j["adam_epsilon"] = p.stage1_optimizer.epsilon;
    j["evidence_head_stage2"] = to_string(stage2_head(p));
    j["init_mode"] = to_string(p.init.mode);
    j["hostile_bias"] = p.init.hostile_bias;
    json units = json::array();
    for (const auto& h : p.hidden) units.push_back(h.units);
    j["hidden_units"] = units;
    j["hidden_activation"] = to_string(p.hidden.empty() ? Activation::relu : p.hidden.front().activation);
    j["histogram_bins"] = p.report.histogram_bins;
    if (!p.report.thresholds.empty()) j["thresholds"] = p.report.thresholds;

    const DataSource& d = c.data;
    if (d.csv) j["data_csv"] = d.csv->string();
    if (d.validation_csv) j["validation_csv"] = d.validation_csv->string();
    if (!d.csv) {
        j["data_kind"] = "blobs";
        j["data_n"] = d.blobs.n;
        j["data_dims"] = d.blobs.dims;
        j["data_classes"] = d.blobs.classes;
        j["data_separation"] = d.blobs.separation;
        j["data_label_noise"] = d.blobs.label_noise;
        j["data_soft"] = d.blobs.soft;
        j["data_seed"] = d.blobs.seed;
        j["label_noise_scope"] = to_string(d.noise_scope);
    }
    if (!d.validation_csv) {
        j["train_fraction"] = d.split.train_fraction;
        j["validation_fraction"] = d.split.validation_fraction;
        j["split_seed"] = d.split.seed;
    }
    j["out_dir"] = c.out_dir.string();
    json formats = json::array();
    if (c.write_csv) formats.push_back("csv");
    if (c.write_json) formats.push_back("json");
    j["report_formats"] = formats;
    return j;
}

bool apply_seed_override(RunConfig& c) {
    const char* env = std::getenv("EVIDENTIAL_SEED");
    if (!env || !*env) return false;
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (errno != 0 || *end != '\0' || env[0] == '-')
        throw ConfigError(std::string("EVIDENTIAL_SEED must be a non-negative integer, got \"") + env + "\"");
    c.plan.seed = v;
    if (c.data.seed_follows_run) c.data.blobs.seed = v;
    if (c.data.split_seed_follows_run) c.data.split.seed = v;
    return true;
}

std::pair<Dataset, Dataset> materialize(const DataSource& d) {
    if (d.csv) {
        Dataset all = load_csv(*d.csv);
        if (d.validation_csv) return {std::move(all), load_csv(*d.validation_csv)};
        return split(all, d.split);
    }
    return blob_task(d.blobs, d.split, d.noise_scope);
}

} // namespace tedl::cli
