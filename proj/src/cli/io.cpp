#include "tedl/cli.hpp"

#include "tedl/errors.hpp"

#include <boost/crc.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tedl::cli {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::vector<double> read_doubles(const json& a, std::size_t expected, const std::string& what) {
    if (!a.is_array() || a.size() != expected)
        throw DataError("model: " + what + " must be an array of " + std::to_string(expected) + " numbers");
    std::vector<double> out;
    out.reserve(expected);
    for (const auto& v : a) {
        if (!v.is_number()) throw DataError("model: " + what + " contains a non-number");
        out.push_back(v.get<double>());
    }
    return out;
}

} // namespace

std::string crc32_hex(const std::string& bytes) {
    boost::crc_32_type crc;
    crc.process_bytes(bytes.data(), bytes.size());
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", static_cast<unsigned>(crc.checksum()));
    return buf;
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write " + tmp.string());
        f << contents;
        f.flush();
        if (!f) throw DataError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

json model_to_json(const Network& net) {
    json layers = json::array();
    for (const Layer& l : net.layers()) {
        layers.push_back({{"fan_in", l.fan_in()},
                          {"fan_out", l.fan_out()},
                          {"activation", to_string(l.activation())},
                          {"weights", std::vector<double>(l.weights().values().begin(), l.weights().values().end())},
                          {"bias", std::vector<double>(l.bias().values().begin(), l.bias().values().end())}});
    }
    return {{"format", "tedl-model"},
            {"version", kModelFormatVersion},
            {"head", to_string(net.head())},
            {"classes", net.classes()},
            {"inputs", net.input_dim()},
            {"checksum", crc32_hex(layers.dump())},
            {"layers", layers}};
}

Network model_from_json(const json& doc) {
    if (!doc.is_object() || doc.value("format", "") != "tedl-model") throw DataError("not a tedl model file");
    if (!doc.contains("version") || !doc["version"].is_number_integer())
        throw DataError("model file has no format version");
    const int version = doc["version"].get<int>();
    if (version != kModelFormatVersion)
        throw DataError("unsupported model format version " + std::to_string(version) + " (expected " +
                        std::to_string(kModelFormatVersion) + ")");
    if (!doc.contains("layers") || !doc["layers"].is_array()) throw DataError("model file has no layers");
    const json& layers = doc["layers"];
    if (doc.value("checksum", "") != crc32_hex(layers.dump()))
        throw DataError("model checksum mismatch: file is corrupted or was edited");
    const auto head = parse_head(doc.value("head", ""));
    if (!head) throw DataError("model file has an unknown head");

    std::vector<Layer> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const json& l = layers[i];
        const std::string at = "layer " + std::to_string(i);
        const auto act = parse_activation(l.value("activation", ""));
        if (!act) throw DataError("model: " + at + " has an unknown activation");
        const std::size_t fi = l.value("fan_in", std::size_t{0}), fo = l.value("fan_out", std::size_t{0});
        Matrix w(fi, fo, read_doubles(l.value("weights", json()), fi * fo, at + " weights"));
        Matrix b(1, fo, read_doubles(l.value("bias", json()), fo, at + " bias"));
        out.emplace_back(std::move(w), std::move(b), *act);
    }
    try {
        return Network(std::move(out), *head);
    } catch (const ShapeError& e) {
        throw DataError(std::string("model: ") + e.what());
    }
}

void save_model(const Network& net, const std::filesystem::path& path) {
    write_atomic(path, model_to_json(net).dump(1) + "\n");
}

Network load_model(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open model " + path.string());
    json doc;
    try {
        doc = json::parse(f);
    } catch (const json::parse_error& e) {
        throw DataError("model " + path.string() + " is not valid JSON (corrupted?): " + e.what());
    }
    return model_from_json(doc);
}

std::string epochs_csv(const std::vector<EpochRecord>& records) {
    std::string out = "epoch,stage,loss_total,loss_base,loss_kl,lambda_t,grad_norm_mean,grad_norm_max,val_auc,"
                      "dead_evidence_frac\n";
    for (const auto& r : records) {
        out += std::to_string(r.epoch) + ',' + std::string(to_string(r.stage)) + ',' + fmt(r.loss_total) + ',' +
               fmt(r.loss_base) + ',' + fmt(r.loss_kl) + ',' + fmt(r.lambda_t) + ',' + fmt(r.grad_norm_mean) + ',' +
               fmt(r.grad_norm_max) + ',' + fmt(r.val_auc) + ',' + fmt(r.dead_evidence_frac) + '\n';
    }
    return out;
}

json report_to_json(const EvalReport& r) {
    json curve = json::array();
    for (const auto& p : r.threshold_curve)
        curve.push_back({{"threshold", p.threshold}, {"auc", optional_json(p.auc)}, {"count", p.count}});
    json j{{"epoch", r.epoch},
           {"method", r.method},
           {"stage", r.stage},
           {"samples", r.samples},
           {"overall_auc", optional_json(r.overall_auc)},
           {"threshold_curve", curve}};
    if (r.uncertainty_histogram)
        j["uncertainty_histogram"] = {{"upper", r.uncertainty_histogram->upper},
                                      {"counts", r.uncertainty_histogram->counts}};
    else
        j["uncertainty_histogram"] = nullptr;
    return j;
}

std::string curve_csv(const std::vector<EvalReport>& reports) {
    std::string out = "epoch,method,stage,threshold,auc,count\n";
    for (const auto& r : reports)
        for (const auto& p : r.threshold_curve)
            out += std::to_string(r.epoch) + ',' + r.method + ',' + r.stage + ',' + fmt(p.threshold) + ',' +
                   fmt(p.auc) + ',' + std::to_string(p.count) + '\n';
    return out;
}

std::string histogram_csv(const std::vector<EvalReport>& reports) {
    std::string out = "epoch,method,stage,bin_lower,bin_upper,count\n";
    for (const auto& r : reports) {
        if (!r.uncertainty_histogram) continue;
        const auto& h = *r.uncertainty_histogram;
        const double width = h.upper / static_cast<double>(h.counts.size());
        for (std::size_t b = 0; b < h.counts.size(); ++b)
            out += std::to_string(r.epoch) + ',' + r.method + ',' + r.stage + ',' + fmt(width * b) + ',' +
                   fmt(b + 1 == h.counts.size() ? h.upper : width * (b + 1)) + ',' + std::to_string(h.counts[b]) + '\n';
    }
    return out;
}

RunResult train_to_directory(const RunConfig& config, const Dataset& train, const Dataset& validation, bool verbose) {
    namespace fs = std::filesystem;
    const auto started = std::chrono::steady_clock::now();
    RunResult result = run_plan(config.plan, TrainData{train, validation});
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    const fs::path& dir = config.out_dir;
    fs::create_directories(dir);
    json files = json::object();
    auto emit = [&](const std::string& name, const std::string& contents) {
        write_atomic(dir / name, contents);
        files[name] = crc32_hex(contents);
    };

    emit("epochs.csv", epochs_csv(result.records));
    if (config.write_csv) {
        emit("curves.csv", curve_csv(result.reports));
        emit("histograms.csv", histogram_csv(result.reports));
    }
    if (config.write_json) {
        for (const auto& r : result.reports) {
            char name[48];
            std::snprintf(name, sizeof name, "reports/epoch_%03zu.json", r.epoch);
            json j = report_to_json(r);
            j["kl_labels_hardened"] = result.kl_labels_hardened;
            emit(name, j.dump(1) + "\n");
        }
    }
    const std::string model = model_to_json(result.network).dump(1) + "\n";
    emit("model.json", model);
    const std::string val_csv = to_csv(validation);
    emit("validation.csv", val_csv);

    json summary = json::array();
    for (const auto& s : result.summary)
        summary.push_back({{"method", s.method}, {"epochs", s.epochs}, {"final_auc", optional_json(s.final_auc)}});

    json manifest{{"config", to_json(config)},
                  {"seed", config.plan.seed},
                  {"files", files},
                  {"dataset_checksums", {{"train", crc32_hex(to_csv(train))}, {"validation", crc32_hex(val_csv)}}},
                  {"summary", summary},
                  {"kl_labels_hardened", result.kl_labels_hardened},
                  {"wall_clock_seconds", wall}};
    write_atomic(dir / "manifest.json", manifest.dump(1) + "\n");

    if (verbose)
        for (const auto& r : result.records)
            std::fprintf(stderr, "epoch %zu %s loss %.6f val_auc %s dead %.3f\n", r.epoch,
                         std::string(to_string(r.stage)).c_str(), r.loss_total, fmt(r.val_auc).c_str(),
                         r.dead_evidence_frac);
    return result;
}

} // namespace tedl::cli
