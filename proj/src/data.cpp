#include "tedl/data.hpp"

#include "tedl/errors.hpp"
#include "tedl/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

namespace tedl {

namespace {

constexpr double kDatasetLabelTolerance = 1e-9;

enum StreamTag : std::uint64_t { kFeatureStream = 1, kNoiseStream = 2, kOrderStream = 3 };

void append_number(std::string& out, double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
    out.append(buf, static_cast<std::size_t>(len));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

Dataset take_rows(const Dataset& ds, std::span<const std::size_t> idx, const std::string& suffix) {
    Dataset out;
    out.features = select_rows(ds.features, idx);
    out.labels = select_rows(ds.labels, idx);
    out.name = ds.name + suffix;
    out.seed = ds.seed;
    return out;
}

// Largest-remainder apportionment of `total` across classes proportional to `weights`,
// never exceeding `capacity`.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& exact,
                                   const std::vector<std::size_t>& capacity) {
    const std::size_t k = exact.size();
    std::vector<std::size_t> take(k);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < k; ++c) {
        take[c] = std::min(capacity[c], static_cast<std::size_t>(std::floor(exact[c])));
        assigned += take[c];
    }
    std::vector<std::size_t> order(k);
    for (std::size_t c = 0; c < k; ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return exact[a] - std::floor(exact[a]) > exact[b] - std::floor(exact[b]);
    });
    while (assigned < total) {
        bool progressed = false;
        for (std::size_t c : order) {
            if (assigned == total) break;
            if (take[c] < capacity[c]) {
                ++take[c];
                ++assigned;
                progressed = true;
            }
        }
        if (!progressed) break;
    }
    return take;
}

} // namespace

bool Dataset::features_only() const noexcept {
    if (labels.empty()) return false;
    const double u = 1.0 / static_cast<double>(labels.cols());
    for (double v : labels.values())
        if (v != u) return false;
    return true;
}

void validate(const Dataset& ds) {
    if (ds.features.rows() == 0) throw DataError("dataset '" + ds.name + "' has no rows");
    if (ds.labels.rows() != ds.features.rows())
        throw DataError("dataset '" + ds.name + "': feature and label row counts differ");
    if (ds.labels.cols() < 2) throw DataError("dataset '" + ds.name + "' needs at least 2 label columns");
    if (!ds.features.all_finite()) throw DataError("dataset '" + ds.name + "' has non-finite features");
    for (std::size_t i = 0; i < ds.labels.rows(); ++i) {
        double s = 0.0;
        for (double v : ds.labels.row(i)) {
            if (!(v >= 0.0)) throw DataError("dataset '" + ds.name + "': negative label in row " + std::to_string(i));
            s += v;
        }
        if (std::abs(s - 1.0) > kDatasetLabelTolerance)
            throw DataError("dataset '" + ds.name + "': label row " + std::to_string(i) + " does not sum to 1");
    }
}

Matrix blob_means(std::size_t dims, std::size_t classes, double separation) {
    if (classes < 2) throw DomainError("blobs need at least 2 classes");
    if (dims == 0) throw DomainError("blobs need at least 1 dimension");
    if (!(separation > 0.0) || !std::isfinite(separation)) throw DomainError("blob separation must be positive");

    Matrix means(classes, dims);
    if (classes == 2) {
        means(0, 0) = -separation / 2.0;
        means(1, 0) = separation / 2.0;
    } else if (dims >= classes) {
        const double scale = separation / std::numbers::sqrt2;
        const double centroid = scale / static_cast<double>(classes);
        for (std::size_t k = 0; k < classes; ++k)
            for (std::size_t j = 0; j < classes; ++j) means(k, j) = (k == j ? scale : 0.0) - centroid;
    } else if (dims >= 2) {
        const double radius = separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(classes)));
        for (std::size_t k = 0; k < classes; ++k) {
            const double theta = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
            means(k, 0) = radius * std::cos(theta);
            means(k, 1) = radius * std::sin(theta);
        }
    } else {
        throw DomainError("more than 2 blob classes need at least 2 dimensions");
    }
    return means;
}

Dataset gen_blobs(const BlobParams& p) {
    if (p.n == 0) throw DomainError("gen_blobs: n must be positive");
    if (!(p.label_noise >= 0.0 && p.label_noise <= 1.0)) throw DomainError("gen_blobs: label_noise must be in [0, 1]");
    const Matrix means = blob_means(p.dims, p.classes, p.separation);
    const std::size_t k = p.classes;

    Rng feature_rng(derive_seed(p.seed, kFeatureStream));
    Rng noise_rng(derive_seed(p.seed, kNoiseStream));
    Rng order_rng(derive_seed(p.seed, kOrderStream));

    std::vector<std::size_t> order(p.n);
    for (std::size_t i = 0; i < p.n; ++i) order[i] = i;
    order_rng.shuffle(std::span<std::size_t>(order));

    Dataset ds;
    ds.features = Matrix(p.n, p.dims);
    ds.labels = Matrix(p.n, k);
    ds.name = "blobs";
    ds.seed = p.seed;

    std::vector<double> logp(k);
    for (std::size_t i = 0; i < p.n; ++i) {
        const std::size_t row = order[i];
        const std::size_t cls = i % k;
        auto x = ds.features.row(row);
        for (std::size_t j = 0; j < p.dims; ++j) x[j] = means(cls, j) + feature_rng.normal();
        auto y = ds.labels.row(row);
        if (p.soft) {
            for (std::size_t c = 0; c < k; ++c) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < p.dims; ++j) {
                    const double diff = x[j] - means(c, j);
                    d2 += diff * diff;
                }
                logp[c] = -0.5 * d2;
            }
            const double m = *std::max_element(logp.begin(), logp.end());
            double z = 0.0;
            for (std::size_t c = 0; c < k; ++c) z += (y[c] = std::exp(logp[c] - m));
            const double flip = p.label_noise / static_cast<double>(k - 1);
            for (std::size_t c = 0; c < k; ++c) {
                const double post = y[c] / z;
                y[c] = (1.0 - p.label_noise) * post + flip * (1.0 - post);
            }
        } else {
            std::size_t label = cls;
            if (p.label_noise > 0.0 && noise_rng.uniform() < p.label_noise) {
                const auto other = static_cast<std::size_t>(noise_rng.below(k - 1));
                label = other < cls ? other : other + 1;
            }
            y[label] = 1.0;
        }
    }
    return ds;
}

Dataset gen_ood_ring(std::size_t n, std::size_t dims, double radius, std::uint64_t seed, std::size_t classes) {
    if (n == 0) throw DomainError("gen_ood_ring: n must be positive");
    if (dims == 0) throw DomainError("gen_ood_ring: dims must be positive");
    if (classes < 2) throw DomainError("gen_ood_ring: need at least 2 classes");
    if (!(radius > 0.0) || !std::isfinite(radius)) throw DomainError("gen_ood_ring: radius must be positive");

    Rng rng(derive_seed(seed, kFeatureStream));
    Dataset ds;
    ds.features = Matrix(n, dims);
    ds.labels = Matrix(n, classes, 1.0 / static_cast<double>(classes));
    ds.name = "ood_ring";
    ds.seed = seed;
    for (std::size_t i = 0; i < n; ++i) {
        auto x = ds.features.row(i);
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& v : x) {
                v = rng.normal();
                norm += v * v;
            }
        } while (norm < 1e-24);
        const double scale = radius / std::sqrt(norm);
        for (double& v : x) v *= scale;
    }
    return ds;
}

Dataset with_label_noise(const Dataset& ds, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw DomainError("label noise rate must be in [0, 1]");
    Dataset out = ds;
    out.labels = Matrix(ds.size(), ds.classes());
    const auto hard = ds.hard_labels();
    for (std::size_t i = 0; i < ds.size(); ++i) out.labels(i, hard[i]) = 1.0;
    if (rate == 0.0) return out;
    const std::size_t k = out.classes();
    Rng rng(derive_seed(seed, kNoiseStream));
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(rng.uniform() < rate)) continue;
        auto y = out.labels.row(i);
        const auto cls = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
        const auto other = static_cast<std::size_t>(rng.below(k - 1));
        y[cls] = 0.0;
        y[other < cls ? other : other + 1] = 1.0;
    }
    return out;
}

std::string to_csv(const Dataset& ds) {
    std::string out;
    for (std::size_t j = 0; j < ds.dims(); ++j) out += "f" + std::to_string(j) + ",";
    for (std::size_t j = 0; j < ds.classes(); ++j) out += (j ? ",y" : "y") + std::to_string(j);
    out += '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.features.row(i)) {
            append_number(out, v);
            out += ',';
        }
        const auto y = ds.labels.row(i);
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (j) out += ',';
            append_number(out, y[j]);
        }
        out += '\n';
    }
    return out;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path.string() + " for writing");
    f << to_csv(ds);
    if (!f) throw DataError("failed writing " + path.string());
}

Dataset parse_csv(const std::string& text, const std::string& name) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;

    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        header = split_fields(line);
        break;
    }
    if (header.empty()) throw DataError(name + ": no data rows");

    std::size_t dims = 0;
    while (dims < header.size() && trim(header[dims]) == "f" + std::to_string(dims)) ++dims;
    std::size_t classes = 0;
    while (dims + classes < header.size() && trim(header[dims + classes]) == "y" + std::to_string(classes)) ++classes;
    if (dims == 0 || classes < 2 || dims + classes != header.size())
        throw DataError(name + ": line " + std::to_string(line_no) +
                        ": header must be f0..f{d-1},y0..y{K-1} with d >= 1 and K >= 2");

    const std::size_t width = dims + classes;
    std::vector<double> feats;
    std::vector<double> labels;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != width)
            throw DataError(name + ": line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                            " columns, got " + std::to_string(fields.size()));
        double label_sum = 0.0;
        for (std::size_t c = 0; c < width; ++c) {
            const std::string cell = trim(fields[c]);
            char* end = nullptr;
            errno = 0;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end != cell.c_str() + cell.size() || errno == ERANGE || !std::isfinite(v))
                throw DataError(name + ": line " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                                ": not a finite number: '" + cell + "'");
            if (c < dims) {
                feats.push_back(v);
            } else {
                if (v < 0.0)
                    throw DataError(name + ": line " + std::to_string(line_no) + ": negative label value");
                labels.push_back(v);
                label_sum += v;
            }
        }
        if (std::abs(label_sum - 1.0) > kDatasetLabelTolerance)
            throw DataError(name + ": line " + std::to_string(line_no) + ": label values sum to " +
                            std::to_string(label_sum) + ", expected 1");
        ++rows;
    }
    if (rows == 0) throw DataError(name + ": no data rows");

    Dataset ds;
    ds.features = Matrix(rows, dims, std::move(feats));
    ds.labels = Matrix(rows, classes, std::move(labels));
    ds.name = name;
    return ds;
}

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str(), path.stem().string());
}

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0) || !(spec.validation_fraction > 0.0) ||
        spec.train_fraction + spec.validation_fraction > 1.0 + 1e-12)
        throw DomainError("split fractions must be positive and sum to at most 1");
    validate(ds);

    const std::size_t n = ds.size();
    const std::size_t k = ds.classes();
    const auto cls = ds.hard_labels();
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < n; ++i) members[cls[i]].push_back(i);

    Rng rng(derive_seed(spec.seed, kOrderStream));
    for (auto& m : members) rng.shuffle(std::span<std::size_t>(m));

    const auto total_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
    const bool takes_all = spec.train_fraction + spec.validation_fraction >= 1.0 - 1e-12;
    const std::size_t total_val =
        takes_all ? n - std::min(n, total_train)
                  : static_cast<std::size_t>(std::llround(spec.validation_fraction * static_cast<double>(n)));
    if (total_train == 0 || total_val == 0 || total_train + total_val > n)
        throw DomainError("split of " + std::to_string(n) + " rows leaves an empty part");

    std::vector<double> exact(k);
    std::vector<std::size_t> capacity(k);
    for (std::size_t c = 0; c < k; ++c) {
        exact[c] = spec.train_fraction * static_cast<double>(members[c].size());
        capacity[c] = members[c].size();
    }
    const auto train_take = apportion(total_train, exact, capacity);
    for (std::size_t c = 0; c < k; ++c) {
        exact[c] = spec.validation_fraction * static_cast<double>(members[c].size());
        capacity[c] = members[c].size() - train_take[c];
    }
    const auto val_take = apportion(total_val, exact, capacity);

    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    for (std::size_t c = 0; c < k; ++c) {
        const auto& m = members[c];
        train_idx.insert(train_idx.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(train_take[c]));
        val_idx.insert(val_idx.end(), m.begin() + static_cast<std::ptrdiff_t>(train_take[c]),
                       m.begin() + static_cast<std::ptrdiff_t>(train_take[c] + val_take[c]));
    }
    rng.shuffle(std::span<std::size_t>(train_idx));
    rng.shuffle(std::span<std::size_t>(val_idx));
    return {take_rows(ds, train_idx, "/train"), take_rows(ds, val_idx, "/validation")};
}

std::pair<Dataset, Dataset> blob_task(const BlobParams& params, const SplitSpec& split_spec, NoiseScope scope) {
    if (params.soft || scope == NoiseScope::all) return split(gen_blobs(params), split_spec);
    BlobParams clean = params;
    clean.label_noise = 0.0;
    auto parts = split(gen_blobs(clean), split_spec);
    if (params.label_noise > 0.0) {
        std::string name = parts.first.name;
        parts.first = with_label_noise(parts.first, params.label_noise, derive_seed(params.seed, 0x401a));
        parts.first.name = std::move(name);
    }
    return parts;
}

} // namespace tedl
