#include "selectmix/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "selectmix/crossval.hpp"

namespace selectmix {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803u;
constexpr std::uint32_t kLabelsMagic = 0x00000801u;

std::uint32_t read_u32_be(std::istream& in, const std::string& path, const char* field) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) {
        throw FormatError(path + ": truncated while reading " + field);
    }
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open " + path);
    }
    return in;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void require_clean_labels(const Dataset& ds, const char* op) {
    if (!ds.clean_labels) {
        throw SpecError(std::string(op) + " requires clean labels");
    }
    if (static_cast<int>(ds.clean_labels->size()) != ds.size()) {
        throw ShapeError(std::string(op) + ": clean label count " +
                         std::to_string(ds.clean_labels->size()) + " != rows " +
                         std::to_string(ds.size()));
    }
}

std::vector<std::uint8_t> flips_against_clean(const std::vector<int>& clean,
                                              const std::vector<int>& noisy) {
    std::vector<std::uint8_t> mask(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        mask[i] = noisy[i] != clean[i] ? 1 : 0;
    }
    return mask;
}

}  // namespace

const char* to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::kSymmetric: return "symmetric";
        case NoiseKind::kAsymmetric: return "asymmetric";
        case NoiseKind::kInstanceDependent: return "instance_dependent";
    }
    throw SpecError("unknown noise kind");
}

NoiseKind parse_noise_kind(const std::string& name) {
    if (name == "symmetric") return NoiseKind::kSymmetric;
    if (name == "asymmetric") return NoiseKind::kAsymmetric;
    if (name == "instance_dependent") return NoiseKind::kInstanceDependent;
    throw SpecError("unknown noise kind '" + name +
                    "' (expected symmetric, asymmetric, or instance_dependent)");
}

std::map<int, int> cyclic_pair_map(int num_classes) {
    if (num_classes < 2) {
        throw SpecError("cyclic_pair_map needs at least 2 classes, got " +
                        std::to_string(num_classes));
    }
    std::map<int, int> pairs;
    for (int c = 0; c < num_classes; ++c) {
        pairs[c] = (c + 1) % num_classes;
    }
    return pairs;
}

void SyntheticSpec::validate() const {
    if (num_classes < 1) {
        throw SpecError("SyntheticSpec: num_classes must be >= 1, got " +
                        std::to_string(num_classes));
    }
    if (per_class_count < 1) {
        throw SpecError("SyntheticSpec: per_class_count must be >= 1, got " +
                        std::to_string(per_class_count));
    }
    if (dim < 1) {
        throw SpecError("SyntheticSpec: dim must be >= 1, got " + std::to_string(dim));
    }
    if (means.rows() != num_classes || means.cols() != dim) {
        throw ShapeError("SyntheticSpec: means must be " + std::to_string(num_classes) + "x" +
                         std::to_string(dim) + ", got " + std::to_string(means.rows()) + "x" +
                         std::to_string(means.cols()));
    }
    if (!(stddev > 0.0) || !std::isfinite(stddev)) {
        throw SpecError("SyntheticSpec: stddev must be positive and finite");
    }
    for (int a = 0; a < num_classes; ++a) {
        for (int b = a + 1; b < num_classes; ++b) {
            if ((means.row(a) - means.row(b)).norm() == 0.0) {
                throw SpecError("SyntheticSpec: means of classes " + std::to_string(a) +
                                " and " + std::to_string(b) + " coincide");
            }
        }
    }
}

SyntheticSpec make_blob_spec(int num_classes, int dim, int per_class, double stddev,
                             double separation, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.num_classes = num_classes;
    spec.per_class_count = per_class;
    spec.dim = dim;
    spec.stddev = stddev;
    spec.means = Matrix::Zero(num_classes, dim);
    if (num_classes == 2) {
        spec.means(0, 0) = -separation / 2.0;
        spec.means(1, 0) = separation / 2.0;
    } else {
        // Random directions of norm separation/sqrt(2): in high dimension the
        // directions are near-orthogonal, so pairwise mean distances come out
        // close to `separation`.
        Rng rng(seed, {stream::kSynthetic, 2});
        for (int c = 0; c < num_classes; ++c) {
            for (int j = 0; j < dim; ++j) {
                spec.means(c, j) = rng.normal();
            }
            double norm = spec.means.row(c).norm();
            if (norm == 0.0) {
                spec.means(c, 0) = 1.0;
                norm = 1.0;
            }
            spec.means.row(c) *= separation / (std::sqrt(2.0) * norm);
        }
    }
    spec.validate();
    return spec;
}

SyntheticSpec make_image_spec(int num_classes, int side, int per_class, double stddev,
                              std::uint64_t seed) {
    if (side < 2) {
        throw SpecError("make_image_spec: side must be >= 2, got " + std::to_string(side));
    }
    SyntheticSpec spec;
    spec.num_classes = num_classes;
    spec.per_class_count = per_class;
    spec.dim = side * side;
    spec.stddev = stddev;
    spec.means = Matrix::Zero(num_classes, spec.dim);

    Rng rng(seed, {stream::kSynthetic, 3});

    // A smooth random pattern: a few Gaussian bumps at random grid positions,
    // the low-frequency texture of a downsampled digit.
    const auto bump_pattern = [&]() {
        const int bumps = 3;
        std::vector<double> cx(bumps), cy(bumps), amp(bumps), width(bumps);
        for (int b = 0; b < bumps; ++b) {
            cx[b] = 2.0 + rng.uniform() * (side - 4.0);
            cy[b] = 2.0 + rng.uniform() * (side - 4.0);
            amp[b] = 0.5 + 0.5 * rng.uniform();
            width[b] = side * (0.12 + 0.10 * rng.uniform());
        }
        Vector img = Vector::Zero(spec.dim);
        for (int r = 0; r < side; ++r) {
            for (int col = 0; col < side; ++col) {
                double v = 0.0;
                for (int b = 0; b < bumps; ++b) {
                    const double dr = r - cy[b];
                    const double dc = col - cx[b];
                    v += amp[b] * std::exp(-(dr * dr + dc * dc) / (2.0 * width[b] * width[b]));
                }
                img[r * side + col] = v;
            }
        }
        return img;
    };

    // Class templates sit on a ring inside the plane spanned by two random
    // prototype patterns, plus a smaller class-unique pattern. The ring part
    // gives the corpus the property that makes mixing strength a genuine
    // trade-off on real images: neighbouring classes are confusable, and a
    // convex combination of two samples drifts toward a third class's
    // territory. The unique part keeps such a mixture distinguishable from
    // a genuine third-class sample, the way blended photographs stay
    // recognisably blends — without it, vanilla mixing collapses outright
    // instead of merely degrading.
    Vector u = bump_pattern();
    u /= u.norm();
    Vector w = bump_pattern();
    w -= w.dot(u) * u;
    while (w.norm() < 1e-6) {  // fresh draw if the second pattern was parallel
        w = bump_pattern();
        w -= w.dot(u) * u;
    }
    w /= w.norm();

    // With unit-norm axes the ring geometry is exact and seed-independent:
    // adjacent templates are 2 * R * sin(pi / C) apart before clamping, with
    // sqrt(2) * kUnique of class-unique separation on top.
    const double radius = 2.5;
    const double unique_scale = 1.0;
    const double two_pi = 6.283185307179586;
    for (int c = 0; c < num_classes; ++c) {
        const double theta = two_pi * c / num_classes;
        Vector q = bump_pattern();
        q -= q.dot(u) * u;
        q -= q.dot(w) * w;
        while (q.norm() < 1e-6) {
            q = bump_pattern();
            q -= q.dot(u) * u;
            q -= q.dot(w) * w;
        }
        q /= q.norm();
        for (int j = 0; j < spec.dim; ++j) {
            const double v = 0.45 +
                             radius * (std::cos(theta) * u[j] + std::sin(theta) * w[j]) +
                             unique_scale * q[j];
            // Clamp into [0, 0.9] so template + noise stays mostly inside the
            // byte range after quantisation.
            spec.means(c, j) = std::clamp(v, 0.0, 0.9);
        }
    }
    spec.validate();
    return spec;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream images = open_input(images_path);
    const std::uint32_t magic_i = read_u32_be(images, images_path, "magic");
    if (magic_i != kImagesMagic) {
        std::ostringstream msg;
        msg << images_path << ": bad image magic 0x" << std::hex << magic_i;
        throw FormatError(msg.str());
    }
    const std::uint32_t count = read_u32_be(images, images_path, "count");
    const std::uint32_t rows = read_u32_be(images, images_path, "rows");
    const std::uint32_t cols = read_u32_be(images, images_path, "cols");
    const std::size_t pixels = std::size_t(count) * rows * cols;
    std::vector<unsigned char> raw(pixels);
    images.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pixels));
    if (static_cast<std::size_t>(images.gcount()) != pixels) {
        throw FormatError(images_path + ": truncated pixel payload, expected " +
                          std::to_string(pixels) + " bytes, got " +
                          std::to_string(images.gcount()));
    }

    std::ifstream labels = open_input(labels_path);
    const std::uint32_t magic_l = read_u32_be(labels, labels_path, "magic");
    if (magic_l != kLabelsMagic) {
        std::ostringstream msg;
        msg << labels_path << ": bad label magic 0x" << std::hex << magic_l;
        throw FormatError(msg.str());
    }
    const std::uint32_t label_count = read_u32_be(labels, labels_path, "count");
    if (label_count != count) {
        throw FormatError(labels_path + ": label count " + std::to_string(label_count) +
                          " != image count " + std::to_string(count));
    }
    std::vector<unsigned char> raw_labels(label_count);
    labels.read(reinterpret_cast<char*>(raw_labels.data()),
                static_cast<std::streamsize>(label_count));
    if (static_cast<std::size_t>(labels.gcount()) != label_count) {
        throw FormatError(labels_path + ": truncated label payload");
    }

    Dataset ds;
    ds.idx_rows = static_cast<int>(rows);
    ds.idx_cols = static_cast<int>(cols);
    ds.features.resize(count, std::size_t(rows) * cols);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t base = std::size_t(i) * rows * cols;
        for (std::uint32_t j = 0; j < rows * cols; ++j) {
            ds.features(i, j) = raw[base + j] / 255.0;
        }
    }
    ds.noisy_labels.assign(raw_labels.begin(), raw_labels.end());
    ds.clean_labels = ds.noisy_labels;
    int max_label = 0;
    for (int y : ds.noisy_labels) {
        max_label = std::max(max_label, y);
    }
    ds.num_classes = max_label + 1;
    ds.flip_mask = std::vector<std::uint8_t>(count, 0);
    return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path) {
    const int rows = ds.idx_rows > 0 ? ds.idx_rows : 1;
    const int cols = ds.idx_cols > 0 ? ds.idx_cols : ds.dim();
    if (rows * cols != ds.dim()) {
        throw ShapeError("save_idx: image geometry " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " != feature dim " + std::to_string(ds.dim()));
    }
    std::ofstream images(images_path, std::ios::binary);
    if (!images) {
        throw InputError("cannot open " + images_path + " for writing");
    }
    write_u32_be(images, kImagesMagic);
    write_u32_be(images, static_cast<std::uint32_t>(ds.size()));
    write_u32_be(images, static_cast<std::uint32_t>(rows));
    write_u32_be(images, static_cast<std::uint32_t>(cols));
    std::vector<unsigned char> raw(std::size_t(ds.size()) * ds.dim());
    for (int i = 0; i < ds.size(); ++i) {
        for (int j = 0; j < ds.dim(); ++j) {
            const long b = std::lround(ds.features(i, j) * 255.0);
            raw[std::size_t(i) * ds.dim() + j] =
                static_cast<unsigned char>(std::clamp(b, 0L, 255L));
        }
    }
    images.write(reinterpret_cast<const char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size()));

    std::ofstream labels(labels_path, std::ios::binary);
    if (!labels) {
        throw InputError("cannot open " + labels_path + " for writing");
    }
    write_u32_be(labels, kLabelsMagic);
    write_u32_be(labels, static_cast<std::uint32_t>(ds.size()));
    std::vector<unsigned char> raw_labels(ds.size());
    for (int i = 0; i < ds.size(); ++i) {
        raw_labels[i] = static_cast<unsigned char>(ds.noisy_labels[i]);
    }
    labels.write(reinterpret_cast<const char*>(raw_labels.data()),
                 static_cast<std::streamsize>(raw_labels.size()));
}

Dataset gen_gaussian(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed, {stream::kSynthetic});
    Dataset ds;
    const int n = spec.num_classes * spec.per_class_count;
    ds.features.resize(n, spec.dim);
    ds.noisy_labels.resize(n);
    ds.num_classes = spec.num_classes;
    for (int c = 0; c < spec.num_classes; ++c) {
        for (int s = 0; s < spec.per_class_count; ++s) {
            const int i = c * spec.per_class_count + s;
            for (int j = 0; j < spec.dim; ++j) {
                ds.features(i, j) = spec.means(c, j) + spec.stddev * rng.normal();
            }
            ds.noisy_labels[i] = c;
        }
    }
    ds.clean_labels = ds.noisy_labels;
    ds.flip_mask = std::vector<std::uint8_t>(n, 0);
    return ds;
}

Dataset inject_noise(const Dataset& ds, const NoiseSpec& spec, std::uint64_t seed) {
    require_clean_labels(ds, "inject_noise");
    if (spec.rate < 0.0 || spec.rate > 1.0 || !std::isfinite(spec.rate)) {
        throw SpecError("inject_noise: rate must lie in [0,1], got " + std::to_string(spec.rate));
    }
    if (spec.rate > 0.0 && ds.num_classes < 2) {
        throw SpecError("inject_noise: cannot corrupt labels with a single class");
    }
    const std::vector<int>& clean = *ds.clean_labels;
    const int n = ds.size();
    const int C = ds.num_classes;

    if (spec.kind == NoiseKind::kAsymmetric) {
        for (int y : clean) {
            auto it = spec.pair_map.find(y);
            if (it == spec.pair_map.end()) {
                throw SpecError("inject_noise: pair_map has no entry for class " +
                                std::to_string(y));
            }
            if (it->second == y) {
                throw SpecError("inject_noise: pair_map maps class " + std::to_string(y) +
                                " to itself");
            }
            if (it->second < 0 || it->second >= C) {
                throw SpecError("inject_noise: pair_map target " + std::to_string(it->second) +
                                " out of range for " + std::to_string(C) + " classes");
            }
        }
    }

    Dataset out = ds;
    out.clean_labels = clean;
    Rng rng(seed, {stream::kNoise});

    // Instance-dependent corruption: samples far from their class mean flip
    // with higher probability. Per-class distance ranks feed a sigmoid, then
    // the weights are rescaled so the dataset-average flip probability equals
    // the requested rate.
    std::vector<double> flip_prob;
    if (spec.kind == NoiseKind::kInstanceDependent) {
        Matrix class_means = Matrix::Zero(C, ds.dim());
        std::vector<int> class_count(C, 0);
        for (int i = 0; i < n; ++i) {
            class_means.row(clean[i]) += ds.features.row(i);
            ++class_count[clean[i]];
        }
        for (int c = 0; c < C; ++c) {
            if (class_count[c] > 0) {
                class_means.row(c) /= class_count[c];
            }
        }
        std::vector<std::vector<int>> by_class(C);
        for (int i = 0; i < n; ++i) {
            by_class[clean[i]].push_back(i);
        }
        std::vector<double> weight(n, 0.0);
        for (int c = 0; c < C; ++c) {
            auto& members = by_class[c];
            std::vector<double> dist(members.size());
            for (std::size_t k = 0; k < members.size(); ++k) {
                dist[k] = (ds.features.row(members[k]) - class_means.row(c)).norm();
            }
            std::vector<std::size_t> order(members.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
            for (std::size_t rank = 0; rank < order.size(); ++rank) {
                const double centred =
                    (rank + 0.5) / static_cast<double>(members.size()) - 0.5;
                weight[members[order[rank]]] = sigmoid(spec.idn_sharpness * centred);
            }
        }
        double mean_weight = std::accumulate(weight.begin(), weight.end(), 0.0) / n;
        flip_prob.resize(n);
        for (int i = 0; i < n; ++i) {
            flip_prob[i] = std::clamp(spec.rate * weight[i] / mean_weight, 0.0, 1.0);
        }
    }

    // One threshold draw per sample in index order; a destination draw only
    // when the sample actually flips. This keeps the stream layout simple to
    // reason about in reproducibility tests.
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        int noisy = clean[i];
        switch (spec.kind) {
            case NoiseKind::kSymmetric:
                if (u < spec.rate) {
                    const int d = static_cast<int>(rng.below(static_cast<std::uint64_t>(C - 1)));
                    noisy = d >= clean[i] ? d + 1 : d;
                }
                break;
            case NoiseKind::kAsymmetric:
                if (u < spec.rate) {
                    noisy = spec.pair_map.at(clean[i]);
                }
                break;
            case NoiseKind::kInstanceDependent:
                if (u < flip_prob[i]) {
                    const int d = static_cast<int>(rng.below(static_cast<std::uint64_t>(C - 1)));
                    noisy = d >= clean[i] ? d + 1 : d;
                }
                break;
        }
        out.noisy_labels[i] = noisy;
    }
    out.flip_mask = flips_against_clean(clean, out.noisy_labels);
    return out;
}

Dataset relabel_with_oof(const Dataset& ds, const OofPredictions& oof) {
    if (static_cast<int>(oof.pred_labels.size()) != ds.size()) {
        throw ShapeError("relabel_with_oof: " + std::to_string(oof.pred_labels.size()) +
                         " predictions for " + std::to_string(ds.size()) + " rows");
    }
    Dataset out = ds;
    out.noisy_labels = oof.pred_labels;
    if (out.clean_labels) {
        out.flip_mask = flips_against_clean(*out.clean_labels, out.noisy_labels);
    } else {
        out.flip_mask.reset();
    }
    return out;
}

void write_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot open " + path + " for writing");
    }
    for (int j = 0; j < ds.dim(); ++j) {
        out << "feature_" << j << ',';
    }
    out << "clean_label,noisy_label,flipped\n";
    char buf[64];
    for (int i = 0; i < ds.size(); ++i) {
        for (int j = 0; j < ds.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.features(i, j));
            out << buf << ',';
        }
        if (ds.clean_labels) {
            out << (*ds.clean_labels)[i];
        }
        out << ',' << ds.noisy_labels[i] << ',';
        const int flipped = ds.flip_mask ? static_cast<int>((*ds.flip_mask)[i]) : 0;
        out << flipped << '\n';
    }
    if (!out) {
        throw InputError("write failed for " + path);
    }
}

Dataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open " + path);
    }
    std::string header;
    if (!std::getline(in, header)) {
        throw FormatError(path + ": empty file");
    }
    std::vector<std::string> cols;
    {
        std::stringstream ss(header);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cols.push_back(cell);
        }
    }
    if (cols.size() < 4 || cols[cols.size() - 3] != "clean_label" ||
        cols[cols.size() - 2] != "noisy_label" || cols.back() != "flipped") {
        throw FormatError(path + ": header must end with clean_label,noisy_label,flipped");
    }
    const int dim = static_cast<int>(cols.size()) - 3;
    for (int j = 0; j < dim; ++j) {
        if (cols[j] != "feature_" + std::to_string(j)) {
            throw FormatError(path + ": expected column feature_" + std::to_string(j) +
                              ", found " + cols[j]);
        }
    }

    std::vector<double> values;
    std::vector<int> clean;
    std::vector<int> noisy;
    std::vector<std::uint8_t> flips;
    bool clean_present = true;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        ++row;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        // A trailing empty cell is dropped by getline; only the clean_label
        // column is allowed to be empty, and it never sits last.
        if (static_cast<int>(cells.size()) != dim + 3) {
            throw FormatError(path + ": row " + std::to_string(row) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(dim + 3));
        }
        for (int j = 0; j < dim; ++j) {
            try {
                values.push_back(std::stod(cells[j]));
            } catch (const std::exception&) {
                throw FormatError(path + ": row " + std::to_string(row) +
                                  ": bad feature value '" + cells[j] + "'");
            }
        }
        if (cells[dim].empty()) {
            clean_present = false;
            clean.push_back(0);
        } else {
            clean.push_back(std::stoi(cells[dim]));
        }
        noisy.push_back(std::stoi(cells[dim + 1]));
        flips.push_back(static_cast<std::uint8_t>(std::stoi(cells[dim + 2])));
    }

    Dataset ds;
    ds.features.resize(row, dim);
    for (int i = 0; i < row; ++i) {
        for (int j = 0; j < dim; ++j) {
            ds.features(i, j) = values[std::size_t(i) * dim + j];
        }
    }
    ds.noisy_labels = std::move(noisy);
    int max_label = 0;
    for (int y : ds.noisy_labels) {
        max_label = std::max(max_label, y);
    }
    if (clean_present) {
        ds.clean_labels = std::move(clean);
        for (int y : *ds.clean_labels) {
            max_label = std::max(max_label, y);
        }
        ds.flip_mask = std::move(flips);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

Dataset take_subset(const Dataset& ds, int n) {
    if (n < 0 || n > ds.size()) {
        throw InputError("take_subset: n=" + std::to_string(n) + " out of range for " +
                         std::to_string(ds.size()) + " rows");
    }
    Dataset out;
    out.features = ds.features.topRows(n);
    out.noisy_labels.assign(ds.noisy_labels.begin(), ds.noisy_labels.begin() + n);
    if (ds.clean_labels) {
        out.clean_labels =
            std::vector<int>(ds.clean_labels->begin(), ds.clean_labels->begin() + n);
    }
    if (ds.flip_mask) {
        out.flip_mask =
            std::vector<std::uint8_t>(ds.flip_mask->begin(), ds.flip_mask->begin() + n);
    }
    out.num_classes = ds.num_classes;
    out.idx_rows = ds.idx_rows;
    out.idx_cols = ds.idx_cols;
    return out;
}

}  // namespace selectmix
