#include "fallmon/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "fallmon/nn/loss.hpp"

namespace fallmon::data {

namespace fs = std::filesystem;

Label parse_label(std::string_view text) {
    if (text == "fall" || text == "1") return Label::Fall;
    if (text == "not_fall" || text == "0") return Label::NotFall;
    throw InputError("unknown label '" + std::string(text) + "'");
}

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

bool is_netpbm_file(const fs::path& p) {
    const auto ext = p.extension().string();
    return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

void read_csv(const fs::path& root, DatasetManifest& m, std::vector<std::string>& offenders) {
    std::ifstream in(root / "manifest.csv");
    if (!in) throw IngestionError("cannot read manifest", {(root / "manifest.csv").string()});
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string row = trim(line);
        if (row.empty() || row.front() == '#') continue;
        const auto comma = row.rfind(',');
        const std::string where = "manifest.csv:" + std::to_string(lineno);
        if (comma == std::string::npos) {
            offenders.push_back(where + ": expected 'path,label'");
            continue;
        }
        const std::string path = trim(std::string_view(row).substr(0, comma));
        const std::string label = trim(std::string_view(row).substr(comma + 1));
        if (lineno == 1 && path == "path" && label == "label") continue;
        Label l;
        try {
            l = parse_label(label);
        } catch (const InputError&) {
            offenders.push_back(where + ": unknown label '" + label + "'");
            continue;
        }
        if (!seen.insert(path).second) {
            offenders.push_back(where + ": duplicate path '" + path + "'");
            continue;
        }
        m.entries.push_back({root / path, l});
    }
}

void read_directories(const fs::path& root, DatasetManifest& m, std::vector<std::string>& offenders) {
    for (Label l : {Label::Fall, Label::NotFall}) {
        const fs::path dir = root / to_string(l);
        std::error_code ec;
        if (!fs::is_directory(dir, ec)) {
            offenders.push_back(dir.string() + ": missing class directory");
            continue;
        }
        for (const auto& e : fs::directory_iterator(dir, ec)) {
            if (e.is_regular_file() && is_netpbm_file(e.path())) m.entries.push_back({e.path(), l});
        }
        if (ec) offenders.push_back(dir.string() + ": " + ec.message());
    }
}

}  // namespace

DatasetManifest load_manifest(const fs::path& root) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw IngestionError("dataset root is not a directory", {root.string()});

    DatasetManifest m;
    std::vector<std::string> offenders;
    if (fs::exists(root / "manifest.csv")) {
        read_csv(root, m, offenders);
    } else {
        read_directories(root, m, offenders);
    }
    if (!offenders.empty()) throw IngestionError("dataset manifest is invalid", offenders);

    std::sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
    for (const auto& e : m.entries) {
        std::ifstream probe(e.path, std::ios::binary);
        if (!probe) offenders.push_back(e.path.string() + ": unreadable");
        ++m.class_counts[e.label];
    }
    for (Label l : {Label::Fall, Label::NotFall}) {
        if (m.count(l) == 0) offenders.push_back(std::string("class '") + to_string(l) + "' has no samples");
    }
    if (!offenders.empty()) throw IngestionError("dataset cannot be ingested", offenders);
    return m;
}

std::vector<LabeledSample> to_samples(std::span<const ManifestEntry> entries, std::size_t size) {
    std::vector<LabeledSample> out;
    out.reserve(entries.size());
    std::vector<std::string> offenders;
    for (const auto& e : entries) {
        try {
            out.push_back({e.path.string(), load_model_input(e.path, size), e.label});
        } catch (const std::exception& ex) {
            offenders.push_back(ex.what());
        }
    }
    if (!offenders.empty()) throw IngestionError("failed to decode dataset images", offenders);
    return out;
}

std::vector<LabeledSample> load_samples(const DatasetManifest& manifest, std::size_t size) {
    return to_samples(manifest.entries, size);
}

Split stratified_split(const DatasetManifest& manifest, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw InputError("validation fraction must lie in (0,1)");
    std::mt19937_64 rng(seed);
    Split split;
    for (Label l : {Label::NotFall, Label::Fall}) {
        std::vector<ManifestEntry> cls;
        for (const auto& e : manifest.entries)
            if (e.label == l) cls.push_back(e);
        if (cls.size() < 2) {
            throw InputError(std::string("class '") + to_string(l) + "' needs at least 2 samples to split, has " +
                             std::to_string(cls.size()));
        }
        std::shuffle(cls.begin(), cls.end(), rng);
        auto n_val = static_cast<std::size_t>(std::lround(static_cast<double>(cls.size()) * val_fraction));
        n_val = std::clamp<std::size_t>(n_val, 1, cls.size() - 1);
        split.val.insert(split.val.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(n_val));
        split.train.insert(split.train.end(), cls.begin() + static_cast<std::ptrdiff_t>(n_val), cls.end());
    }
    return split;
}

Metrics metrics_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) {
    Metrics m{tp, fp, fn, tn};
    if (m.total() == 0) throw InputError("metrics need at least one counted sample");
    const auto ratio = [](std::uint64_t num, std::uint64_t den) {
        return static_cast<double>(num) / static_cast<double>(den);
    };
    if (tp + fp == 0) {
        m.precision_undefined = true;
    } else {
        m.precision = ratio(tp, tp + fp);
    }
    if (tp + fn == 0) {
        m.recall_undefined = true;
    } else {
        m.recall = ratio(tp, tp + fn);
    }
    m.accuracy = ratio(tp + tn, m.total());
    if (m.precision + m.recall > 0) m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

Metrics evaluate_probabilities(std::span<const double> probabilities, std::span<const Label> labels,
                               double threshold) {
    if (probabilities.empty()) throw InputError("cannot evaluate an empty sample set");
    if (probabilities.size() != labels.size()) throw InputError("probabilities and labels differ in length");
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double loss = 0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        const bool predicted = fallnet::predict_label(probabilities[i], threshold) == fallnet::Prediction::Fall;
        const bool actual = labels[i] == Label::Fall;
        if (predicted && actual) ++tp;
        else if (predicted) ++fp;
        else if (actual) ++fn;
        else ++tn;
        loss += nn::bce_loss(probabilities[i], to_int(labels[i])).loss;
    }
    Metrics m = metrics_from_counts(tp, fp, fn, tn);
    m.mean_loss = loss / static_cast<double>(probabilities.size());
    return m;
}

Metrics evaluate(const fallnet::FallNet& model, std::span<const LabeledSample> samples, double threshold) {
    if (samples.empty()) throw InputError("cannot evaluate an empty sample set");
    fallnet::predict_label(0.0, threshold);  // validates the threshold up front
    std::vector<double> probs;
    std::vector<Label> labels;
    probs.reserve(samples.size());
    labels.reserve(samples.size());
    for (const auto& s : samples) {
        probs.push_back(model.forward(s.image));
        labels.push_back(s.label);
    }
    return evaluate_probabilities(probs, labels, threshold);
}

std::string format_curves(std::span<const fallnet::EpochStats> stats) {
    if (stats.empty()) throw InputError("no epoch statistics to export");
    std::string out = "epoch,loss,accuracy,val_loss,val_accuracy\n";
    char buf[160];
    for (const auto& s : stats) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f\n", s.epoch, s.train_loss, s.train_accuracy,
                      s.val_loss, s.val_accuracy);
        out += buf;
    }
    return out;
}

void export_curves(std::span<const fallnet::EpochStats> stats, const fs::path& path) {
    const std::string text = format_curves(stats);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

struct Rgb {
    float r, g, b;
};

Rgb random_colour(std::mt19937_64& rng, float lo, float hi) {
    std::uniform_real_distribution<float> u(lo, hi);
    return {u(rng), u(rng), u(rng)};
}

void paint(Image& img, std::size_t y, std::size_t x, Rgb c) {
    img.at(y, x, 0) = c.r;
    img.at(y, x, 1) = c.g;
    img.at(y, x, 2) = c.b;
}

// Axis-aligned ellipse centred at (cy, cx) with radii (ry, rx), in pixels.
void fill_ellipse(Image& img, double cy, double cx, double ry, double rx, Rgb c) {
    const auto h = static_cast<double>(img.dim(0)), w = static_cast<double>(img.dim(1));
    const auto y_lo = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(cy - ry)));
    const auto y_hi = static_cast<std::ptrdiff_t>(std::min(h - 1, std::ceil(cy + ry)));
    const auto x_lo = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(cx - rx)));
    const auto x_hi = static_cast<std::ptrdiff_t>(std::min(w - 1, std::ceil(cx + rx)));
    for (auto y = y_lo; y <= y_hi; ++y) {
        for (auto x = x_lo; x <= x_hi; ++x) {
            const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
            const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
            if (dy * dy + dx * dx <= 1.0) paint(img, static_cast<std::size_t>(y), static_cast<std::size_t>(x), c);
        }
    }
}

void fill_rect(Image& img, double y0, double x0, double y1, double x1, Rgb c) {
    const auto h = static_cast<double>(img.dim(0)), w = static_cast<double>(img.dim(1));
    for (auto y = static_cast<std::size_t>(std::clamp(y0, 0.0, h)); y < static_cast<std::size_t>(std::clamp(y1, 0.0, h)); ++y)
        for (auto x = static_cast<std::size_t>(std::clamp(x0, 0.0, w)); x < static_cast<std::size_t>(std::clamp(x1, 0.0, w)); ++x)
            paint(img, y, x, c);
}

Image room_background(std::mt19937_64& rng, std::size_t size, double floor_line) {
    Image img({size, size, 3});
    const Rgb wall = random_colour(rng, 0.45f, 0.85f);
    const Rgb floor = random_colour(rng, 0.2f, 0.55f);
    std::normal_distribution<float> noise(0.0f, 0.03f);
    const auto floor_y = static_cast<std::size_t>(floor_line * static_cast<double>(size));
    for (std::size_t y = 0; y < size; ++y) {
        const float shade = 1.0f - 0.15f * static_cast<float>(y) / static_cast<float>(size);
        const Rgb base = y < floor_y ? wall : floor;
        for (std::size_t x = 0; x < size; ++x) {
            paint(img, y, x,
                  {clamp01(base.r * shade + noise(rng)), clamp01(base.g * shade + noise(rng)),
                   clamp01(base.b * shade + noise(rng))});
        }
    }
    // A piece of furniture against the wall.
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double fw = 0.15 + 0.2 * u(rng), fh = 0.15 + 0.25 * u(rng);
    const double fx = u(rng) * (1.0 - fw);
    const double s = static_cast<double>(size);
    fill_rect(img, (floor_line - fh) * s, fx * s, floor_line * s + 2, (fx + fw) * s, random_colour(rng, 0.1f, 0.5f));
    return img;
}

}  // namespace

std::vector<LabeledSample> synthetic_brightness(std::size_t count, std::uint64_t seed, std::size_t size) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> bright(0.65f, 0.95f), dark(0.05f, 0.35f);
    std::normal_distribution<float> noise(0.0f, 0.02f);
    std::vector<LabeledSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Label label = i % 2 == 0 ? Label::Fall : Label::NotFall;
        const float level = label == Label::Fall ? bright(rng) : dark(rng);
        Image img({size, size, 3});
        for (auto& v : img.values()) v = clamp01(level + noise(rng));
        out.push_back({"synthetic/brightness/" + std::to_string(i), std::move(img), label});
    }
    return out;
}

std::vector<LabeledSample> synthetic_poses(std::size_t count, std::uint64_t seed, std::size_t size) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double s = static_cast<double>(size);
    std::vector<LabeledSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Label label = i % 2 == 0 ? Label::Fall : Label::NotFall;
        const double floor_line = 0.55 + 0.15 * u(rng);
        Image img = room_background(rng, size, floor_line);
        const Rgb clothes = random_colour(rng, 0.0f, 1.0f);
        const Rgb skin = random_colour(rng, 0.5f, 0.95f);
        const double length = (0.45 + 0.2 * u(rng)) * s;  // head-to-feet extent
        const double girth = (0.09 + 0.05 * u(rng)) * s;
        const double head = girth * 0.6;
        if (label == Label::NotFall) {
            // Upright figure standing on the floor.
            const double feet_y = (floor_line + 0.05 + 0.2 * u(rng)) * s;
            const double cx = (0.15 + 0.7 * u(rng)) * s;
            const double body_top = feet_y - length + 2 * head;
            fill_rect(img, body_top, cx - girth / 2, feet_y, cx + girth / 2, clothes);
            fill_ellipse(img, body_top - head, cx, head, head, skin);
        } else {
            // Figure lying on the floor, head towards either side.
            const double cy = (floor_line + 0.1 + 0.2 * u(rng)) * s;
            const double left = (0.05 + (0.9 - length / s) * u(rng)) * s;
            const bool head_left = u(rng) < 0.5;
            const double body_l = head_left ? left + 2 * head : left;
            const double body_r = head_left ? left + length : left + length - 2 * head;
            fill_rect(img, cy - girth / 2, body_l, cy + girth / 2, body_r, clothes);
            fill_ellipse(img, cy, head_left ? body_l - head : body_r + head, head, head, skin);
        }
        char name[64];
        std::snprintf(name, sizeof name, "synthetic/poses/%s_%04zu", to_string(label), i);
        out.push_back({name, std::move(img), label});
    }
    return out;
}

void write_dataset(std::span<const LabeledSample> samples, const fs::path& root) {
    for (Label l : {Label::Fall, Label::NotFall}) fs::create_directories(root / to_string(l));
    std::size_t index = 0;
    for (const auto& s : samples) {
        char name[32];
        std::snprintf(name, sizeof name, "%06zu.ppm", index++);
        save_p6(s.image, root / to_string(s.label) / name);
    }
}

}  // namespace fallmon::data
