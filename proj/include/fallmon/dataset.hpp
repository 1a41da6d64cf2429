#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fallmon/fallnet.hpp"
#include "fallmon/sample.hpp"

namespace fallmon::data {

// --- NetPBM -----------------------------------------------------------------

/// Decodes binary P5 (gray) or P6 (RGB) with maxval ≤ 255 into an H×W×3
/// tensor of value/maxval. Gray input is replicated across the three channels.
Image load_netpbm(std::span<const std::uint8_t> bytes);
Image load_netpbm_file(const std::filesystem::path& path);

/// Encodes as binary P6, maxval 255. Values are clamped to [0,1] and rounded.
std::vector<std::uint8_t> encode_p6(const Image& image);
void save_p6(const Image& image, const std::filesystem::path& path);

/// Half-pixel-centre bilinear resampling with clamped borders.
Image resize_bilinear(const Image& image, std::size_t out_h, std::size_t out_w);

/// Decode, then resize to `size`×`size` when the image differs.
Image load_model_input(const std::filesystem::path& path, std::size_t size = 64);

// --- Manifests ----------------------------------------------------------------

struct ManifestEntry {
    std::filesystem::path path;
    Label label = Label::NotFall;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::map<Label, std::size_t> class_counts;

    std::size_t count(Label l) const {
        auto it = class_counts.find(l);
        return it == class_counts.end() ? 0 : it->second;
    }
};

/// "fall"/"1" → Fall, "not_fall"/"0" → NotFall.
Label parse_label(std::string_view text);

/// Reads `root/manifest.csv` (lines `path,label`, paths relative to root) when
/// present, otherwise the NetPBM files under `root/fall` and `root/not_fall`.
/// Entries are sorted by path and every file is checked for readability.
DatasetManifest load_manifest(const std::filesystem::path& root);

/// Decodes every entry into a model-ready sample.
std::vector<LabeledSample> load_samples(const DatasetManifest& manifest, std::size_t size = 64);

// --- Splitting ----------------------------------------------------------------

inline constexpr std::uint64_t kDefaultSplitSeed = 42;

struct Split {
    std::vector<ManifestEntry> train;
    std::vector<ManifestEntry> val;
};

/// Per-class seeded shuffle; round(n·fraction) of each class goes to
/// validation, clamped so both sides keep at least one sample.
Split stratified_split(const DatasetManifest& manifest, double val_fraction = 0.2,
                       std::uint64_t seed = kDefaultSplitSeed);

// --- Metrics ------------------------------------------------------------------

struct Metrics {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0;
    double recall = 0;
    double accuracy = 0;
    double f1 = 0;
    double mean_loss = 0;
    bool precision_undefined = false;  // tp+fp = 0; precision reported as 0
    bool recall_undefined = false;     // tp+fn = 0; recall reported as 0

    std::uint64_t total() const { return tp + fp + fn + tn; }
};

Metrics metrics_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn);

/// Confusion counts of thresholded predictions plus mean BCE.
Metrics evaluate(const fallnet::FallNet& model, std::span<const LabeledSample> samples, double threshold = 0.5);

/// Same bookkeeping from precomputed probabilities (probabilities[i] ↔ labels[i]).
Metrics evaluate_probabilities(std::span<const double> probabilities, std::span<const Label> labels,
                               double threshold = 0.5);

// --- Curves -------------------------------------------------------------------

/// `epoch,loss,accuracy,val_loss,val_accuracy` header, six decimals, LF endings.
std::string format_curves(std::span<const fallnet::EpochStats> stats);
void export_curves(std::span<const fallnet::EpochStats> stats, const std::filesystem::path& path);

// --- Synthetic sets -------------------------------------------------------------

/// Uniformly bright (fall) versus uniformly dark (not-fall) frames with mild noise.
std::vector<LabeledSample> synthetic_brightness(std::size_t count, std::uint64_t seed, std::size_t size = 64);

/// Procedural room scenes: a figure lying on the floor (fall) or upright
/// (not-fall) on a textured background, with varied colours, scale and position.
std::vector<LabeledSample> synthetic_poses(std::size_t count, std::uint64_t seed, std::size_t size = 64);

/// Writes samples as P6 files under root/fall and root/not_fall.
void write_dataset(std::span<const LabeledSample> samples, const std::filesystem::path& root);

/// Materialises split entries into samples.
std::vector<LabeledSample> to_samples(std::span<const ManifestEntry> entries, std::size_t size = 64);

}  // namespace fallmon::data
