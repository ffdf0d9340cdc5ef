#pragma once

#include "cyclemae/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cyclemae::video {

/// A T x H x W x c clip with pixel values in [0, 1], stored frame-major
/// ([t][y][x][c]) as single-precision floats.
///
/// Model inputs are 3-channel; single-channel clips are accepted only as
/// ingestion inputs to normalize_clip(), which replicates them to 3 channels.
struct VideoClip {
    int frames = 0;
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<float> data;
    std::optional<int> period_hint;
    std::string source_id;

    static VideoClip zeros(int frames, int height, int width, int channels = 3);

    std::size_t index(int t, int y, int x, int c) const {
        return ((static_cast<std::size_t>(t) * static_cast<std::size_t>(height) +
                 static_cast<std::size_t>(y)) *
                    static_cast<std::size_t>(width) +
                static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(c);
    }
    float& at(int t, int y, int x, int c) { return data[index(t, y, x, c)]; }
    float at(int t, int y, int x, int c) const { return data[index(t, y, x, c)]; }

    std::size_t frame_size() const {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
               static_cast<std::size_t>(channels);
    }

    /// Throws std::invalid_argument naming the first violated invariant.
    void validate() const;
    bool frames_equal(int a, int b) const;
};

/// Per-pixel integer label map T x H x W (0 = background).
struct LabelMap {
    int frames = 0;
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    static LabelMap zeros(int frames, int height, int width);
    std::size_t index(int t, int y, int x) const {
        return (static_cast<std::size_t>(t) * static_cast<std::size_t>(height) +
                static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(width) +
               static_cast<std::size_t>(x);
    }
    std::uint8_t& at(int t, int y, int x) { return data[index(t, y, x)]; }
    std::uint8_t at(int t, int y, int x) const { return data[index(t, y, x)]; }
};

/// Parameters of the pulsating-ellipse generator.
struct SyntheticSpec {
    int frames = 32;
    int height = 64;
    int width = 64;
    int period = 8;             // frames per cycle
    double amplitude = 0.3;     // radius modulation depth in [0, 1]
    double noise_level = 0.05;  // multiplicative speckle std
    double phase_offset = 0.0;  // radians in [0, 2pi)

    void validate() const;
};

/// Bright ellipse whose radius follows 1 + amplitude * sin(2pi f / period + phase),
/// on a dim background, with multiplicative speckle. Frame f depends only on
/// (f mod period, seed), so the clip is exactly periodic.
VideoClip generate_periodic_clip(const SyntheticSpec& spec, std::uint64_t seed);

/// Ellipse-interior label map (1 inside, 0 outside) matching generate_periodic_clip.
LabelMap generate_periodic_mask(const SyntheticSpec& spec, std::uint64_t seed);

/// Frame order produced by reverse padding K frames: 0..K-1, K-2..1.
std::vector<int> reverse_pad_indices(int k);

/// Mirrors a half cycle into a full cycle of length 2K-2 (endpoints not repeated).
VideoClip reverse_pad(const VideoClip& half_cycle);

/// Crops to the first `target_frames` frames, or cyclically tiles a shorter
/// clip. A clip without a period hint is treated as a half cycle and reverse
/// padded before tiling.
VideoClip fit_to_length(const VideoClip& clip, int target_frames);

/// Bilinear resize (half-pixel centres, no aspect preservation); a 1-channel
/// source is replicated to 3 channels.
VideoClip normalize_clip(const VideoClip& clip, int out_height, int out_width);

/// One labelled member of a generated corpus.
struct CorpusItem {
    VideoClip clip;
    LabelMap mask;
    SyntheticSpec spec;
    std::uint64_t seed = 0;
    int class_label = 0;  // index of spec.period in CorpusSpec::periods
};

struct CorpusSpec {
    int count = 10;
    int frames = 32;
    int height = 64;
    int width = 64;
    std::vector<int> periods{8, 16};
    double amplitude_min = 0.25;
    double amplitude_max = 0.4;
    double noise_level = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Deterministic corpus: item i depends only on (spec, i).
std::vector<CorpusItem> generate_corpus(const CorpusSpec& spec);
CorpusItem generate_corpus_item(const CorpusSpec& spec, int index);

// ---------------------------------------------------------------------------
// On-disk layout: <stem>.clip (binary array), <stem>.meta (key = value text),
// optional <stem>.mask (binary label map), and a manifest listing clip paths
// with their split.

struct ClipMetadata {
    std::string source_id;
    std::optional<int> period_hint;
    std::optional<int> class_label;
    std::optional<SyntheticSpec> spec;
    std::optional<std::uint64_t> seed;
    bool has_mask = false;
};

void write_clip(const std::filesystem::path& path, const VideoClip& clip);
VideoClip read_clip(const std::filesystem::path& path);

void write_label_map(const std::filesystem::path& path, const LabelMap& map);
LabelMap read_label_map(const std::filesystem::path& path);

void write_metadata(const std::filesystem::path& path, const ClipMetadata& meta);
ClipMetadata read_metadata(const std::filesystem::path& path);

enum class Split { train, val, test };
std::string to_string(Split split);
Split parse_split(const std::string& text);

struct ManifestEntry {
    std::string path;  // relative to the manifest directory, without extension
    Split split = Split::train;
};

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// A clip loaded through a manifest together with its sidecar data.
struct StoredSample {
    VideoClip clip;
    ClipMetadata meta;
    std::optional<LabelMap> mask;
    Split split = Split::train;
};

std::vector<StoredSample> load_manifest_samples(const std::filesystem::path& manifest_path);

}  // namespace cyclemae::video
