#include "doctest.h"

#include "cyclemae/video.hpp"

#include <filesystem>
#include <fstream>
#include <set>

using namespace cyclemae;
using namespace cyclemae::video;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("cyclemae_video_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("derive_seed is deterministic and separates counters") {
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("uniform_index stays in range and hits every value") {
    Rng rng(9);
    std::set<std::size_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const std::size_t v = uniform_index(rng, 7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
    CHECK_THROWS_AS(uniform_index(rng, 0), std::invalid_argument);
}

TEST_CASE("synthetic clip is exactly periodic with pixels in [0, 1]") {
    SyntheticSpec spec;
    spec.frames = 24;
    spec.height = 32;
    spec.width = 32;
    spec.period = 6;
    const VideoClip clip = generate_periodic_clip(spec, 17);
    CHECK(clip.channels == 3);
    CHECK(clip.period_hint == 6);
    for (int f = 0; f + spec.period < spec.frames; ++f) {
        CHECK(clip.frames_equal(f, f + spec.period));
    }
    CHECK_FALSE(clip.frames_equal(0, 3));
    for (const float v : clip.data) {
        REQUIRE(v >= 0.0F);
        REQUIRE(v <= 1.0F);
    }
    const VideoClip again = generate_periodic_clip(spec, 17);
    CHECK(again.data == clip.data);
}

TEST_CASE("synthetic spec rejects invalid settings") {
    SyntheticSpec spec;
    spec.period = 40;
    spec.frames = 32;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = SyntheticSpec{};
    spec.amplitude = 1.5;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("label map marks the pulsating region") {
    SyntheticSpec spec;
    spec.amplitude = 0.35;
    const LabelMap mask = generate_periodic_mask(spec, 4);
    std::size_t first = 0;
    std::size_t quarter = 0;
    const std::size_t frame = static_cast<std::size_t>(spec.height * spec.width);
    for (std::size_t i = 0; i < frame; ++i) {
        first += mask.data[i];
        quarter += mask.data[2 * frame + i];
    }
    CHECK(first > 0);
    // Frame 2 of an 8-frame cycle is the radius maximum.
    CHECK(quarter > first);
}

TEST_CASE("reverse padding mirrors a half cycle without repeating endpoints") {
    CHECK(reverse_pad_indices(4) == std::vector<int>{0, 1, 2, 3, 2, 1});
    CHECK(reverse_pad_indices(2) == std::vector<int>{0, 1});
    CHECK_THROWS_AS(reverse_pad_indices(1), std::invalid_argument);

    VideoClip half = VideoClip::zeros(4, 2, 2);
    for (int t = 0; t < 4; ++t) {
        for (std::size_t i = 0; i < half.frame_size(); ++i) {
            half.data[static_cast<std::size_t>(t) * half.frame_size() + i] =
                static_cast<float>(t) / 4.0F;
        }
    }
    const VideoClip full = reverse_pad(half);
    CHECK(full.frames == 6);
    CHECK(full.period_hint == 6);
    CHECK(full.at(4, 0, 0, 0) == half.at(2, 0, 0, 0));
    CHECK(full.at(5, 1, 1, 2) == half.at(1, 1, 1, 2));
}

TEST_CASE("fit_to_length tiles by the period and crops long clips") {
    SyntheticSpec spec;
    spec.frames = 8;
    spec.height = 16;
    spec.width = 16;
    spec.period = 8;
    const VideoClip one_cycle = generate_periodic_clip(spec, 2);
    const VideoClip tiled = fit_to_length(one_cycle, 20);
    CHECK(tiled.frames == 20);
    for (int f = 8; f < 20; ++f) {
        CHECK(tiled.frames_equal(f, f - 8));
    }
    const VideoClip cropped = fit_to_length(tiled, 5);
    CHECK(cropped.frames == 5);
    CHECK(cropped.frames_equal(4, 4));
    CHECK(std::equal(cropped.data.begin(), cropped.data.end(), tiled.data.begin()));

    VideoClip half = one_cycle;
    half.period_hint.reset();
    half.frames = 5;
    half.data.resize(5 * half.frame_size());
    const VideoClip padded = fit_to_length(half, 16);
    CHECK(padded.frames == 16);
    CHECK(padded.period_hint == 8);
    // 0 1 2 3 4 3 2 1 | 0 1 ...
    std::vector<float> f5(padded.data.begin() + 5 * static_cast<std::ptrdiff_t>(padded.frame_size()),
                          padded.data.begin() + 6 * static_cast<std::ptrdiff_t>(padded.frame_size()));
    std::vector<float> h3(half.data.begin() + 3 * static_cast<std::ptrdiff_t>(half.frame_size()),
                          half.data.begin() + 4 * static_cast<std::ptrdiff_t>(half.frame_size()));
    CHECK(f5 == h3);
}

TEST_CASE("normalize_clip resizes and replicates grey input") {
    VideoClip grey = VideoClip::zeros(2, 4, 6, 1);
    for (std::size_t i = 0; i < grey.data.size(); ++i) {
        grey.data[i] = 0.5F;
    }
    const VideoClip out = normalize_clip(grey, 8, 8);
    CHECK(out.channels == 3);
    CHECK(out.height == 8);
    CHECK(out.width == 8);
    for (const float v : out.data) {
        REQUIRE(v == doctest::Approx(0.5));
    }
    CHECK_THROWS_AS(normalize_clip(grey, 0, 8), std::invalid_argument);

    SyntheticSpec spec;
    const VideoClip rgb = generate_periodic_clip(spec, 1);
    const VideoClip same = normalize_clip(rgb, spec.height, spec.width);
    CHECK(same.data == rgb.data);
}

TEST_CASE("corpus items depend only on spec and index") {
    CorpusSpec spec;
    spec.count = 6;
    spec.seed = 3;
    const auto corpus = generate_corpus(spec);
    REQUIRE(corpus.size() == 6);
    const CorpusItem again = generate_corpus_item(spec, 4);
    CHECK(again.clip.data == corpus[4].clip.data);
    for (const CorpusItem& item : corpus) {
        CHECK(spec.periods[static_cast<std::size_t>(item.class_label)] == item.spec.period);
        CHECK(item.spec.amplitude >= spec.amplitude_min);
        CHECK(item.spec.amplitude <= spec.amplitude_max);
    }
}

TEST_CASE("clip, mask, metadata and manifest round trip through files") {
    const auto dir = scratch_dir("io");
    CorpusSpec spec;
    spec.count = 2;
    const CorpusItem item = generate_corpus_item(spec, 1);

    write_clip(dir / "a.clip", item.clip);
    const VideoClip clip = read_clip(dir / "a.clip");
    CHECK(clip.data == item.clip.data);
    CHECK(clip.frames == item.clip.frames);

    write_label_map(dir / "a.mask", item.mask);
    CHECK(read_label_map(dir / "a.mask").data == item.mask.data);

    ClipMetadata meta;
    meta.source_id = "a";
    meta.period_hint = item.spec.period;
    meta.class_label = item.class_label;
    meta.spec = item.spec;
    meta.seed = 99;
    meta.has_mask = true;
    write_metadata(dir / "a.meta", meta);
    const ClipMetadata back = read_metadata(dir / "a.meta");
    CHECK(back.source_id == "a");
    CHECK(back.period_hint == meta.period_hint);
    CHECK(back.class_label == meta.class_label);
    CHECK(back.seed == meta.seed);
    REQUIRE(back.spec);
    CHECK(back.spec->amplitude == item.spec.amplitude);
    CHECK(back.spec->phase_offset == item.spec.phase_offset);

    write_manifest(dir / "manifest.tsv", {{"a", Split::test}});
    const auto samples = load_manifest_samples(dir / "manifest.tsv");
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].split == Split::test);
    CHECK(samples[0].mask.has_value());
    CHECK(samples[0].clip.source_id == "a");

    std::ofstream(dir / "b.meta") << "source_id = b\ncolour = red\n";
    CHECK_THROWS_WITH_AS(read_metadata(dir / "b.meta"), doctest::Contains("colour"),
                         std::exception);
    std::ofstream(dir / "bad.clip") << "not a clip";
    CHECK_THROWS(read_clip(dir / "bad.clip"));
}
