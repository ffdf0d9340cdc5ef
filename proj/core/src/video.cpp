#include "cyclemae/video.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace cyclemae::video {

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) {
        throw std::invalid_argument(message);
    }
}

}  // namespace

VideoClip VideoClip::zeros(int frames, int height, int width, int channels) {
    VideoClip clip;
    clip.frames = frames;
    clip.height = height;
    clip.width = width;
    clip.channels = channels;
    clip.data.assign(static_cast<std::size_t>(std::max(frames, 0)) *
                         static_cast<std::size_t>(std::max(height, 0)) *
                         static_cast<std::size_t>(std::max(width, 0)) *
                         static_cast<std::size_t>(std::max(channels, 0)),
                     0.0f);
    return clip;
}

void VideoClip::validate() const {
    require(frames >= 1, "VideoClip: frames must be >= 1");
    require(height >= 1, "VideoClip: height must be >= 1");
    require(width >= 1, "VideoClip: width must be >= 1");
    require(channels == 3 || channels == 1, "VideoClip: channels must be 3 (or 1 for ingestion)");
    require(data.size() == static_cast<std::size_t>(frames) * frame_size(),
            "VideoClip: data size does not match dimensions");
    if (period_hint) {
        require(*period_hint >= 2 && *period_hint <= frames,
                "VideoClip: period_hint must lie in [2, frames]");
    }
    for (const float v : data) {
        require(v >= 0.0f && v <= 1.0f, "VideoClip: pixel value outside [0, 1]");
    }
}

bool VideoClip::frames_equal(int a, int b) const {
    const std::size_t n = frame_size();
    return std::memcmp(data.data() + static_cast<std::size_t>(a) * n,
                       data.data() + static_cast<std::size_t>(b) * n, n * sizeof(float)) == 0;
}

LabelMap LabelMap::zeros(int frames, int height, int width) {
    LabelMap map;
    map.frames = frames;
    map.height = height;
    map.width = width;
    map.data.assign(static_cast<std::size_t>(frames) * static_cast<std::size_t>(height) *
                        static_cast<std::size_t>(width),
                    0);
    return map;
}

void SyntheticSpec::validate() const {
    require(frames >= 1 && height >= 1 && width >= 1,
            "SyntheticSpec: frames, height and width must be positive");
    require(period >= 2, "SyntheticSpec: period must be >= 2");
    require(frames >= period, "SyntheticSpec: frames < period, clip cannot hold a complete cycle");
    require(amplitude >= 0.0 && amplitude <= 1.0, "SyntheticSpec: amplitude outside [0, 1]");
    require(noise_level >= 0.0, "SyntheticSpec: noise_level must be >= 0");
    require(phase_offset >= 0.0 && phase_offset < 2.0 * std::numbers::pi,
            "SyntheticSpec: phase_offset outside [0, 2pi)");
}

namespace {

/// Clip-level appearance drawn from the seed.
struct EllipseGeometry {
    double cx, cy;  // centre in pixels
    double ax, ay;  // rest semi-axes in pixels
    double foreground, background;
};

EllipseGeometry geometry_for(const SyntheticSpec& spec, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x67656f6dULL));
    EllipseGeometry g{};
    const double w = spec.width;
    const double h = spec.height;
    g.cx = 0.5 * w + (uniform_unit(rng) - 0.5) * 0.1 * w;
    g.cy = 0.5 * h + (uniform_unit(rng) - 0.5) * 0.1 * h;
    g.ax = (0.2 + 0.06 * uniform_unit(rng)) * w;
    g.ay = (0.24 + 0.06 * uniform_unit(rng)) * h;
    g.foreground = 0.75 + 0.15 * uniform_unit(rng);
    g.background = 0.1 + 0.1 * uniform_unit(rng);
    return g;
}

double radius_scale(const SyntheticSpec& spec, int phase_index) {
    const double angle =
        2.0 * std::numbers::pi * static_cast<double>(phase_index) / spec.period + spec.phase_offset;
    return 1.0 + spec.amplitude * std::sin(angle);
}

/// Normalised elliptical radius of the pixel centre; < 1 inside.
double ellipse_rho(const EllipseGeometry& g, double s, int y, int x) {
    const double ax = g.ax * s;
    const double ay = g.ay * s;
    if (ax <= 1e-9 || ay <= 1e-9) {
        return std::numeric_limits<double>::infinity();
    }
    const double dx = (x + 0.5 - g.cx) / ax;
    const double dy = (y + 0.5 - g.cy) / ay;
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

VideoClip generate_periodic_clip(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    const EllipseGeometry g = geometry_for(spec, seed);
    VideoClip clip = VideoClip::zeros(spec.frames, spec.height, spec.width, 3);
    clip.period_hint = spec.period;
    clip.source_id = "synthetic-" + std::to_string(seed);

    std::vector<float> phase_frame(static_cast<std::size_t>(spec.height * spec.width));
    for (int phase = 0; phase < std::min(spec.period, spec.frames); ++phase) {
        const double s = radius_scale(spec, phase);
        const double edge = std::min(g.ax, g.ay) * s;
        Rng noise_rng(derive_seed(seed, 0x6e6f697365ULL, static_cast<std::uint64_t>(phase)));
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const double rho = ellipse_rho(g, s, y, x);
                // One-pixel anti-aliased edge.
                const double inside =
                    std::isfinite(rho) ? std::clamp(0.5 + (1.0 - rho) * edge, 0.0, 1.0) : 0.0;
                double v = g.background + (g.foreground - g.background) * inside;
                if (spec.noise_level > 0.0) {
                    v *= 1.0 + spec.noise_level * standard_normal(noise_rng);
                }
                phase_frame[static_cast<std::size_t>(y * spec.width + x)] =
                    static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
        for (int f = phase; f < spec.frames; f += spec.period) {
            for (int y = 0; y < spec.height; ++y) {
                for (int x = 0; x < spec.width; ++x) {
                    const float v = phase_frame[static_cast<std::size_t>(y * spec.width + x)];
                    for (int c = 0; c < 3; ++c) {
                        clip.at(f, y, x, c) = v;
                    }
                }
            }
        }
    }
    return clip;
}

LabelMap generate_periodic_mask(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    const EllipseGeometry g = geometry_for(spec, seed);
    LabelMap map = LabelMap::zeros(spec.frames, spec.height, spec.width);
    for (int f = 0; f < spec.frames; ++f) {
        const double s = radius_scale(spec, f % spec.period);
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                map.at(f, y, x) = ellipse_rho(g, s, y, x) <= 1.0 ? 1 : 0;
            }
        }
    }
    return map;
}

std::vector<int> reverse_pad_indices(int k) {
    if (k < 2) {
        throw std::invalid_argument("reverse_pad: need at least 2 frames, got " + std::to_string(k));
    }
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(2 * k - 2));
    for (int i = 0; i < k; ++i) {
        order.push_back(i);
    }
    for (int i = k - 2; i >= 1; --i) {
        order.push_back(i);
    }
    return order;
}

namespace {

VideoClip select_frames(const VideoClip& clip, const std::vector<int>& order) {
    VideoClip out = VideoClip::zeros(static_cast<int>(order.size()), clip.height, clip.width,
                                     clip.channels);
    out.source_id = clip.source_id;
    const std::size_t n = clip.frame_size();
    for (std::size_t i = 0; i < order.size(); ++i) {
        std::copy_n(clip.data.begin() + static_cast<std::ptrdiff_t>(order[i] * n), n,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    return out;
}

}  // namespace

VideoClip reverse_pad(const VideoClip& half_cycle) {
    VideoClip out = select_frames(half_cycle, reverse_pad_indices(half_cycle.frames));
    if (out.frames >= 2) {
        out.period_hint = out.frames;
    }
    return out;
}

VideoClip fit_to_length(const VideoClip& clip, int target_frames) {
    if (target_frames < 1) {
        throw std::invalid_argument("fit_to_length: target length must be >= 1");
    }
    if (clip.frames < 1) {
        throw std::invalid_argument("fit_to_length: empty clip");
    }
    if (clip.frames >= target_frames) {
        std::vector<int> order(static_cast<std::size_t>(target_frames));
        for (int i = 0; i < target_frames; ++i) {
            order[static_cast<std::size_t>(i)] = i;
        }
        VideoClip out = select_frames(clip, order);
        if (clip.period_hint && *clip.period_hint <= target_frames) {
            out.period_hint = clip.period_hint;
        }
        return out;
    }

    VideoClip base = clip;
    if (!base.period_hint && base.frames >= 2) {
        base = reverse_pad(clip);
    }
    // Frames past the end repeat one period earlier, so the prefix is kept and
    // the continuation stays exactly periodic.
    const int period = base.period_hint.value_or(base.frames);
    std::vector<int> order(static_cast<std::size_t>(target_frames));
    for (int i = 0; i < target_frames; ++i) {
        order[static_cast<std::size_t>(i)] = i < base.frames ? i : order[static_cast<std::size_t>(i - period)];
    }
    VideoClip out = select_frames(base, order);
    if (base.period_hint && *base.period_hint <= target_frames) {
        out.period_hint = base.period_hint;
    }
    return out;
}

VideoClip normalize_clip(const VideoClip& clip, int out_height, int out_width) {
    if (out_height < 1 || out_width < 1) {
        throw std::invalid_argument("normalize_clip: target dimensions must be positive");
    }
    if (clip.channels != 1 && clip.channels != 3) {
        throw std::invalid_argument("normalize_clip: source must have 1 or 3 channels");
    }
    VideoClip out = VideoClip::zeros(clip.frames, out_height, out_width, 3);
    out.period_hint = clip.period_hint;
    out.source_id = clip.source_id;

    struct Tap {
        int lo, hi;
        double w;  // weight of hi
    };
    auto taps = [](int in, int out_n) {
        std::vector<Tap> result(static_cast<std::size_t>(out_n));
        const double ratio = static_cast<double>(in) / out_n;
        for (int o = 0; o < out_n; ++o) {
            double src = (o + 0.5) * ratio - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(in - 1));
            const int lo = static_cast<int>(std::floor(src));
            const int hi = std::min(lo + 1, in - 1);
            result[static_cast<std::size_t>(o)] = Tap{lo, hi, src - lo};
        }
        return result;
    };
    const auto ty = taps(clip.height, out_height);
    const auto tx = taps(clip.width, out_width);

    for (int t = 0; t < clip.frames; ++t) {
        for (int y = 0; y < out_height; ++y) {
            const Tap& a = ty[static_cast<std::size_t>(y)];
            for (int x = 0; x < out_width; ++x) {
                const Tap& b = tx[static_cast<std::size_t>(x)];
                for (int c = 0; c < 3; ++c) {
                    const int sc = clip.channels == 1 ? 0 : c;
                    const double top = (1.0 - b.w) * clip.at(t, a.lo, b.lo, sc) +
                                       b.w * clip.at(t, a.lo, b.hi, sc);
                    const double bottom = (1.0 - b.w) * clip.at(t, a.hi, b.lo, sc) +
                                          b.w * clip.at(t, a.hi, b.hi, sc);
                    const double v = (1.0 - a.w) * top + a.w * bottom;
                    out.at(t, y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
            }
        }
    }
    return out;
}

void CorpusSpec::validate() const {
    require(count >= 1, "CorpusSpec: count must be >= 1");
    require(!periods.empty(), "CorpusSpec: periods must not be empty");
    for (const int p : periods) {
        require(p >= 2 && p <= frames, "CorpusSpec: every period must lie in [2, frames]");
    }
    require(amplitude_min >= 0.0 && amplitude_max <= 1.0 && amplitude_min <= amplitude_max,
            "CorpusSpec: amplitude range must satisfy 0 <= min <= max <= 1");
    require(noise_level >= 0.0, "CorpusSpec: noise_level must be >= 0");
}

CorpusItem generate_corpus_item(const CorpusSpec& spec, int index) {
    const std::uint64_t item_seed = derive_seed(spec.seed, 0x636f72707573ULL,
                                                static_cast<std::uint64_t>(index));
    Rng rng(item_seed);
    CorpusItem item;
    item.class_label = static_cast<int>(uniform_index(rng, spec.periods.size()));
    item.spec.frames = spec.frames;
    item.spec.height = spec.height;
    item.spec.width = spec.width;
    item.spec.period = spec.periods[static_cast<std::size_t>(item.class_label)];
    item.spec.amplitude =
        spec.amplitude_min + (spec.amplitude_max - spec.amplitude_min) * uniform_unit(rng);
    item.spec.noise_level = spec.noise_level;
    item.spec.phase_offset = 2.0 * std::numbers::pi * uniform_unit(rng);
    if (item.spec.phase_offset >= 2.0 * std::numbers::pi) {
        item.spec.phase_offset = 0.0;
    }
    item.seed = item_seed;
    item.clip = generate_periodic_clip(item.spec, item_seed);
    item.clip.source_id = "corpus-" + std::to_string(index);
    item.mask = generate_periodic_mask(item.spec, item_seed);
    return item;
}

std::vector<CorpusItem> generate_corpus(const CorpusSpec& spec) {
    spec.validate();
    std::vector<CorpusItem> items;
    items.reserve(static_cast<std::size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) {
        items.push_back(generate_corpus_item(spec, i));
    }
    return items;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr std::array<char, 8> kClipMagic{'E', 'C', 'H', 'O', 'C', 'L', 'P', '1'};
constexpr std::array<char, 8> kMaskMagic{'E', 'C', 'H', 'O', 'M', 'S', 'K', '1'};

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path.string());
    }
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open for reading: " + path.string());
    }
    return in;
}

void write_i32(std::ostream& out, std::int32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::int32_t read_i32(std::istream& in) {
    std::int32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

void check_magic(std::istream& in, const std::array<char, 8>& magic,
                 const std::filesystem::path& path) {
    std::array<char, 8> got{};
    in.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!in || got != magic) {
        throw std::runtime_error("bad file signature: " + path.string());
    }
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

void write_clip(const std::filesystem::path& path, const VideoClip& clip) {
    clip.validate();
    auto out = open_out(path);
    out.write(kClipMagic.data(), static_cast<std::streamsize>(kClipMagic.size()));
    write_i32(out, clip.frames);
    write_i32(out, clip.height);
    write_i32(out, clip.width);
    write_i32(out, clip.channels);
    out.write(reinterpret_cast<const char*>(clip.data.data()),
              static_cast<std::streamsize>(clip.data.size() * sizeof(float)));
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

VideoClip read_clip(const std::filesystem::path& path) {
    auto in = open_in(path);
    check_magic(in, kClipMagic, path);
    const int t = read_i32(in);
    const int h = read_i32(in);
    const int w = read_i32(in);
    const int c = read_i32(in);
    if (!in || t < 1 || h < 1 || w < 1 || (c != 1 && c != 3)) {
        throw std::runtime_error("corrupt clip header: " + path.string());
    }
    VideoClip clip = VideoClip::zeros(t, h, w, c);
    in.read(reinterpret_cast<char*>(clip.data.data()),
            static_cast<std::streamsize>(clip.data.size() * sizeof(float)));
    if (!in) {
        throw std::runtime_error("truncated clip data: " + path.string());
    }
    return clip;
}

void write_label_map(const std::filesystem::path& path, const LabelMap& map) {
    auto out = open_out(path);
    out.write(kMaskMagic.data(), static_cast<std::streamsize>(kMaskMagic.size()));
    write_i32(out, map.frames);
    write_i32(out, map.height);
    write_i32(out, map.width);
    out.write(reinterpret_cast<const char*>(map.data.data()),
              static_cast<std::streamsize>(map.data.size()));
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

LabelMap read_label_map(const std::filesystem::path& path) {
    auto in = open_in(path);
    check_magic(in, kMaskMagic, path);
    const int t = read_i32(in);
    const int h = read_i32(in);
    const int w = read_i32(in);
    if (!in || t < 1 || h < 1 || w < 1) {
        throw std::runtime_error("corrupt mask header: " + path.string());
    }
    LabelMap map = LabelMap::zeros(t, h, w);
    in.read(reinterpret_cast<char*>(map.data.data()),
            static_cast<std::streamsize>(map.data.size()));
    if (!in) {
        throw std::runtime_error("truncated mask data: " + path.string());
    }
    return map;
}

void write_metadata(const std::filesystem::path& path, const ClipMetadata& meta) {
    auto out = open_out(path);
    out << "source_id = " << meta.source_id << '\n';
    if (meta.period_hint) {
        out << "period_hint = " << *meta.period_hint << '\n';
    }
    if (meta.class_label) {
        out << "class_label = " << *meta.class_label << '\n';
    }
    if (meta.seed) {
        out << "seed = " << *meta.seed << '\n';
    }
    out << "has_mask = " << (meta.has_mask ? "true" : "false") << '\n';
    if (meta.spec) {
        const SyntheticSpec& s = *meta.spec;
        out << "spec.frames = " << s.frames << '\n'
            << "spec.height = " << s.height << '\n'
            << "spec.width = " << s.width << '\n'
            << "spec.period = " << s.period << '\n'
            << "spec.amplitude = " << format_double(s.amplitude) << '\n'
            << "spec.noise_level = " << format_double(s.noise_level) << '\n'
            << "spec.phase_offset = " << format_double(s.phase_offset) << '\n';
    }
}

ClipMetadata read_metadata(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::map<std::string, std::string> kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": expected 'key = value'");
        }
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    ClipMetadata meta;
    auto take = [&](const std::string& key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) {
            return std::nullopt;
        }
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    meta.source_id = take("source_id").value_or("");
    if (auto v = take("period_hint")) meta.period_hint = std::stoi(*v);
    if (auto v = take("class_label")) meta.class_label = std::stoi(*v);
    if (auto v = take("seed")) meta.seed = std::stoull(*v);
    if (auto v = take("has_mask")) meta.has_mask = (*v == "true");
    if (auto v = take("spec.frames")) {
        SyntheticSpec s;
        s.frames = std::stoi(*v);
        s.height = std::stoi(take("spec.height").value_or("0"));
        s.width = std::stoi(take("spec.width").value_or("0"));
        s.period = std::stoi(take("spec.period").value_or("0"));
        s.amplitude = std::stod(take("spec.amplitude").value_or("0"));
        s.noise_level = std::stod(take("spec.noise_level").value_or("0"));
        s.phase_offset = std::stod(take("spec.phase_offset").value_or("0"));
        meta.spec = s;
    }
    if (!kv.empty()) {
        throw std::runtime_error(path.string() + ": unknown metadata key '" + kv.begin()->first +
                                 "'");
    }
    return meta;
}

std::string to_string(Split split) {
    switch (split) {
        case Split::train:
            return "train";
        case Split::val:
            return "val";
        case Split::test:
            return "test";
    }
    return "train";
}

Split parse_split(const std::string& text) {
    if (text == "train") return Split::train;
    if (text == "val") return Split::val;
    if (text == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + text + "'");
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
    auto out = open_out(path);
    out << "path\tsplit\n";
    for (const auto& e : entries) {
        out << e.path << '\t' << to_string(e.split) << '\n';
    }
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || line != "path\tsplit") {
        throw std::runtime_error(path.string() + ": missing 'path<TAB>split' header");
    }
    std::vector<ManifestEntry> entries;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": expected two tab-separated columns");
        }
        entries.push_back(ManifestEntry{line.substr(0, tab), parse_split(line.substr(tab + 1))});
    }
    return entries;
}

std::vector<StoredSample> load_manifest_samples(const std::filesystem::path& manifest_path) {
    const auto entries = read_manifest(manifest_path);
    const auto root = manifest_path.parent_path();
    std::vector<StoredSample> samples;
    samples.reserve(entries.size());
    for (const auto& e : entries) {
        const auto stem = root / e.path;
        StoredSample s;
        s.clip = read_clip(stem.string() + ".clip");
        s.meta = read_metadata(stem.string() + ".meta");
        s.clip.period_hint = s.meta.period_hint;
        s.clip.source_id = s.meta.source_id;
        if (s.meta.has_mask) {
            s.mask = read_label_map(stem.string() + ".mask");
        }
        s.split = e.split;
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace cyclemae::video
