#include "cyclemae/checkpoint.hpp"

#include "json_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cyclemae::checkpoint {

namespace {

constexpr std::array<char, 8> kMagic{'C', 'Y', 'C', 'M', 'A', 'E', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw std::runtime_error("truncated checkpoint " + path.string());
    }
    return v;
}

void describe(detail::json& table, const ParamSet& set, const char* section) {
    for (const Parameter& p : set) {
        table.push_back({{"name", p.name},
                         {"section", section},
                         {"rows", p.value.rows()},
                         {"cols", p.value.cols()},
                         {"decay", p.decay}});
    }
}

void write_values(std::ostream& out, const ParamSet& set) {
    for (const Parameter& p : set) {
        out.write(reinterpret_cast<const char*>(p.value.data()),
                  static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    }
}

}  // namespace

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
    detail::json header;
    header["model"] = detail::to_json(ckpt.model_config);
    header["step"] = ckpt.step;
    header["metadata"] = ckpt.metadata;
    detail::json table = detail::json::array();
    describe(table, ckpt.params, "model");
    describe(table, ckpt.extra, "extra");
    header["tensors"] = std::move(table);
    const std::string text = header.dump();

    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write checkpoint " + path.string());
        }
        out.write(kMagic.data(), kMagic.size());
        write_pod(out, kVersion);
        write_pod(out, static_cast<std::uint64_t>(text.size()));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        write_values(out, ckpt.params);
        write_values(out, ckpt.extra);
        if (!out.flush()) {
            throw std::runtime_error("failed writing checkpoint " + path.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint " + path.string());
    }
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) {
        throw std::runtime_error(path.string() + " is not a checkpoint file");
    }
    const auto version = read_pod<std::uint32_t>(in, path);
    if (version != kVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    const auto length = read_pod<std::uint64_t>(in, path);
    std::string text(length, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(length))) {
        throw std::runtime_error("truncated checkpoint header in " + path.string());
    }
    const detail::json header = detail::json::parse(text);

    Checkpoint ckpt;
    ckpt.model_config = detail::model_config_from_json(header.at("model"), "model");
    ckpt.step = header.at("step").get<std::int64_t>();
    ckpt.metadata = header.at("metadata").get<std::map<std::string, std::string>>();
    for (const auto& t : header.at("tensors")) {
        const auto rows = t.at("rows").get<Eigen::Index>();
        const auto cols = t.at("cols").get<Eigen::Index>();
        Mat value(rows, cols);
        if (!in.read(reinterpret_cast<char*>(value.data()),
                     static_cast<std::streamsize>(value.size() * sizeof(double)))) {
            throw std::runtime_error("truncated tensor '" + t.at("name").get<std::string>() +
                                     "' in " + path.string());
        }
        ParamSet& target = t.at("section").get<std::string>() == "model" ? ckpt.params : ckpt.extra;
        target.add(t.at("name").get<std::string>(), std::move(value), t.at("decay").get<bool>());
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw std::runtime_error("trailing bytes after tensors in " + path.string());
    }
    return ckpt;
}

namespace {

void check_config(const backbone::ModelConfig& stored, const backbone::ModelConfig& expected) {
    const detail::json a = detail::to_json(stored);
    const detail::json b = detail::to_json(expected);
    for (const auto& [key, value] : b.items()) {
        if (a.at(key) != value) {
            throw std::invalid_argument("checkpoint model config mismatch at '" + key +
                                        "': stored " + a.at(key).dump() + ", expected " +
                                        value.dump());
        }
    }
}

}  // namespace

backbone::Model load_model(const std::filesystem::path& path,
                           const backbone::ModelConfig& expected) {
    Checkpoint ckpt = load(path);
    backbone::Model model = backbone::Model::from_params(expected, std::move(ckpt.params));
    check_config(ckpt.model_config, expected);
    return model;
}

backbone::Model to_model(const Checkpoint& ckpt) {
    return backbone::Model::from_params(ckpt.model_config, ckpt.params);
}

}  // namespace cyclemae::checkpoint
