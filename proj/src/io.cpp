#include "atune/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "atune/errors.hpp"

namespace atune {

namespace {

constexpr std::array<char, 8> kMagic{'A', 'T', 'U', 'N', 'E', 'B', 'I', 'N'};

template <typename U>
void put_le(std::string& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const unsigned char* p) {
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(p[i]) << (8 * i);
    return value;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::size_t element_bytes(Precision p) { return p == Precision::f32 ? 4 : 8; }

struct ParsedHeader {
    json header;
    std::size_t payload_offset = 0;
};

ParsedHeader parse_header(const std::string& bytes, const std::filesystem::path& path) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        throw MissingArtifact(path.string() + " is not an atune container");
    }
    const auto len = get_le<std::uint64_t>(reinterpret_cast<const unsigned char*>(bytes.data()) + 8);
    if (bytes.size() < 16 + len) throw MissingArtifact(path.string() + ": truncated header");
    ParsedHeader out;
    try {
        out.header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
    } catch (const json::exception& e) {
        throw MissingArtifact(path.string() + ": malformed header: " + e.what());
    }
    out.payload_offset = 16 + len;
    return out;
}

}  // namespace

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision precision_from_string(const std::string& name) {
    if (name == "f32") return Precision::f32;
    if (name == "f64") return Precision::f64;
    throw ValidationError("unknown precision '" + name + "' (expected f32 or f64)");
}

const Tensor& Container::block(const std::string& name) const {
    for (const auto& b : blocks) {
        if (b.name == name) return b.tensor;
    }
    throw MissingArtifact("container has no block named '" + name + "'");
}

void write_container(const std::filesystem::path& path, const Container& c) {
    json header;
    header["format"] = "atune-container";
    header["version"] = 1;
    header["kind"] = c.kind;
    header["precision"] = to_string(c.precision);
    header["byte_order"] = "little";
    header["meta"] = c.meta;
    json blocks = json::array();
    for (const auto& b : c.blocks) blocks.push_back({{"name", b.name}, {"shape", b.tensor.shape()}});
    header["blocks"] = blocks;

    const std::string text = header.dump();
    std::string bytes(kMagic.begin(), kMagic.end());
    put_le<std::uint64_t>(bytes, text.size());
    bytes += text;
    for (const auto& b : c.blocks) {
        for (double v : b.tensor.data()) {
            if (c.precision == Precision::f32) {
                put_le<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            } else {
                put_le<std::uint64_t>(bytes, std::bit_cast<std::uint64_t>(v));
            }
        }
    }

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Container read_container(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    auto [header, offset] = parse_header(bytes, path);
    Container c;
    try {
        c.kind = header.at("kind").get<std::string>();
        c.precision = precision_from_string(header.at("precision").get<std::string>());
        c.meta = header.value("meta", json::object());
        const std::size_t width = element_bytes(c.precision);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
        std::size_t remaining = bytes.size() - offset;
        for (const auto& b : header.at("blocks")) {
            Shape shape = b.at("shape").get<Shape>();
            const std::size_t count = shape_size(shape);
            if (remaining < count * width) throw MissingArtifact(path.string() + ": truncated payload");
            std::vector<double> data(count);
            for (std::size_t i = 0; i < count; ++i) {
                if (c.precision == Precision::f32) {
                    data[i] = std::bit_cast<float>(get_le<std::uint32_t>(p));
                } else {
                    data[i] = std::bit_cast<double>(get_le<std::uint64_t>(p));
                }
                p += width;
            }
            remaining -= count * width;
            c.blocks.push_back({b.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data))});
        }
    } catch (const json::exception& e) {
        throw MissingArtifact(path.string() + ": malformed header: " + e.what());
    }
    return c;
}

json read_container_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("cannot open " + path.string());
    std::string prefix(16, '\0');
    in.read(prefix.data(), 16);
    if (in.gcount() != 16 || std::memcmp(prefix.data(), kMagic.data(), kMagic.size()) != 0) {
        throw MissingArtifact(path.string() + " is not an atune container");
    }
    const auto len = get_le<std::uint64_t>(reinterpret_cast<const unsigned char*>(prefix.data()) + 8);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (static_cast<std::uint64_t>(in.gcount()) != len) throw MissingArtifact(path.string() + ": truncated header");
    return json::parse(text);
}

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

void save_model(const std::filesystem::path& path, const Model& model, const json& meta, Precision precision) {
    Container c;
    c.kind = "model";
    c.precision = precision;
    c.meta = meta;
    const LstmParams& p = model.cell();
    c.meta["model_kind"] = to_string(model.kind());
    c.meta["hidden"] = p.hidden_size();
    c.meta["inputs"] = p.input_size();
    c.meta["outputs"] = p.output_size();
    if (model.kind() == ModelKind::grid) {
        c.meta["rows"] = model.grid().rows;
        c.meta["cols"] = model.grid().cols;
    }
    c.blocks = {{"input_weights", p.input_weights()},
                {"recurrent_weights", p.recurrent_weights()},
                {"output_weights", p.output_weights()}};
    write_container(path, c);
}

Model load_model(const std::filesystem::path& path) {
    Container c = read_container(path);
    if (c.kind != "model") throw MissingArtifact(path.string() + " is a '" + c.kind + "' file, not a model");
    LstmParams p(c.block("input_weights"), c.block("recurrent_weights"), c.block("output_weights"));
    try {
        if (model_kind_from_string(c.meta.at("model_kind").get<std::string>()) == ModelKind::grid) {
            return Model(GridModelParams(std::move(p), c.meta.at("rows").get<std::size_t>(),
                                         c.meta.at("cols").get<std::size_t>()));
        }
    } catch (const json::exception& e) {
        throw MissingArtifact(path.string() + ": malformed model header: " + e.what());
    }
    return Model(std::move(p));
}

}  // namespace atune
