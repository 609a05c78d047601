#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "atune/model.hpp"
#include "atune/tensor.hpp"

namespace atune {

using json = nlohmann::json;

enum class Precision { f32, f64 };

std::string to_string(Precision p);
Precision precision_from_string(const std::string& name);

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// On-disk layout shared by parameter, dataset and trace files:
///
///   8 bytes   magic "ATUNEBIN"
///   8 bytes   header length N, little-endian uint64
///   N bytes   UTF-8 JSON header
///   payload   blocks in header order, little-endian IEEE-754 (f32 or f64)
///
/// The header carries "kind", "precision", "blocks" ([{name, shape}]) and a
/// free-form "meta" object.
struct Container {
    std::string kind;
    Precision precision = Precision::f64;
    json meta = json::object();
    std::vector<NamedTensor> blocks;

    const Tensor& block(const std::string& name) const;
};

void write_container(const std::filesystem::path& path, const Container& container);
Container read_container(const std::filesystem::path& path);
// Header only; the payload is not read.
json read_container_header(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);

// Parameter files hold exactly three blocks: input_weights,
// recurrent_weights, output_weights.
void save_model(const std::filesystem::path& path, const Model& model, const json& meta = json::object(),
                Precision precision = Precision::f64);
Model load_model(const std::filesystem::path& path);

}  // namespace atune
