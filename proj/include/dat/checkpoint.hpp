#pragma once

// Checkpoint = JSON manifest + raw little-endian float32 blob.
//
//   {"format": "dat-checkpoint", "version": 1, "model_kind": "dat",
//    "config": {...}, "blob": "best.bin", "blob_bytes": N,
//    "parameters": [{"name": ..., "offset": <byte offset>, "shape": [...]}, ...]}
//
// model_kind "oracle" carries no parameters; it predicts the session labels
// and exists for pipeline checks.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "json.hpp"

#include "dat/model.hpp"

namespace dat {

inline constexpr int kCheckpointVersion = 1;

namespace detail {
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& manifest);
std::string read_blob(const std::filesystem::path& manifest, const nlohmann::json& j);
void write_checkpoint_files(const std::filesystem::path& manifest, const nlohmann::json& j, const std::string& blob);
}  // namespace detail

/// "dat" or "oracle".
std::string checkpoint_kind(const std::filesystem::path& manifest);
void write_oracle_checkpoint(const std::filesystem::path& manifest);

/// Writes `manifest` and a sibling blob named after its stem (".bin").
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& manifest, const DatModel<Scalar>& model) {
  nlohmann::json params = nlohmann::json::array();
  std::string blob;
  blob.reserve(static_cast<std::size_t>(model.parameters().count()) * 4);
  for (const auto& p : model.parameters().entries()) {
    params.push_back({{"name", p.name}, {"offset", blob.size()}, {"shape", p.tensor.shape()}});
    for (Index i = 0; i < p.tensor.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(p.tensor.value()[i]));
      for (int b = 0; b < 4; ++b) blob.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
    }
  }
  std::filesystem::path blob_name = manifest.filename();
  blob_name.replace_extension(".bin");
  const nlohmann::json j = {{"format", "dat-checkpoint"},
                            {"version", kCheckpointVersion},
                            {"model_kind", "dat"},
                            {"config", to_json(model.config())},
                            {"blob", blob_name.string()},
                            {"blob_bytes", blob.size()},
                            {"parameters", params}};
  detail::write_checkpoint_files(manifest, j, blob);
}

template <typename Scalar>
DatModel<Scalar> load_checkpoint(const std::filesystem::path& manifest) {
  const nlohmann::json j = detail::read_checkpoint_manifest(manifest);
  if (j.at("model_kind").get<std::string>() != "dat") {
    throw FormatError(manifest.string() + ": checkpoint kind '" + j.at("model_kind").get<std::string>() +
                      "' has no parameters");
  }
  DatModel<Scalar> model(model_config_from_json(j.at("config")));
  const std::string blob = detail::read_blob(manifest, j);
  std::size_t matched = 0;
  try {
    for (const auto& entry : j.at("parameters")) {
      const std::string name = entry.at("name").get<std::string>();
      const Shape shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      Tensor<Scalar> t;
      try {
        t = model.parameters().find(name);
      } catch (const std::out_of_range&) {
        throw FormatError(manifest.string() + ": unknown parameter " + name);
      }
      if (t.shape() != shape) {
        throw FormatError(manifest.string() + ": parameter " + name + " has shape " + to_string(shape) +
                          ", model expects " + to_string(t.shape()));
      }
      if (offset + 4 * static_cast<std::size_t>(t.size()) > blob.size()) {
        throw FormatError(manifest.string() + ": parameter " + name + " runs past the blob end",
                          static_cast<std::int64_t>(offset));
      }
      for (Index i = 0; i < t.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
          bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + 4 * static_cast<std::size_t>(i) +
                                                                            static_cast<std::size_t>(b)]))
                  << (8 * b);
        }
        t.mutable_value()[i] = static_cast<Scalar>(std::bit_cast<float>(bits));
      }
      ++matched;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  if (matched != model.parameters().entries().size()) {
    throw FormatError(manifest.string() + ": checkpoint holds " + std::to_string(matched) + " of " +
                      std::to_string(model.parameters().entries().size()) + " parameters");
  }
  return model;
}

}  // namespace dat
