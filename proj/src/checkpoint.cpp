#include "dat/checkpoint.hpp"

namespace dat {

namespace fs = std::filesystem;

namespace detail {

nlohmann::json read_checkpoint_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw FormatError("cannot open checkpoint " + manifest.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.at("format").get<std::string>() != "dat-checkpoint") throw FormatError(manifest.string() + ": not a checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw FormatError(manifest.string() + ": unsupported checkpoint version");
    }
    (void)j.at("model_kind").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  return j;
}

std::string read_blob(const fs::path& manifest, const nlohmann::json& j) {
  const fs::path blob_path = manifest.parent_path() / j.at("blob").get<std::string>();
  std::ifstream in(blob_path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint blob " + blob_path.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() != j.at("blob_bytes").get<std::size_t>()) {
    throw FormatError(blob_path.string() + ": blob has " + std::to_string(blob.size()) + " bytes, manifest says " +
                          std::to_string(j.at("blob_bytes").get<std::size_t>()),
                      static_cast<std::int64_t>(blob.size()));
  }
  return blob;
}

void write_checkpoint_files(const fs::path& manifest, const nlohmann::json& j, const std::string& blob) {
  if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
  if (j.contains("blob")) {
    const fs::path blob_path = manifest.parent_path() / j.at("blob").get<std::string>();
    std::ofstream out(blob_path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + blob_path.string());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + manifest.string());
  out << j.dump(1) << '\n';
}

}  // namespace detail

std::string checkpoint_kind(const fs::path& manifest) {
  return detail::read_checkpoint_manifest(manifest).at("model_kind").get<std::string>();
}

void write_oracle_checkpoint(const fs::path& manifest) {
  detail::write_checkpoint_files(manifest,
                                 {{"format", "dat-checkpoint"}, {"version", kCheckpointVersion}, {"model_kind", "oracle"}},
                                 {});
}

}  // namespace dat
