#include "dat/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "json.hpp"

namespace dat {

namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)])) << (8 * i);
  }
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

}  // namespace

std::string encode_matrix(const FeatureMatrix& m) {
  if (m.rows() > 0xFFFFFFFFll || m.cols() > 0xFFFFFFFFll) throw FormatError("matrix too large for DATF");
  std::string out;
  out.reserve(kDatfHeaderBytes + 4 * static_cast<std::size_t>(m.size()));
  out.append("DATF");
  put_u32(out, kDatfVersion);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Index i = 0; i < m.size(); ++i) {
    const float v = m.data()[i];
    if (!std::isfinite(v)) {
      throw FormatError("DATF refuses non-finite value at row " + std::to_string(i / m.cols()) + ", col " +
                        std::to_string(i % m.cols()));
    }
    put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

FeatureMatrix decode_matrix(std::string_view bytes, const std::string& source) {
  if (bytes.size() < kDatfHeaderBytes) {
    throw FormatError(source + ": truncated DATF header at byte " + std::to_string(bytes.size()),
                      static_cast<std::int64_t>(bytes.size()));
  }
  if (bytes.substr(0, 4) != "DATF") throw FormatError(source + ": bad DATF magic at byte 0", 0);
  if (const auto version = get_u32(bytes, 4); version != kDatfVersion) {
    throw FormatError(source + ": unsupported DATF version " + std::to_string(version) + " at byte 4", 4);
  }
  const std::uint64_t rows = get_u32(bytes, 8);
  const std::uint64_t cols = get_u32(bytes, 12);
  const std::uint64_t expected = kDatfHeaderBytes + 4 * rows * cols;
  if (bytes.size() < expected) {
    throw FormatError(source + ": truncated DATF payload, expected " + std::to_string(expected) + " bytes, file ends at " +
                          std::to_string(bytes.size()),
                      static_cast<std::int64_t>(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw FormatError(source + ": DATF size mismatch, " + std::to_string(bytes.size() - expected) +
                          " trailing bytes from byte " + std::to_string(expected),
                      static_cast<std::int64_t>(expected));
  }
  FeatureMatrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (Index i = 0; i < m.size(); ++i) {
    const std::size_t offset = kDatfHeaderBytes + 4 * static_cast<std::size_t>(i);
    const float v = std::bit_cast<float>(get_u32(bytes, offset));
    if (!std::isfinite(v)) {
      throw FormatError(source + ": non-finite value at byte " + std::to_string(offset), static_cast<std::int64_t>(offset));
    }
    m.data()[i] = v;
  }
  return m;
}

void write_matrix(const fs::path& path, const FeatureMatrix& m) { write_file(path, encode_matrix(m)); }

FeatureMatrix read_matrix(const fs::path& path) { return decode_matrix(read_file(path), path.string()); }

std::string_view to_string(Role role) { return role == Role::target ? "target" : "partner"; }

bool RoleStreams::operator==(const RoleStreams& other) const {
  for (std::size_t i = 0; i < kStreamCount; ++i) {
    if (streams[i].rows() != other.streams[i].rows() || streams[i].cols() != other.streams[i].cols() ||
        streams[i] != other.streams[i]) {
      return false;
    }
  }
  if (labels.has_value() != other.labels.has_value()) return false;
  return !labels || (labels->size() == other.labels->size() && *labels == *other.labels);
}

const RoleStreams& SessionRecord::role(Role r) const {
  if (r == Role::target) return target;
  if (!partner) throw FormatError("session " + id + " has no partner role");
  return *partner;
}

void SessionRecord::validate() const {
  if (frames < 1) throw FormatError("session " + id + ": no frames");
  auto check_role = [&](const RoleStreams& rs, Role r) {
    for (std::size_t i = 0; i < kStreamCount; ++i) {
      const auto& m = rs.streams[i];
      const std::string where = "session " + id + ", " + std::string(to_string(r)) + "/" + std::string(kStreamFiles[i]);
      if (m.rows() != frames) {
        throw FormatError(where + ": " + std::to_string(m.rows()) + " rows, expected " + std::to_string(frames));
      }
      if (m.cols() != feature_dims[i]) {
        throw FormatError(where + ": width " + std::to_string(m.cols()) + ", manifest says " +
                          std::to_string(feature_dims[i]));
      }
    }
    if (rs.labels) {
      const std::string where = "session " + id + ", " + std::string(to_string(r)) + "/labels";
      if (rs.labels->size() != frames) {
        throw FormatError(where + ": " + std::to_string(rs.labels->size()) + " rows, expected " + std::to_string(frames));
      }
      for (Index t = 0; t < frames; ++t) {
        const float y = (*rs.labels)[t];
        if (!(y >= 0.0f && y <= 1.0f)) {
          throw FormatError(where + ": label " + std::to_string(y) + " outside [0, 1] at frame " + std::to_string(t));
        }
      }
    }
  };
  check_role(target, Role::target);
  if (partner) check_role(*partner, Role::partner);
}

bool SessionRecord::operator==(const SessionRecord& other) const {
  return id == other.id && frame_rate_hz == other.frame_rate_hz && frames == other.frames &&
         feature_dims == other.feature_dims && target == other.target && partner == other.partner;
}

void write_session(const fs::path& dir, const SessionRecord& session) {
  session.validate();
  fs::create_directories(dir);
  nlohmann::json dims;
  for (std::size_t i = 0; i < kStreamCount; ++i) dims[std::string(kStreamFiles[i])] = session.feature_dims[i];
  nlohmann::json roles = nlohmann::json::array({"target"});
  if (session.partner) roles.push_back("partner");
  const nlohmann::json manifest = {{"schema_version", kSessionSchemaVersion},
                                   {"session_id", session.id},
                                   {"frame_rate_hz", session.frame_rate_hz},
                                   {"num_frames", session.frames},
                                   {"feature_dims", dims},
                                   {"roles", roles}};
  {
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
  }
  auto write_role = [&](const RoleStreams& rs, Role r) {
    const fs::path sub = dir / std::string(to_string(r));
    fs::create_directories(sub);
    for (std::size_t i = 0; i < kStreamCount; ++i) {
      write_matrix(sub / (std::string(kStreamFiles[i]) + ".datf"), rs.streams[i]);
    }
    if (rs.labels) write_matrix(sub / "labels.datf", FeatureMatrix(*rs.labels));
  };
  write_role(session.target, Role::target);
  if (session.partner) write_role(*session.partner, Role::partner);
}

SessionRecord load_session(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw FormatError("missing " + manifest_path.string());
  SessionRecord rec;
  std::vector<std::string> roles;
  try {
    const auto manifest = nlohmann::json::parse(read_file(manifest_path));
    const int schema = manifest.at("schema_version").get<int>();
    if (schema != kSessionSchemaVersion) {
      throw FormatError(manifest_path.string() + ": unsupported schema_version " + std::to_string(schema));
    }
    rec.id = manifest.at("session_id").get<std::string>();
    rec.frame_rate_hz = manifest.at("frame_rate_hz").get<double>();
    rec.frames = manifest.at("num_frames").get<Index>();
    for (std::size_t i = 0; i < kStreamCount; ++i) {
      rec.feature_dims[i] = manifest.at("feature_dims").at(std::string(kStreamFiles[i])).get<Index>();
    }
    roles = manifest.at("roles").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  if (std::find(roles.begin(), roles.end(), "target") == roles.end()) {
    throw FormatError(manifest_path.string() + ": roles must include target");
  }
  auto load_role = [&](Role r) {
    const fs::path sub = dir / std::string(to_string(r));
    RoleStreams rs;
    for (std::size_t i = 0; i < kStreamCount; ++i) {
      const fs::path file = sub / (std::string(kStreamFiles[i]) + ".datf");
      if (!fs::exists(file)) throw FormatError("session " + rec.id + ": missing stream " + file.string());
      rs.streams[i] = read_matrix(file);
    }
    if (fs::exists(sub / "labels.datf")) {
      const FeatureMatrix labels = read_matrix(sub / "labels.datf");
      if (labels.cols() != 1) throw FormatError("session " + rec.id + ": labels must have one column");
      rs.labels = LabelVector(Eigen::Map<const LabelVector>(labels.data(), labels.rows()));
    }
    return rs;
  };
  rec.target = load_role(Role::target);
  if (std::find(roles.begin(), roles.end(), "partner") != roles.end()) rec.partner = load_role(Role::partner);
  rec.validate();
  return rec;
}

std::vector<SessionRecord> load_sessions(const fs::path& root) {
  if (fs::exists(root / "manifest.json")) return {load_session(root)};
  if (!fs::is_directory(root)) throw FormatError("not a session directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw FormatError("no sessions under " + root.string());
  std::vector<SessionRecord> out;
  for (const auto& d : dirs) out.push_back(load_session(d));
  return out;
}

RoleStreams partner_aggregate(const std::vector<RoleStreams>& partners) {
  if (partners.empty()) throw std::invalid_argument("partner_aggregate needs at least one partner");
  if (partners.size() == 1) return partners.front();
  RoleStreams out = partners.front();
  bool all_labels = true;
  for (const auto& p : partners) all_labels = all_labels && p.labels.has_value();
  for (std::size_t k = 1; k < partners.size(); ++k) {
    for (std::size_t i = 0; i < kStreamCount; ++i) {
      if (partners[k].streams[i].rows() != out.streams[i].rows() ||
          partners[k].streams[i].cols() != out.streams[i].cols()) {
        throw FormatError("partner_aggregate: partner " + std::to_string(k) + " stream " +
                          std::string(kStreamFiles[i]) + " has " + std::to_string(partners[k].streams[i].rows()) +
                          " frames, expected " + std::to_string(out.streams[i].rows()));
      }
      out.streams[i] += partners[k].streams[i];
    }
    if (all_labels) {
      if (partners[k].labels->size() != out.labels->size()) throw FormatError("partner_aggregate: label length mismatch");
      *out.labels += *partners[k].labels;
    }
  }
  const float inv = 1.0f / static_cast<float>(partners.size());
  for (auto& m : out.streams) m *= inv;
  if (all_labels) *out.labels *= inv;
  else out.labels.reset();
  return out;
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw UsageError("invalid synth config: " + msg); };
  if (sessions < 0) fail("sessions must be >= 0");
  if (frames < 1) fail("frames must be >= 1");
  if (!(kappa >= 0.0 && kappa <= 1.0)) fail("kappa must be in [0, 1]");
  if (!(sigma_latent >= 0.0)) fail("sigma_latent must be >= 0");
  if (smooth_window < 1) fail("smooth_window must be >= 1");
  if (!(partner_coupling >= -1.0 && partner_coupling <= 1.0)) fail("partner_coupling must be in [-1, 1]");
  if (!(sigma_obs >= 0.0)) fail("sigma_obs must be >= 0");
  if (quantize_levels < 0 || quantize_levels == 1) fail("quantize_levels must be 0 or >= 2");
  if (!(feature_gain > 0.0)) fail("feature_gain must be positive");
  for (Index dim : feature_dims)
    if (dim < 1) fail("feature dims must be positive");
}

namespace {

// Independent stream per (seed, purpose tags).
std::mt19937_64 make_rng(std::uint64_t seed, std::initializer_list<std::uint32_t> tags) {
  std::vector<std::uint32_t> words = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  words.insert(words.end(), tags.begin(), tags.end());
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

enum Purpose : std::uint32_t { kLatentTarget = 1, kLatentPartner = 2, kLoading = 3, kNoise = 4 };

double clip01(double x) { return std::clamp(x, 0.0, 1.0); }

Vector<double> smoothed_walk(const SynthConfig& cfg, std::mt19937_64& rng) {
  std::normal_distribution<double> eta(0.0, 1.0);
  const Index T = cfg.frames;
  Vector<double> raw(T);
  raw[0] = 0.5;
  for (Index t = 0; t + 1 < T; ++t) {
    raw[t + 1] = clip01(raw[t] + cfg.kappa * (0.5 - raw[t]) + cfg.sigma_latent * eta(rng));
  }
  const Index half = cfg.smooth_window / 2;
  Vector<double> out(T);
  for (Index t = 0; t < T; ++t) {
    const Index lo = std::max<Index>(0, t - half);
    const Index hi = std::min<Index>(T - 1, t + (cfg.smooth_window - 1 - half));
    out[t] = raw.segment(lo, hi - lo + 1).mean();
  }
  return out;
}

Vector<double> derivative(const Vector<double>& e) {
  const Index T = e.size();
  Vector<double> d = Vector<double>::Zero(T);
  if (T < 2) return d;
  d[0] = e[1] - e[0];
  d[T - 1] = e[T - 1] - e[T - 2];
  for (Index t = 1; t + 1 < T; ++t) d[t] = 0.5 * (e[t + 1] - e[t - 1]);
  return d;
}

}  // namespace

double quantize(double x, Index levels) {
  if (levels == 0) return x;
  const double steps = static_cast<double>(levels - 1);
  return std::round(clip01(x) * steps) / steps;
}

SynthLatents synth_latents(const SynthConfig& cfg, Index index) {
  cfg.validate();
  const auto idx = static_cast<std::uint32_t>(index);
  auto target_rng = make_rng(cfg.seed, {kLatentTarget, idx});
  auto partner_rng = make_rng(cfg.seed, {kLatentPartner, idx});
  SynthLatents out;
  out.target = smoothed_walk(cfg, target_rng);
  const Vector<double> independent = smoothed_walk(cfg, partner_rng);
  const double rho = cfg.partner_coupling;
  out.partner = (rho * out.target + (1.0 - std::abs(rho)) * independent).unaryExpr(&clip01);
  return out;
}

Matrix<double> synth_loading(const SynthConfig& cfg, Role role, Stream stream) {
  const auto s = static_cast<std::size_t>(stream);
  auto rng = make_rng(cfg.seed, {kLoading, static_cast<std::uint32_t>(role), static_cast<std::uint32_t>(s)});
  std::normal_distribution<double> n(0.0, cfg.feature_gain);
  Matrix<double> a(cfg.feature_dims[s], 3);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  return a;
}

SessionRecord synth_session(const SynthConfig& cfg, Index index) {
  const SynthLatents lat = synth_latents(cfg, index);
  SessionRecord rec;
  rec.id = "synth_" + std::to_string(cfg.seed) + "_" + std::to_string(index);
  rec.frame_rate_hz = cfg.frame_rate_hz;
  rec.frames = cfg.frames;
  rec.feature_dims = cfg.feature_dims;

  auto make_role = [&](Role role, const Vector<double>& e) {
    Matrix<double> basis(cfg.frames, 3);
    basis.col(0) = e;
    basis.col(1) = derivative(e);
    basis.col(2).setOnes();
    auto noise_rng = make_rng(cfg.seed, {kNoise, static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(role)});
    std::normal_distribution<double> noise(0.0, 1.0);
    RoleStreams rs;
    for (std::size_t i = 0; i < kStreamCount; ++i) {
      Matrix<double> x = basis * synth_loading(cfg, role, static_cast<Stream>(i)).transpose();
      if (cfg.sigma_obs > 0.0) {
        for (Index k = 0; k < x.size(); ++k) x.data()[k] += cfg.sigma_obs * noise(noise_rng);
      }
      rs.streams[i] = x.cast<float>();
    }
    LabelVector labels(cfg.frames);
    for (Index t = 0; t < cfg.frames; ++t) labels[t] = static_cast<float>(quantize(e[t], cfg.quantize_levels));
    rs.labels = labels;
    return rs;
  };
  rec.target = make_role(Role::target, lat.target);
  rec.partner = make_role(Role::partner, lat.partner);
  return rec;
}

}  // namespace dat
