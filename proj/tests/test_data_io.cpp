#include "doctest.h"

#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include "dat/data_io.hpp"
#include "temp_dir.hpp"

using namespace dat;
namespace fs = std::filesystem;

namespace {

FeatureMatrix random_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<float> n(0.0f, 10.0f);
  FeatureMatrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

bool same_bits(const FeatureMatrix& a, const FeatureMatrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 || std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0);
}

SynthConfig small_synth() {
  SynthConfig sc;
  sc.frames = 64;
  sc.feature_dims = {4, 6, 5, 3, 2};
  return sc;
}

void corrupt(const fs::path& file, std::size_t offset, char byte) {
  std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(static_cast<std::streamoff>(offset));
  f.put(byte);
}

}  // namespace

TEST_CASE("DATF layout") {
  const FeatureMatrix empty(0, 7);
  const std::string bytes = encode_matrix(empty);
  CHECK(bytes.size() == 16);
  CHECK(bytes.substr(0, 4) == "DATF");
  CHECK(same_bits(decode_matrix(bytes), empty));

  FeatureMatrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const std::string b = encode_matrix(m);
  CHECK(b.size() == 16 + 24);
  CHECK(static_cast<unsigned char>(b[4]) == 1);
  CHECK(static_cast<unsigned char>(b[8]) == 2);
  CHECK(static_cast<unsigned char>(b[12]) == 3);
  float second;
  std::memcpy(&second, b.data() + 20, 4);
  CHECK(second == 2.0f);
}

TEST_CASE("DATF round-trips bitwise") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<Index> dim(0, 40);
  for (int i = 0; i < 1000; ++i) {
    const Index rows = i == 0 ? 0 : i == 1 ? 1 : dim(rng);
    const Index cols = i == 1 ? 1 : std::max<Index>(1, dim(rng));
    const FeatureMatrix m = random_matrix(rng, rows, cols);
    CHECK(same_bits(decode_matrix(encode_matrix(m)), m));
  }
  TempDir dir("datf");
  const FeatureMatrix big = random_matrix(rng, 96, 88);
  write_matrix(dir / "m.datf", big);
  CHECK(fs::file_size(dir / "m.datf") == 16 + 96 * 88 * 4);
  CHECK(same_bits(read_matrix(dir / "m.datf"), big));
}

TEST_CASE("DATF errors carry offsets") {
  FeatureMatrix m(2, 2);
  m << 1, 2, 3, 4;
  const std::string good = encode_matrix(m);

  std::string bad = good;
  bad[0] = 'X';
  try {
    decode_matrix(bad);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  bad = good;
  bad[4] = 2;
  CHECK_THROWS_WITH_AS(decode_matrix(bad), doctest::Contains("version"), FormatError);
  CHECK_THROWS_WITH_AS(decode_matrix(good.substr(0, 10)), doctest::Contains("truncated"), FormatError);
  CHECK_THROWS_WITH_AS(decode_matrix(good.substr(0, 25)), doctest::Contains("truncated"), FormatError);
  CHECK_THROWS_WITH_AS(decode_matrix(good + "xx"), doctest::Contains("size mismatch"), FormatError);

  FeatureMatrix nan(1, 1);
  nan(0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(encode_matrix(nan), FormatError);
  CHECK_THROWS_AS(read_matrix("/nonexistent/file.datf"), FormatError);
}

TEST_CASE("session round trip") {
  TempDir dir("session");
  const SessionRecord s = synth_session(small_synth(), 3);
  write_session(dir / "s", s);
  for (const char* f : {"manifest.json", "target/opensmile.datf", "target/labels.datf", "partner/openpose.datf"})
    CHECK(fs::exists(dir / "s" / f));
  const SessionRecord loaded = load_session(dir / "s");
  CHECK(loaded == s);

  write_session(dir / "b", synth_session(small_synth(), 4));
  const auto all = load_sessions(dir.path());
  REQUIRE(all.size() == 2);
  CHECK(all[0].id == "synth_0_4");
  CHECK(all[1].id == "synth_0_3");
  CHECK(load_sessions(dir / "s").size() == 1);
}

TEST_CASE("session rejections") {
  TempDir dir("reject");
  const SessionRecord s = synth_session(small_synth(), 0);

  SUBCASE("label out of range names the frame") {
    SessionRecord bad = s;
    (*bad.target.labels)[7] = 1.5f;
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("frame 7"), FormatError);
  }
  SUBCASE("short stream names the stream") {
    write_session(dir / "s", s);
    FeatureMatrix shorter = s.target.streams[2].topRows(s.frames - 1);
    write_matrix(dir / "s" / "target" / "clip.datf", shorter);
    CHECK_THROWS_WITH_AS(load_session(dir / "s"), doctest::Contains("clip"), FormatError);
  }
  SUBCASE("width disagrees with manifest") {
    write_session(dir / "s", s);
    write_matrix(dir / "s" / "partner" / "w2vbert.datf", FeatureMatrix::Zero(s.frames, 7));
    CHECK_THROWS_WITH_AS(load_session(dir / "s"), doctest::Contains("w2vbert"), FormatError);
  }
  SUBCASE("missing stream") {
    write_session(dir / "s", s);
    fs::remove(dir / "s" / "target" / "openface.datf");
    CHECK_THROWS_WITH_AS(load_session(dir / "s"), doctest::Contains("openface"), FormatError);
  }
  SUBCASE("corrupt magic") {
    write_session(dir / "s", s);
    corrupt(dir / "s" / "target" / "opensmile.datf", 1, 'Z');
    CHECK_THROWS_AS(load_session(dir / "s"), FormatError);
  }
  SUBCASE("bad manifest") {
    write_session(dir / "s", s);
    std::ofstream(dir / "s" / "manifest.json", std::ios::trunc) << "{\"schema_version\": 9}";
    CHECK_THROWS_AS(load_session(dir / "s"), FormatError);
    CHECK_THROWS_AS(load_sessions(dir / "empty"), FormatError);
  }
}

TEST_CASE("synthetic generator") {
  const SynthConfig sc = small_synth();
  SUBCASE("deterministic") {
    CHECK(synth_session(sc, 2) == synth_session(sc, 2));
    CHECK_FALSE(synth_session(sc, 2) == synth_session(sc, 3));
    SynthConfig other = sc;
    other.seed = 9;
    CHECK_FALSE(synth_session(other, 2) == synth_session(sc, 2));
  }
  SUBCASE("labels in range") {
    const SessionRecord s = synth_session(sc, 1);
    CHECK(s.target.labels->minCoeff() >= 0.0f);
    CHECK(s.target.labels->maxCoeff() <= 1.0f);
    CHECK_NOTHROW(s.validate());
  }
  SUBCASE("noiseless labels equal the latent") {
    SynthConfig clean = sc;
    clean.sigma_obs = 0.0;
    const SessionRecord s = synth_session(clean, 0);
    const SynthLatents lat = synth_latents(clean, 0);
    CHECK(*s.target.labels == lat.target.cast<float>());
    CHECK(*s.partner->labels == lat.partner.cast<float>());
  }
  SUBCASE("quantized labels sit on the lattice") {
    SynthConfig q = sc;
    q.quantize_levels = 25;
    const SessionRecord s = synth_session(q, 0);
    std::set<int> seen;
    for (Index t = 0; t < s.frames; ++t) {
      const double k = static_cast<double>((*s.target.labels)[t]) * 24.0;
      CHECK(std::abs(k - std::round(k)) < 1e-5);
      seen.insert(static_cast<int>(std::lround(k)));
    }
    CHECK(seen.size() > 1);
    CHECK(quantize(0.52, 25) == 12.0 / 24.0);
    CHECK(quantize(1.7, 25) == 1.0);
  }
  SUBCASE("latent recoverable by least squares from noiseless features") {
    SynthConfig clean = sc;
    clean.sigma_obs = 0.0;
    clean.frames = 500;
    const SessionRecord s = synth_session(clean, 0);
    const SynthLatents lat = synth_latents(clean, 0);
    Matrix<double> x(clean.frames, 0);
    for (const auto& m : s.target.streams) {
      Matrix<double> grown(clean.frames, x.cols() + m.cols());
      grown << x, m.cast<double>();
      x = grown;
    }
    const Vector<double> beta = x.colPivHouseholderQr().solve(lat.target);
    const double err = (x * beta - lat.target).squaredNorm() / static_cast<double>(clean.frames);
    MESSAGE("OLS reconstruction mse " << err);
    CHECK(err < 1e-8);
  }
  SUBCASE("partner coupling") {
    SynthConfig one = sc;
    one.partner_coupling = 1.0;
    const SynthLatents lat = synth_latents(one, 0);
    CHECK(lat.partner == lat.target);
  }
  SUBCASE("invalid config") {
    SynthConfig bad = sc;
    bad.quantize_levels = 1;
    CHECK_THROWS_AS(synth_session(bad, 0), UsageError);
    bad = sc;
    bad.partner_coupling = 1.5;
    CHECK_THROWS_AS(synth_session(bad, 0), UsageError);
  }
}

TEST_CASE("partner aggregation") {
  const SessionRecord s = synth_session(small_synth(), 0);
  const RoleStreams& p = *s.partner;
  CHECK(partner_aggregate({p}) == p);
  CHECK(partner_aggregate({p, p}) == p);
  RoleStreams neg = p;
  for (auto& m : neg.streams) m = -m;
  neg.labels.reset();
  const RoleStreams zero = partner_aggregate({p, neg});
  for (const auto& m : zero.streams) CHECK(m.cwiseAbs().maxCoeff() == 0.0f);
  CHECK_FALSE(zero.labels.has_value());
  RoleStreams shorter = p;
  shorter.streams[0] = p.streams[0].topRows(10);
  CHECK_THROWS_AS(partner_aggregate({p, shorter}), FormatError);
  CHECK_THROWS_AS(partner_aggregate({}), std::invalid_argument);
}
