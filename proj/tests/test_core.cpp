#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "denfield/binning.hpp"
#include "denfield/grid.hpp"
#include "denfield/io.hpp"
#include "denfield/randfield.hpp"
#include "denfield/rng.hpp"

using namespace denfield;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / "denfield_core_tests";
  fs::create_directories(dir);
  return dir;
}

RealGrid random_grid(std::size_t w, std::size_t h, SeededRng& rng, double scale = 1.0) {
  RealGrid g(w, h);
  for (auto& v : g) v = scale * rng.gaussian();
  return g;
}

}  // namespace

TEST_CASE("apply_mask") {
  RealGrid map(2, 1);
  map[0] = 2.0;
  map[1] = 4.0;

  SECTION("all-ones mask is the identity") {
    MaskGrid ones(2, 1, 1);
    REQUIRE(apply_mask(map, ones) == map);
  }
  SECTION("all-zeros mask gives the zero map") {
    MaskGrid zeros(2, 1, 0);
    const auto out = apply_mask(map, zeros);
    REQUIRE(out[0] == 0.0);
    REQUIRE(out[1] == 0.0);
  }
  SECTION("elementwise product") {
    MaskGrid m(2, 1);
    m[0] = 1;
    m[1] = 0;
    const auto out = apply_mask(map, m);
    REQUIRE(out[0] == 2.0);
    REQUIRE(out[1] == 0.0);
  }
  SECTION("idempotent") {
    SeededRng rng(7);
    RealGrid x = random_grid(8, 8, rng);
    MaskGrid m(8, 8);
    for (auto& v : m) v = rng.uniform() < 0.5 ? 0 : 1;
    const auto once = apply_mask(x, m);
    REQUIRE(apply_mask(once, m) == once);
  }
  SECTION("shape mismatch throws") {
    MaskGrid wrong(3, 1, 1);
    REQUIRE_THROWS_AS(apply_mask(map, wrong), DimensionError);
  }
}

TEST_CASE("domain type invariants") {
  SECTION("CountMap rejects negative counts") {
    CountGrid c(2, 2, 0);
    c[0] = -1;
    REQUIRE_THROWS_AS(CountMap(c, MaskGrid(2, 2, 1), 1.0), std::domain_error);
  }
  SECTION("CountMap rejects non-binary mask") {
    MaskGrid m(2, 2, 1);
    m[0] = 2;
    REQUIRE_THROWS_AS(CountMap(CountGrid(2, 2, 0), m, 1.0), std::domain_error);
  }
  SECTION("CountMap rejects non-positive mean_count") {
    REQUIRE_THROWS_AS(CountMap(CountGrid(2, 2, 0), MaskGrid(2, 2, 1), 0.0), std::domain_error);
  }
  SECTION("DensityField rejects delta <= -1") {
    RealGrid d(2, 2, 0.0);
    d[3] = -1.0;
    REQUIRE_THROWS_AS(DensityField(d), std::domain_error);
  }
  SECTION("GaussianField rejects non-finite values") {
    RealGrid z(2, 2, 0.0);
    z[1] = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(GaussianField(z), std::domain_error);
  }
}

TEST_CASE("DMAP1 round trip is bit exact") {
  const auto dir = temp_dir();
  SeededRng rng(42);

  SECTION("f64 random maps") {
    for (int trial = 0; trial < 5; ++trial) {
      const std::size_t w = 1 + static_cast<std::size_t>(rng.uniform() * 16);
      const std::size_t h = 1 + static_cast<std::size_t>(rng.uniform() * 16);
      RealGrid g = random_grid(w, h, rng, 1e3);
      const auto path = (dir / "roundtrip_f64.dmap").string();
      map_save(path, g, MapKind::density);
      MapKind kind;
      const auto back = map_load<double>(path, &kind);
      REQUIRE(kind == MapKind::density);
      REQUIRE(back == g);
    }
  }
  SECTION("i64 counts") {
    CountGrid g(5, 3);
    for (auto& v : g) v = rng.poisson(20.0);
    const auto path = (dir / "roundtrip_i64.dmap").string();
    map_save(path, g, MapKind::counts);
    REQUIRE(map_load<std::int64_t>(path) == g);
  }
  SECTION("u8 mask") {
    MaskGrid g(4, 7);
    for (auto& v : g) v = rng.uniform() < 0.5 ? 0 : 1;
    const auto path = (dir / "roundtrip_u8.dmap").string();
    map_save(path, g, MapKind::mask);
    REQUIRE(map_load<std::uint8_t>(path) == g);
  }
}

TEST_CASE("DMAP1 format errors carry byte offsets") {
  const auto dir = temp_dir();

  SECTION("bad magic") {
    const auto path = (dir / "bad_magic.dmap").string();
    std::ofstream(path) << "XXXX width=2 height=2 dtype=f64 kind=density\n";
    try {
      map_load<double>(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      REQUIRE(e.byte_offset() == 0);
    }
  }
  SECTION("unknown dtype") {
    const auto path = (dir / "bad_dtype.dmap").string();
    std::ofstream(path) << "DMAP1 width=2 height=2 dtype=f32 kind=density\n";
    REQUIRE_THROWS_AS(map_load<double>(path), FormatError);
  }
  SECTION("truncated payload") {
    RealGrid g(2, 2, 1.5);
    const auto path = (dir / "truncated.dmap").string();
    map_save(path, g, MapKind::density);
    const std::string bytes = read_file_bytes(path);
    std::ofstream(path, std::ios::binary | std::ios::trunc)
        << bytes.substr(0, bytes.size() - 7);
    try {
      map_load<double>(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      REQUIRE(e.byte_offset() == bytes.size() - 7);
    }
  }
  SECTION("dtype mismatch on typed load") {
    RealGrid g(2, 2, 1.0);
    const auto path = (dir / "mismatch.dmap").string();
    map_save(path, g, MapKind::density);
    REQUIRE_THROWS_AS(map_load<std::int64_t>(path), FormatError);
  }
}

TEST_CASE("DMAP1 2x2 f64 file size is header plus 32 payload bytes") {
  const auto dir = temp_dir();
  RealGrid g(2, 2, 3.25);
  const auto path = (dir / "size.dmap").string();
  map_save(path, g, MapKind::density);
  const std::string header = "DMAP1 width=2 height=2 dtype=f64 kind=density\n";
  REQUIRE(fs::file_size(path) == header.size() + 32);
}

TEST_CASE("RadialBinning") {
  SECTION("edges must increase strictly") {
    REQUIRE_THROWS_AS(RadialBinning(8, 8, {0.0, 0.2, 0.2, 0.8}), std::domain_error);
  }
  SECTION("every non-DC mode lands in exactly one bin") {
    for (const auto& binning :
         {RadialBinning::linear(16, 16, 5), RadialBinning::logarithmic(16, 12, 6),
          RadialBinning::default_for(32, 32)}) {
      std::size_t total = 0;
      for (auto c : binning.mode_counts()) total += c;
      REQUIRE(total == binning.width() * binning.height() - 1);
      REQUIRE(binning.bin_of_mode(0, 0) == -1);
    }
  }
  SECTION("logarithmic merge honors the mode floor") {
    const auto binning = RadialBinning::logarithmic(64, 64, 12, 32);
    for (auto c : binning.mode_counts()) REQUIRE(c >= 32);
  }
}

TEST_CASE("radial_average") {
  const auto binning = RadialBinning::linear(16, 16, 4);

  SECTION("constant power fills every bin with that constant") {
    RealGrid power(16, 16, 3.5);
    const auto bins = radial_average(power, binning);
    for (const auto& b : bins) {
      REQUIRE(b.has_value());
      REQUIRE_THAT(*b, Catch::Matchers::WithinRel(3.5, 1e-12));
    }
  }
  SECTION("single nonzero mode touches only its bin") {
    RealGrid power(16, 16, 0.0);
    power.at(3, 0) = 7.0;  // |k| = 3/16
    const auto bins = radial_average(power, binning);
    const auto target = binning.bin_of_mode(3, 0);
    for (std::size_t b = 0; b < bins.size(); ++b) {
      if (!bins[b].has_value()) continue;
      if (static_cast<std::int32_t>(b) == target)
        REQUIRE(*bins[b] > 0.0);
      else
        REQUIRE(*bins[b] == 0.0);
    }
  }
  SECTION("empty bins are absent, not zero") {
    // 8x8 modes all have |k| >= 1/8; a bin below that stays empty
    const RadialBinning narrow(8, 8, {0.0, 0.05, 1.0});
    RealGrid power(8, 8, 1.0);
    const auto bins = radial_average(power, narrow);
    REQUIRE_FALSE(bins[0].has_value());
    REQUIRE(bins[1].has_value());
  }
  SECTION("white noise bins sit at the pixel variance") {
    // Monte-Carlo oracle: the mean-subtracted periodogram |Z|^2/n of white
    // noise with pixel variance v has expectation v in every non-DC mode;
    // each realization is checked against Parseval.
    const double sigma = 1.5;
    const auto wide = RadialBinning::logarithmic(128, 128, 10, 200);
    std::vector<double> acc(wide.bin_count(), 0.0);
    SeededRng rng(2024);
    const int realizations = 20;
    for (int r = 0; r < realizations; ++r) {
      RealGrid z = random_grid(128, 128, rng, sigma);
      const double mean = grid_mean(z);
      double ss = 0.0;
      for (auto& v : z) {
        v -= mean;
        ss += v * v;
      }
      const RealGrid power = power_grid(z);
      double nondc = 0.0;
      for (std::size_t i = 1; i < power.size(); ++i) nondc += power[i];
      REQUIRE_THAT(nondc, Catch::Matchers::WithinRel(ss, 1e-9));  // Parseval
      const auto bins = radial_average(power, wide);
      for (std::size_t b = 0; b < bins.size(); ++b) acc[b] += *bins[b] / realizations;
    }
    for (double v : acc) REQUIRE_THAT(v, Catch::Matchers::WithinRel(sigma * sigma, 0.05));
  }
  SECTION("bin bookkeeping is Parseval consistent") {
    SeededRng rng(11);
    for (int trial = 0; trial < 4; ++trial) {
      RealGrid z = random_grid(24, 20, rng);
      const RealGrid power = power_grid(z);
      const auto binning24 = RadialBinning::default_for(24, 20);
      const auto bins = radial_average(power, binning24);
      double from_bins = 0.0;
      for (std::size_t b = 0; b < bins.size(); ++b)
        from_bins += *bins[b] * static_cast<double>(binning24.mode_counts()[b]);
      double direct = 0.0;
      const auto& mode_bins = binning24.mode_bins();
      for (std::size_t i = 0; i < power.size(); ++i)
        if (mode_bins[i] >= 0) direct += power[i];
      REQUIRE_THAT(from_bins, Catch::Matchers::WithinRel(direct, 1e-10));
    }
  }
  SECTION("shape mismatch throws") {
    RealGrid power(8, 8, 1.0);
    REQUIRE_THROWS_AS(radial_average(power, binning), DimensionError);
  }
}

TEST_CASE("PGM output is a valid P5 file") {
  const auto dir = temp_dir();
  SeededRng rng(5);
  RealGrid g = random_grid(12, 9, rng);
  const auto path = (dir / "render.pgm").string();
  write_pgm(path, g);
  const std::string bytes = read_file_bytes(path);
  const std::string header = "P5\n12 9\n255\n";
  REQUIRE(bytes.rfind(header, 0) == 0);
  REQUIRE(bytes.size() == header.size() + 12 * 9);
}
