#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "qcw/io.hpp"
#include "qcw/types.hpp"

using namespace qcw;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("qcw_test_" + name);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
}

}  // namespace

TEST_CASE("read_tags parses a minimal well-formed file") {
  const auto path = temp_file("tags_min.csv");
  write_text(path, "# channels=2 duration_ps=1000\n0,100\n1,250\n");
  const TagStream stream = read_tags(path);
  CHECK(stream.n_channels == 2);
  CHECK(stream.duration_ps == 1000);
  REQUIRE(stream.tags.size() == 2);
  CHECK(stream.tags[0] == TimeTag{0, 100});
  CHECK(stream.tags[1] == TimeTag{1, 250});
}

TEST_CASE("read_tags accepts an empty stream with a valid header") {
  const auto path = temp_file("tags_empty.csv");
  write_text(path, "# channels=1 duration_ps=0\n");
  const TagStream stream = read_tags(path);
  CHECK(stream.tags.empty());
  CHECK(stream.duration_ps == 0);
}

TEST_CASE("read_tags rejects unsorted timestamps naming the line") {
  const auto path = temp_file("tags_unsorted.csv");
  write_text(path, "# channels=1 duration_ps=1000\n0,200\n0,100\n");
  try {
    read_tags(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);  // header is line 1
    CHECK(std::string(e.what()).find("sorted") != std::string::npos);
  }
}

TEST_CASE("read_tags keeps per-channel ordering independent") {
  const auto path = temp_file("tags_interleaved.csv");
  write_text(path, "# channels=2 duration_ps=1000\n0,500\n1,100\n0,600\n1,90\n");
  CHECK_THROWS_AS(read_tags(path), ParseError);  // channel 1: 100 then 90
}

TEST_CASE("read_tags rejects malformed lines and foreign channels") {
  const auto path = temp_file("tags_bad.csv");
  write_text(path, "# channels=1 duration_ps=10\nnot-a-line\n");
  CHECK_THROWS_AS(read_tags(path), ParseError);
  write_text(path, "# channels=1 duration_ps=10\n3,5\n");
  CHECK_THROWS_AS(read_tags(path), ParseError);
  write_text(path, "no header\n");
  CHECK_THROWS_AS(read_tags(path), ParseError);
}

TEST_CASE("tag round-trip is bit-exact, including 64-bit values near 1e13") {
  TagStream stream;
  stream.n_channels = 2;
  stream.duration_ps = 10'000'000'000'000;  // 10 s
  std::mt19937_64 rng(7);
  std::vector<TimestampPs> t0, t1;
  for (int i = 0; i < 5000; ++i) {
    t0.push_back(static_cast<TimestampPs>(rng() % 10'000'000'000'000ULL));
    t1.push_back(static_cast<TimestampPs>(rng() % 10'000'000'000'000ULL));
  }
  std::sort(t0.begin(), t0.end());
  std::sort(t1.begin(), t1.end());
  for (std::size_t i = 0; i < t0.size(); ++i) {
    stream.tags.push_back({0, t0[i]});
    stream.tags.push_back({1, t1[i]});
  }
  stream.tags.push_back({0, 9'999'999'999'999});

  const auto path = temp_file("tags_roundtrip.csv");
  write_tags(stream, path);
  const TagStream back = read_tags(path);
  CHECK(back.n_channels == stream.n_channels);
  CHECK(back.duration_ps == stream.duration_ps);
  REQUIRE(back.tags.size() == stream.tags.size());
  CHECK(back.tags == stream.tags);

  // empty round-trip
  TagStream empty;
  empty.n_channels = 1;
  write_tags(empty, path);
  CHECK(read_tags(path).tags.empty());
}

TEST_CASE("histogram round-trip preserves header and counts") {
  Histogram hist;
  hist.bin_width_ps = 10;
  hist.tau_min_ps = -105;
  hist.counts = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0};
  hist.normalization = 5.5;
  hist.meta.events_a = 100;
  hist.meta.events_b = 200;
  hist.meta.duration_ps = 123456;
  hist.meta.kind = "hbt";
  const auto path = temp_file("hist_roundtrip.csv");
  write_histogram(hist, path);
  const Histogram back = read_histogram(path);
  CHECK(back.bin_width_ps == hist.bin_width_ps);
  CHECK(back.tau_min_ps == hist.tau_min_ps);
  CHECK(back.counts == hist.counts);
  CHECK(back.normalization == doctest::Approx(hist.normalization).epsilon(1e-15));
  CHECK(back.meta.events_a == 100);
  CHECK(back.meta.kind == "hbt");
}

TEST_CASE("histogram bin index matches the floor definition") {
  Histogram hist;
  hist.bin_width_ps = 7;
  hist.tau_min_ps = -21;
  hist.counts.assign(6, 0);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::int64_t tau = static_cast<std::int64_t>(rng() % 60) - 30;
    const auto idx = hist.bin_index(tau);
    if (tau < hist.tau_min_ps || tau >= hist.tau_max_ps()) {
      CHECK(!idx.has_value());
    } else {
      REQUIRE(idx.has_value());
      // brute-force re-binning
      std::size_t expected = 0;
      for (std::size_t b = 0; b < hist.counts.size(); ++b) {
        const std::int64_t lo = hist.tau_min_ps + static_cast<std::int64_t>(b) * hist.bin_width_ps;
        if (tau >= lo && tau < lo + hist.bin_width_ps) expected = b;
      }
      CHECK(*idx == expected);
    }
  }
}

TEST_CASE("fit JSON round-trip preserves values, sigmas and covariance") {
  FitResult fit;
  fit.model = "demo";
  fit.names = {"alpha", "beta"};
  fit.values = {1.5, -2.25};
  fit.sigmas = {0.1, 0.2};
  fit.covariance = {0.01, 0.005, 0.005, 0.04};
  fit.chi2_red = 1.25;
  fit.iterations = 17;
  fit.converged = true;
  const auto path = temp_file("fit_roundtrip.json");
  write_fit(fit, path);
  const FitResult back = read_fit(path);
  CHECK(back.model == "demo");
  CHECK(back.value("alpha") == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(back.sigma("beta") == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(back.cov(0, 1) == doctest::Approx(0.005).epsilon(1e-15));
  CHECK(back.chi2_red == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(back.converged);
}

TEST_CASE("xy series round-trip") {
  XySeries series;
  series.kind = "scan";
  series.x_label = "detuning_ghz";
  series.y_label = "counts";
  series.x = {-1.0, 0.0, 1.0, 2.5};
  series.y = {10.0, 100.0, 11.0, 0.125};
  const auto path = temp_file("xy_roundtrip.csv");
  write_xy(series, path);
  const XySeries back = read_xy(path);
  CHECK(back.kind == "scan");
  CHECK(back.x == series.x);
  CHECK(back.y == series.y);
}

TEST_CASE("VoigtParams validation") {
  VoigtParams p;
  p.gamma_hom_ghz = 0.0;
  p.gamma_inhom_ghz = 0.0;
  CHECK_THROWS_AS(validate(p), DomainError);
  p.gamma_hom_ghz = -1.0;
  CHECK_THROWS_AS(validate(p), DomainError);
  p.gamma_hom_ghz = 1.0;
  CHECK_NOTHROW(validate(p));
}
