#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tabnet/datagen.hpp"
#include "tabnet/separator_gt.hpp"

using namespace tabnet;
using namespace tabnet::datagen;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_image(const cv::Mat& a, const cv::Mat& b) {
  return a.size() == b.size() && a.type() == b.type() && cv::norm(a, b, cv::NORM_INF) == 0.0;
}

}  // namespace

TEST_CASE("fixed seed reproduces the page exactly") {
  SynthConfig cfg;
  cfg.warp_prob = 0.5;
  const Page a = synthesize_page(cfg, 123);
  const Page b = synthesize_page(cfg, 123);
  CHECK(same_image(a.image, b.image));
  CHECK(nlohmann::json(a.annotation).dump() == nlohmann::json(b.annotation).dump());
  const Page c = synthesize_page(cfg, 124);
  CHECK(nlohmann::json(a.annotation).dump() != nlohmann::json(c.annotation).dump());
}

TEST_CASE("generated annotations are valid and admit separator ground truth") {
  SynthConfig cfg;
  cfg.warp_prob = 0.5;
  int tables = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Page p = synthesize_page(cfg, seed);
    const auto errors = validate(p.annotation);
    if (!errors.empty()) FAIL("seed " << seed << ": " << errors.front());
    CHECK(p.image.cols == p.annotation.width);
    CHECK(p.image.rows == p.annotation.height);
    for (const auto& t : p.annotation.tables) {
      ++tables;
      CHECK_NOTHROW(splitter::make_separator_gt(t, p.annotation.height, p.annotation.width));
    }
  }
  CHECK(tables >= 1000);
}

TEST_CASE("zero span probability gives unit cells") {
  SynthConfig cfg;
  cfg.span_prob = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    for (const auto& t : synthesize_page(cfg, seed).annotation.tables)
      for (const auto& c : t.cells) {
        CHECK(c.span.row_span() == 1);
        CHECK(c.span.col_span() == 1);
      }
}

TEST_CASE("config validation and parsing") {
  SynthConfig cfg;
  cfg.max_row_span = 9;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  SynthConfig tables;
  tables.max_tables = 4;
  CHECK_THROWS_AS(tables.validate(), std::invalid_argument);

  nlohmann::json j = SynthConfig{};
  const SynthConfig back = j.get<SynthConfig>();
  CHECK(nlohmann::json(back) == j);
  j["bogus_key"] = 1;
  try {
    (void)j.get<SynthConfig>();
    FAIL("unknown key accepted");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("bogus_key") != std::string::npos);
  }
}

TEST_CASE("curved warp") {
  SynthConfig cfg;
  const Page flat = synthesize_page(cfg, 5);
  SUBCASE("zero amplitude is the identity") {
    const Page same = warp_curved(flat, WarpParams{0, 0, 700, 0, 0});
    CHECK(same_image(same.image, flat.image));
  }
  SUBCASE("inverse warp recovers annotation points") {
    const WarpParams w{1.5, 3.0, 650, 0.3, 1.1};
    for (double x = 0; x < 512; x += 17)
      for (double y = 0; y < 640; y += 23) {
        const Point q = w.inverse(w.forward({x, y}));
        CHECK(std::abs(q.x - x) < 0.5);
        CHECK(std::abs(q.y - y) < 0.5);
      }
    const Page warped = warp_curved(flat, w);
    CHECK(validate(warped.annotation).empty());
    CHECK_THROWS(warp_curved(warped, w));
  }
  SUBCASE("separators stay single-valued along their axis") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const Page w = warp_curved(synthesize_page(cfg, seed), 3.0, 700.0);
      for (const auto& t : w.annotation.tables) {
        for (const auto& line : t.row_separators)
          for (std::size_t k = 1; k < line.size(); ++k) CHECK(line[k].x > line[k - 1].x);
        for (const auto& line : t.col_separators)
          for (std::size_t k = 1; k < line.size(); ++k) CHECK(line[k].y > line[k - 1].y);
      }
    }
  }
}

TEST_CASE("corpus writing is deterministic") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "tabnet_corpus_test";
  fs::remove_all(root);
  SynthConfig cfg;
  write_corpus((root / "a").string(), cfg, 3, 7);
  write_corpus((root / "b").string(), cfg, 3, 7);
  const auto a = list_corpus((root / "a").string());
  const auto b = list_corpus((root / "b").string());
  REQUIRE(a.size() == 3);
  REQUIRE(b.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(slurp(a[i].image_path) == slurp(b[i].image_path));
    CHECK(slurp(a[i].annotation_path) == slurp(b[i].annotation_path));
  }
  CHECK(slurp(root / "a" / "manifest.json") == slurp(root / "b" / "manifest.json"));
  fs::remove_all(root);
}
