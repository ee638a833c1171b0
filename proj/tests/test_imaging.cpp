#include <doctest.h>

#include "tabnet/imaging.hpp"
#include "tabnet/page_result.hpp"

using namespace tabnet;

TEST_CASE("crop and resize scale arithmetic") {
  const cv::Mat page(600, 2100, CV_8UC3, cv::Scalar::all(255));
  const Crop wide = crop_and_resize(page, QuadBox(Box(10, 20, 2048, 512)));
  CHECK(wide.image.cols == 1024);
  CHECK(wide.image.rows == 256);
  CHECK(wide.transform.scale == doctest::Approx(0.5));

  const cv::Mat small(700, 900, CV_8UC3, cv::Scalar::all(255));
  const Crop up = crop_and_resize(small, QuadBox(Box(50, 50, 800, 600)));
  CHECK(up.image.cols == 1024);
  CHECK(up.image.rows == 768);

  const Point corner{850, 650};
  const Point back = up.transform.to_image(up.transform.to_crop(corner));
  CHECK(std::abs(back.x - corner.x) < 0.5);
  CHECK(std::abs(back.y - corner.y) < 0.5);
}

TEST_CASE("crop clamps to the image") {
  const cv::Mat page(100, 100, CV_8UC3, cv::Scalar::all(255));
  const Crop c = crop_and_resize(page, QuadBox(Box(-10, 50, 200, 100)), 64);
  CHECK(c.region == Box(0, 50, 100, 50));
  CHECK(c.image.cols == 64);
}

TEST_CASE("padding to a multiple") {
  const cv::Mat m(33, 64, CV_8UC1, cv::Scalar(0));
  const cv::Mat p = pad_to_multiple(m, 32);
  CHECK(p.rows == 64);
  CHECK(p.cols == 64);
  CHECK(p.at<std::uint8_t>(40, 0) == 255);
}

TEST_CASE("content assignment thresholds") {
  TableStructure s{1, 2,
                   {{CellSpan{0, 0, 0, 0}, QuadBox(Box(0, 0, 10, 10)), {}},
                    {CellSpan{0, 0, 1, 1}, QuadBox(Box(10, 0, 10, 10)), {}}}};
  const std::vector<Box> text{Box(2, 2, 4, 4), Box(5, 2, 10, 4), Box(1.5, 2, 10, 4)};
  const auto unassigned = assign_content(text, s);
  CHECK(s.cells[0].content_ids == std::vector<int>{0, 2});
  CHECK(unassigned == std::vector<int>{1});
}

TEST_CASE("page result json round trip is byte identical") {
  PageResult r;
  r.image = "0001.png";
  TableResult t;
  t.quad = QuadBox(Box(1.25, 2.5, 30, 40));
  t.score = 0.875;
  t.structure = {1, 2,
                 {{CellSpan{0, 0, 0, 0}, QuadBox(Box(1.25, 2.5, 15, 40)), {0}},
                  {CellSpan{0, 0, 1, 1}, QuadBox(Box(16.25, 2.5, 15, 40)), {}}}};
  r.tables.push_back(t);
  const std::string once = nlohmann::json(r).dump();
  const std::string twice = nlohmann::json(nlohmann::json::parse(once).get<PageResult>()).dump();
  CHECK(once == twice);
}
