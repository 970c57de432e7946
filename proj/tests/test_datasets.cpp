#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "fab/datasets.hpp"
#include "fab/types.hpp"

using namespace fab;

namespace {

void push_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

// Two 2x3 images with distinct pixel values and labels {3, 1}.
const std::vector<std::uint8_t> kPixels = {0,  51, 102, 153, 204, 255,
                                           10, 20, 30,  40,  50,  60};

std::vector<std::uint8_t> image_bytes() {
  std::vector<std::uint8_t> b;
  push_be32(b, 2051);
  push_be32(b, 2);
  push_be32(b, 2);
  push_be32(b, 3);
  b.insert(b.end(), kPixels.begin(), kPixels.end());
  return b;
}

std::vector<std::uint8_t> label_bytes() {
  std::vector<std::uint8_t> b;
  push_be32(b, 2049);
  push_be32(b, 2);
  b.push_back(3);
  b.push_back(1);
  return b;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& b) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(b.data()),
          static_cast<std::streamsize>(b.size()));
  REQUIRE(f.good());
}

struct IdxFixture {
  std::string images = "fixture_images.idx";
  std::string labels = "fixture_labels.idx";

  IdxFixture() {
    write_file(images, image_bytes());
    write_file(labels, label_bytes());
  }
  ~IdxFixture() {
    std::remove(images.c_str());
    std::remove(labels.c_str());
  }
};

bool in_unit_box(const Matrix& m) {
  return (m.array() >= 0.0).all() && (m.array() <= 1.0).all();
}

}  // namespace

TEST_CASE("idx round-trip recovers every pixel and label") {
  IdxFixture fx;
  const Dataset ds = load_idx(fx.images, fx.labels);
  REQUIRE(ds.size() == 2);
  REQUIRE(ds.dim() == 6);
  CHECK(ds.num_classes == 4);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 6; ++j)
      CHECK(ds.inputs(i, j) ==
            static_cast<double>(kPixels[static_cast<std::size_t>(i * 6 + j)]) /
                255.0);
  CHECK(ds.labels == std::vector<int>{3, 1});
  CHECK(ds.test_indices().empty());
  CHECK(ds.train_indices().size() == 2);
}

TEST_CASE("idx limit keeps a prefix of the points") {
  IdxFixture fx;
  const Dataset one = load_idx(fx.images, fx.labels, 1);
  REQUIRE(one.size() == 1);
  CHECK(one.labels == std::vector<int>{3});
  CHECK(load_idx(fx.images, fx.labels, 0).size() == 2);
  CHECK(load_idx(fx.images, fx.labels, 99).size() == 2);
}

TEST_CASE("idx image/label count mismatch is rejected") {
  IdxFixture fx;
  std::vector<std::uint8_t> b;
  push_be32(b, 2049);
  push_be32(b, 3);
  b.insert(b.end(), {3, 1, 0});
  write_file(fx.labels, b);
  CHECK_THROWS_WITH_AS(load_idx(fx.images, fx.labels),
                       doctest::Contains("count"), IoError);
}

TEST_CASE("idx bad magic numbers are rejected") {
  IdxFixture fx;
  auto img = image_bytes();
  img[3] = 0x00;
  write_file(fx.images, img);
  CHECK_THROWS_WITH_AS(load_idx(fx.images, fx.labels),
                       doctest::Contains("magic"), IoError);

  write_file(fx.images, image_bytes());
  auto lab = label_bytes();
  lab[3] = 0x07;
  write_file(fx.labels, lab);
  CHECK_THROWS_WITH_AS(load_idx(fx.images, fx.labels),
                       doctest::Contains("magic"), IoError);
}

TEST_CASE("idx truncation and trailing bytes report the byte offset") {
  IdxFixture fx;
  auto img = image_bytes();
  img.pop_back();
  write_file(fx.images, img);
  CHECK_THROWS_WITH_AS(load_idx(fx.images, fx.labels),
                       doctest::Contains("truncated at byte 27"), IoError);

  img = image_bytes();
  img.push_back(0);
  write_file(fx.images, img);
  CHECK_THROWS_WITH_AS(load_idx(fx.images, fx.labels),
                       doctest::Contains("trailing"), IoError);

  write_file(fx.images, {0x00, 0x00});
  CHECK_THROWS_WITH_AS(load_idx(fx.images, fx.labels),
                       doctest::Contains("truncated at byte 0"), IoError);

  write_file(fx.images, image_bytes());
  auto lab = label_bytes();
  lab.pop_back();
  write_file(fx.labels, lab);
  CHECK_THROWS_WITH_AS(load_idx(fx.images, fx.labels),
                       doctest::Contains("truncated"), IoError);
}

TEST_CASE("idx missing files are reported by name") {
  IdxFixture fx;
  CHECK_THROWS_WITH_AS(load_idx("nowhere.idx", fx.labels),
                       doctest::Contains("nowhere.idx"), IoError);
  CHECK_THROWS_WITH_AS(load_idx(fx.images, "nowhere.idx"),
                       doctest::Contains("nowhere.idx"), IoError);
}

TEST_CASE("holdout split marks the tail as test data") {
  Dataset ds = synth_moons(10, 0.1, 1);
  split_holdout(ds, 4);
  CHECK(ds.train_indices() == std::vector<Index>{0, 1, 2, 3, 4, 5});
  CHECK(ds.test_indices() == std::vector<Index>{6, 7, 8, 9});
  split_holdout(ds, 0);
  CHECK(ds.test_indices().empty());
  CHECK_THROWS_AS(split_holdout(ds, 11), ConfigError);
  CHECK_THROWS_AS(split_holdout(ds, -1), ConfigError);
}

TEST_CASE("synthetic generators are deterministic in the seed") {
  const Dataset a = synth_moons(80, 0.15, 42);
  const Dataset b = synth_moons(80, 0.15, 42);
  CHECK((a.inputs.array() == b.inputs.array()).all());
  CHECK(a.labels == b.labels);
  const Dataset c = synth_moons(80, 0.15, 43);
  CHECK((a.inputs.array() != c.inputs.array()).any());

  const Dataset d = synth_blobs(90, 4, 3, 6.0, 7);
  const Dataset e = synth_blobs(90, 4, 3, 6.0, 7);
  CHECK((d.inputs.array() == e.inputs.array()).all());
  CHECK(d.labels == e.labels);
}

TEST_CASE("synthetic data fills the unit box tightly") {
  for (const Dataset& ds :
       {synth_moons(200, 0.1, 3), synth_blobs(150, 3, 4, 5.0, 9)}) {
    CHECK(in_unit_box(ds.inputs));
    for (Index j = 0; j < ds.dim(); ++j) {
      CHECK(ds.inputs.col(j).minCoeff() == 0.0);
      CHECK(ds.inputs.col(j).maxCoeff() == 1.0);
    }
  }
}

TEST_CASE("synthetic labels cycle through the classes") {
  const Dataset ds = synth_blobs(10, 2, 3, 4.0, 5);
  CHECK(ds.num_classes == 3);
  for (Index i = 0; i < ds.size(); ++i)
    CHECK(ds.labels[static_cast<std::size_t>(i)] == static_cast<int>(i % 3));
  const Dataset moons = synth_moons(6, 0.05, 8);
  CHECK(moons.num_classes == 2);
  CHECK(moons.labels == std::vector<int>{0, 1, 0, 1, 0, 1});
}

TEST_CASE("synthetic generator parameter validation") {
  CHECK_THROWS_AS(synth_moons(0, 0.1, 1), ConfigError);
  CHECK_THROWS_AS(synth_blobs(0, 2, 2, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(synth_blobs(10, 0, 2, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(synth_blobs(10, 2, 1, 1.0, 1), ConfigError);
}
