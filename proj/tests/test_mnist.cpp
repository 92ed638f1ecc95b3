#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tista/errors.hpp"
#include "tista/mnist.hpp"

using namespace tista;
using namespace tista::mnist;

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::vector<std::uint8_t> idx_file(std::uint32_t count, const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> out;
  put_be32(out, 0x00000803);
  put_be32(out, count);
  put_be32(out, 28);
  put_be32(out, 28);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

// Sparse blob images: a few bright strokes on a dark background.
ImageDataset synthetic_digits(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> pos(6, 21);
  std::uniform_real_distribution<double> level(0.5, 1.0);
  ImageDataset d;
  for (std::size_t k = 0; k < count; ++k) {
    Eigen::VectorXd img = Eigen::VectorXd::Zero(kPixels);
    const int r = pos(rng), c = pos(rng), len = 6;
    for (int i = 0; i < len; ++i) {
      img[(r) * 28 + std::min(27, c + i)] = level(rng);
      img[std::min(27, r + i) * 28 + c] = level(rng);
    }
    d.images.push_back(img);
  }
  return d;
}

}  // namespace

TEST_CASE("minimal IDX file") {
  const auto data = parse_idx(idx_file(1, std::vector<std::uint8_t>(784, 0)));
  REQUIRE(data.count() == 1);
  CHECK(data.images[0].size() == 784);
  CHECK(data.images[0].isZero(0.0));
}

TEST_CASE("pixel normalization and row-major order") {
  std::vector<std::uint8_t> px(2 * 784, 0);
  px[0] = 255;
  px[1] = 128;
  px[28] = 7;
  px[784 + 783] = 255;
  const auto data = parse_idx(idx_file(2, px));
  REQUIRE(data.count() == 2);
  CHECK(data.images[0][0] == 1.0);
  CHECK(data.images[0][1] == 128.0 / 255.0);
  CHECK(data.images[0][2] == 0.0);
  CHECK(data.images[0][28] == 7.0 / 255.0);
  CHECK(data.images[1][783] == 1.0);
}

TEST_CASE("truncation is reported at the end of the data") {
  auto bytes = idx_file(3, std::vector<std::uint8_t>(3 * 784, 9));
  bytes.pop_back();
  try {
    parse_idx(bytes);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == bytes.size());
  }
  CHECK_THROWS_AS(parse_idx(std::span(bytes).first(10)), ParseError);
  auto longer = idx_file(1, std::vector<std::uint8_t>(785, 0));
  CHECK_THROWS_AS(parse_idx(longer), ParseError);
}

TEST_CASE("every header mutation of magic or dimensions is rejected") {
  const auto good = idx_file(2, std::vector<std::uint8_t>(2 * 784, 1));
  REQUIRE_NOTHROW(parse_idx(good));
  for (std::size_t at = 0; at < 16; ++at) {
    for (int bit = 0; bit < 8; ++bit) {
      auto bad = good;
      bad[at] ^= static_cast<std::uint8_t>(1u << bit);
      CAPTURE(at);
      CAPTURE(bit);
      CHECK_THROWS_AS(parse_idx(bad), ParseError);
    }
  }
  auto magic = good;
  magic[3] = 0x01;  // label-file magic
  try {
    parse_idx(magic);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 0);
  }
}

TEST_CASE("load_idx and PGM export") {
  const auto dir = std::filesystem::temp_directory_path() / "tista_mnist_test";
  std::filesystem::create_directories(dir);
  const auto bytes = idx_file(1, std::vector<std::uint8_t>(784, 51));
  {
    std::ofstream out(dir / "img.idx", std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  const auto data = load_idx(dir / "img.idx");
  CHECK(data.images[0][400] == doctest::Approx(0.2));
  CHECK_THROWS_AS(load_idx(dir / "missing.idx"), IoError);

  Eigen::VectorXd img = data.images[0];
  img[0] = -0.3;
  img[1] = 1.7;
  write_pgm(dir / "out.pgm", img);
  std::ifstream in(dir / "out.pgm", std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "P5\n28 28\n255\n";
  REQUIRE(content.size() == header.size() + 784);
  CHECK(content.substr(0, header.size()) == header);
  CHECK(static_cast<unsigned char>(content[header.size()]) == 0);
  CHECK(static_cast<unsigned char>(content[header.size() + 1]) == 255);
  CHECK(static_cast<unsigned char>(content[header.size() + 2]) == 51);
  CHECK_THROWS_AS(write_pgm(dir / "bad.pgm", Eigen::VectorXd::Zero(10)), ShapeError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("small synthetic image experiment") {
  const auto train = synthetic_digits(400, 1);
  const auto test = synthetic_digits(20, 2);
  MnistConfig config;
  config.generations = 3;
  config.minibatch_size = 100;
  config.oamp_iterations = 10;
  config.test_images = 0;
  const auto result = run_mnist_experiment(train, test, config);
  CHECK(result.table.size() == (3 + 1) + (10 + 1));
  CHECK(result.trained.rounds() == 3);
  REQUIRE(result.trained.shrinkage);
  CHECK(result.tista_reconstructions.size() == 20);
  CHECK(result.oamp_reconstructions.size() == 20);
  CHECK(result.tista_mse < result.table.front().mse);
  CHECK(std::isfinite(result.oamp_mse));
  CHECK_THROWS_AS(run_mnist_experiment(ImageDataset{}, test, config), ConfigError);
}
