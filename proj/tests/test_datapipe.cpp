#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <deque>
#include <set>

#include "pgf/data/augment.hpp"
#include "pgf/data/records.hpp"
#include "pgf/data/store.hpp"
#include "pgf/data/synth.hpp"
#include "pgf/data/transforms.hpp"
#include "support/temp_dir.hpp"

using namespace pgf;
using namespace pgf::data;
using image::Image;
namespace fs = std::filesystem;

namespace {

Image random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  Image img(w, h);
  for (auto& v : img.pixels) v = static_cast<float>(rng.uniform());
  return img;
}

// Integer-valued 8-bit image so that files round-trip exactly.
Image random_image8(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  Image img(w, h);
  for (auto& v : img.pixels) v = static_cast<float>(rng.below(256) / 255.0);
  return img;
}

long q16(float v) { return std::lround(double(v) * 65535.0); }

}  // namespace

TEST_CASE("filename convention parses from the right and round-trips") {
  const auto rec = parse_filename("Mississippi_2019_0042.jpg");
  CHECK(rec.river == "Mississippi");
  CHECK(rec.year == 2019);
  CHECK(rec.index == 42);
  CHECK(rec.variant.empty());

  for (const std::string name : {"Mississippi_2019_0042.jpg", "Rio_Grande_2001_7.JPG", "Nile_1999_000123.png",
                                 "A_2020_0.jpeg", "Yellow_River_East_2015_12345.jpg"}) {
    CHECK(format_filename(parse_filename(name)) == name);
  }
  CHECK(parse_filename("Rio_Grande_2001_7.JPG").river == "Rio_Grande");

  auto fails_on = [](const std::string& name, const std::string& segment) {
    try {
      parse_filename(name);
    } catch (const DataError& e) {
      return std::string(e.what()).find(segment + " segment") != std::string::npos;
    }
    return false;
  };
  CHECK(fails_on("river.jpg", "index"));
  CHECK(fails_on("Nile_0001.jpg", "year"));
  CHECK(fails_on("Nile_19x9_0001.jpg", "year"));
  CHECK(fails_on("Nile_2019_00a1.jpg", "index"));
  CHECK(fails_on("_2019_0001.jpg", "river"));
  CHECK(fails_on("Nile_2019_0001.gif", "extension"));
  CHECK(fails_on("Nile_2019_0001", "extension"));
}

TEST_CASE("corpus names carry an optional variant; manifest round-trips") {
  auto rec = parse_corpus_name("Rio_Grande_2001_0007_rot2.png");
  CHECK(rec.river == "Rio_Grande");
  CHECK(rec.index == 7);
  CHECK(rec.variant == "rot2");
  CHECK(format_filename(rec) == "Rio_Grande_2001_0007_rot2.png");
  CHECK_THROWS_AS(parse_corpus_name("nonsense_rot2.png"), DataError);

  testing::TempDir dir("manifest");
  std::vector<ImageRecord> recs;
  for (const std::string name : {"Mississippi_2019_0042.jpg", "Snake_2003_0001_crop1.png", "Odd,Name_2000_07.jpg"}) {
    auto r = parse_corpus_name(name);
    r.path = dir.path() / name;
    r.width = 640;
    r.height = 480;
    recs.push_back(r);
  }
  write_manifest(dir.path() / "manifest.csv", recs);
  const auto back = read_manifest(dir.path() / "manifest.csv");
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].path.filename() == recs[i].path.filename());
    CHECK(back[i].river == recs[i].river);
    CHECK(back[i].variant == recs[i].variant);
    CHECK(back[i].index_digits == recs[i].index_digits);
    CHECK(back[i].width == 640);
    CHECK(back[i].height == 480);
  }
}

TEST_CASE("center crop uses floor offsets from the pixel midpoint") {
  Image big(2048, 2048, 1);
  for (std::size_t y = 0; y < 2048; ++y)
    for (std::size_t x = 0; x < 2048; ++x) big.at(x, y, 0) = static_cast<float>(y * 2048 + x);
  const auto c = center_crop(big, 1024);
  CHECK(c.width == 1024);
  CHECK(c.at(0, 0, 0) == big.at(512, 512, 0));
  CHECK(c.at(1023, 1023, 0) == big.at(1535, 1535, 0));

  const auto odd = random_image(7, 6, 1);
  const auto c3 = center_crop(odd, 3);
  CHECK(c3.at(0, 0, 1) == odd.at(2, 1, 1));  // floor(4/2), floor(3/2)

  const auto same = random_image(16, 16, 2);
  CHECK(center_crop(same, 16) == same);
  CHECK_THROWS_AS(center_crop(Image(1023, 1024), 1024), DataError);
}

TEST_CASE("dihedral group: identity, involution, order four, eight distinct elements") {
  const auto img = random_image(5, 5, 3);
  CHECK(dihedral(img, 0) == img);
  CHECK(flip_horizontal(flip_horizontal(img)) == img);
  CHECK(rotate90(rotate90(rotate90(rotate90(img)))) == img);
  std::set<std::vector<float>> seen;
  for (int e = 0; e < 8; ++e) seen.insert(dihedral(img, e).pixels);
  CHECK(seen.size() == 8);
  // Closure: composing two elements lands on one of the eight.
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b) CHECK(seen.count(dihedral(dihedral(img, a), b).pixels) == 1);
  const auto r = rotate90(random_image(4, 2, 4));
  CHECK(r.width == 2);
  CHECK(r.height == 4);
  CHECK_THROWS_AS(dihedral(img, 8), DataError);
}

TEST_CASE("warp helpers") {
  CHECK(reflect_index(-1, 5) == 1);
  CHECK(reflect_index(5, 5) == 3);
  CHECK(reflect_index(9, 5) == 1);
  CHECK(reflect_index(-7, 5) == 1);
  CHECK(reflect_index(3, 1) == 0);

  const auto img = random_image(9, 7, 5);
  CHECK(rotate(img, 0.0) == img);
  const double id[4] = {1, 0, 0, 1};
  CHECK(warp_affine(img, id, 0, 0) == img);
  // Integer translation is a pure shift away from the border.
  const auto shifted = warp_affine(img, id, 2, 1);
  CHECK(shifted.at(3, 2, 0) == img.at(5, 3, 0));
  CHECK(resize_bilinear(img, 9, 7) == img);

  const auto hsv = hsv_jitter(img, 0.0, 0.0);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(hsv.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-6));
  const auto full_turn = hsv_jitter(img, 1.0, 0.0);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(full_turn.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-6));
}

TEST_CASE("augmentation: nine same-size outputs, in range, bit-reproducible") {
  const auto spec = AugmentSpec::defaults(11);
  CHECK(spec.steps.size() == 9);
  for (const auto& img : {random_image(32, 32, 6), random_image(40, 24, 7)}) {
    const auto a = augment(img, spec, 3), b = augment(img, spec, 3);
    REQUIRE(a.size() == 9);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].image == b[i].image);
      CHECK(a[i].image.width == img.width);
      CHECK(a[i].image.height == img.height);
      CHECK(a[i].image.channels == 3);
      for (float v : a[i].image.pixels) REQUIRE((v >= 0.0f && v <= 1.0f));
    }
    const auto c = augment(img, spec, 4);
    int differ = 0;
    for (std::size_t i = 0; i < a.size(); ++i) differ += a[i].image != c[i].image;
    CHECK(differ >= 8);  // a dihedral draw may coincide
  }
  auto bad = spec;
  bad.steps.push_back(bad.steps[0]);
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("augment_corpus writes ten images per input and a manifest") {
  testing::TempDir dir("augment");
  const auto src = synth_corpus(dir.path() / "src", 3, 16, 9);
  const auto res = augment_corpus(src, dir.path() / "aug", AugmentSpec::defaults(1));
  CHECK(res.records.size() == 30);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir.path() / "aug")) files += e.path().extension() == ".png";
  CHECK(files == 30);
  CHECK(read_manifest(res.manifest).size() == 30);
  CHECK(image::read_image(dir.path() / "aug" / format_filename([&] {
          auto r = src[0];
          r.extension = ".png";
          return r;
        }())) == image::read_image(src[0].path));

  // Same seed, different thread count: identical bytes.
  const auto again = augment_corpus(src, dir.path() / "aug2", AugmentSpec::defaults(1), 3);
  for (std::size_t i = 0; i < again.records.size(); ++i) {
    CHECK(image::read_image(again.records[i].path) == image::read_image(res.records[i].path));
  }
}

TEST_CASE("box pyramid matches a direct block-mean oracle") {
  const auto top = random_image(64, 64, 12);
  const auto pyr = box_pyramid(top, 4);
  REQUIRE(pyr.size() == 5);
  // Block means of the 16-bit top level; each level adds at most half a step.
  const std::size_t block = 16;
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0;
        for (std::size_t yy = 0; yy < block; ++yy)
          for (std::size_t xx = 0; xx < block; ++xx) s += q16(top.at(x * block + xx, y * block + yy, c));
        CHECK(std::abs(q16(pyr.back().at(x, y, c)) - s / (block * block)) <= 4 * 0.5 + 1e-9);
      }
  // Exact integer consistency level to level.
  for (std::size_t l = 0; l + 1 < pyr.size(); ++l) {
    const auto& a = pyr[l];
    const auto& b = pyr[l + 1];
    for (std::size_t y = 0; y < b.height; ++y)
      for (std::size_t x = 0; x < b.width; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          const long s = q16(a.at(2 * x, 2 * y, c)) + q16(a.at(2 * x + 1, 2 * y, c)) + q16(a.at(2 * x, 2 * y + 1, c)) +
                         q16(a.at(2 * x + 1, 2 * y + 1, c));
          REQUIRE(q16(b.at(x, y, c)) == (s + 2) / 4);
        }
  }
}

TEST_CASE("resolution store: nine folders at 1024, pyramid consistency, crop mode") {
  testing::TempDir dir("store");
  std::vector<ImageRecord> manifest;
  for (int i = 0; i < 2; ++i) {
    auto rec = parse_filename("Amazon_2018_000" + std::to_string(i) + ".png");
    rec.path = dir.path() / "in" / format_filename(rec);
    fs::create_directories(rec.path.parent_path());
    const auto img = random_image8(1100 + 3 * i, 1030, 20 + i);
    image::write_png(rec.path, img, 8);
    rec.width = img.width;
    rec.height = img.height;
    manifest.push_back(rec);
  }

  const auto store = build_resolution_store(manifest, dir.path() / "down", {1024, 4, PyramidMode::downsample, 1});
  CHECK(store.resolutions() == std::vector<std::size_t>{4, 8, 16, 32, 64, 128, 256, 512, 1024});
  for (auto [r, n] : store.counts) CHECK(n == 2);
  store.verify();

  const auto src = image::read_image(manifest[1].path);
  const auto crop1024 = center_crop(src, 1024);
  const auto f1024 = image::read_image(store.root / "1024" / "Amazon_2018_0001_orig.png");
  CHECK(f1024 == image::quantize(crop1024, 16));
  // 4x4 against the direct 256x256 block mean of the 1024 crop.
  const auto f4 = image::read_image(store.root / "4" / "Amazon_2018_0001_orig.png");
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0;
        for (std::size_t yy = 0; yy < 256; ++yy)
          for (std::size_t xx = 0; xx < 256; ++xx) s += crop1024.at(x * 256 + xx, y * 256 + yy, c);
        CHECK(std::abs(double(f4.at(x, y, c)) - s / 65536.0) <= (0.5 + 8 * 0.5) / 65535.0 + 1e-9);
      }
  // Folder R/2 is the integer 2x2 mean of folder R.
  for (std::size_t r = 8; r <= 1024; r *= 2) {
    const auto a = image::read_image(store.root / std::to_string(r) / "Amazon_2018_0000_orig.png");
    const auto b = image::read_image(store.root / std::to_string(r / 2) / "Amazon_2018_0000_orig.png");
    bool ok = true;
    for (std::size_t y = 0; y < b.height; ++y)
      for (std::size_t x = 0; x < b.width; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          const long s = q16(a.at(2 * x, 2 * y, c)) + q16(a.at(2 * x + 1, 2 * y, c)) + q16(a.at(2 * x, 2 * y + 1, c)) +
                         q16(a.at(2 * x + 1, 2 * y + 1, c));
          ok = ok && q16(b.at(x, y, c)) == (s + 2) / 4;
        }
    CHECK_MESSAGE(ok, "resolution ", r);
  }

  const auto crop_store = build_resolution_store(manifest, dir.path() / "crop", {16, 4, PyramidMode::crop, 2});
  const auto c4 = image::read_image(crop_store.root / "4" / "Amazon_2018_0001_orig.png");
  CHECK(c4 == crop(src, (src.width - 4) / 2, (src.height - 4) / 2, 4, 4));

  auto small = manifest;
  small[0].width = 1000;
  CHECK_THROWS_AS(build_resolution_store(small, dir.path() / "bad", {1024, 4, PyramidMode::downsample, 1}), DataError);
  CHECK_THROWS_AS(build_resolution_store(manifest, dir.path() / "bad2", {1000, 4, PyramidMode::downsample, 1}),
                  DataError);
  fs::create_directories(dir.path() / "ro");
  std::ofstream(dir.path() / "ro" / "file") << "x";
  CHECK_THROWS_AS(build_resolution_store(manifest, dir.path() / "ro" / "file", {16, 4, PyramidMode::downsample, 1}),
                  DataError);

  const auto source = load_source(store, {4, 8});
  CHECK(source.count(4) == 2);
  CHECK(source.count(8) == 2);
  CHECK(!source.has_resolution(16));
}

TEST_CASE("synth_river is deterministic and its mask is one crossing band") {
  const auto a = synth_river(42, 32), b = synth_river(42, 32);
  CHECK(a.image == b.image);
  CHECK(a.mask == b.mask);
  CHECK(synth_river(43, 32).image != a.image);
  SynthOptions arid;
  arid.palette = 1;
  CHECK(synth_river(42, 32, arid).palette == 1);
  CHECK_THROWS_AS(synth_river(1, 12), DataError);

  for (std::size_t res : {32, 128}) {
    std::size_t outside = 0, broken = 0;
    double lo = 1, hi = 0;
    std::array<int, kPaletteCount> palettes{};
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const auto r = synth_river(Rng::derive(77, seed), res);
      const double cov = r.coverage();
      lo = std::min(lo, cov);
      hi = std::max(hi, cov);
      outside += cov < 0.05 || cov > 0.30;
      palettes[r.palette]++;

      // 8-connected flood fill from the first mask pixel.
      const auto n = res;
      std::vector<std::uint8_t> seen(n * n, 0);
      std::size_t start = 0;
      while (start < n * n && !r.mask[start]) ++start;
      REQUIRE(start < n * n);
      std::deque<std::size_t> queue{start};
      seen[start] = 1;
      std::size_t reached = 0;
      bool edge_lo = false, edge_hi = false;
      while (!queue.empty()) {
        const auto p = queue.front();
        queue.pop_front();
        ++reached;
        const long x = p % n, y = p / n;
        const long along = r.vertical ? y : x;
        edge_lo = edge_lo || along == 0;
        edge_hi = edge_hi || along == static_cast<long>(n) - 1;
        for (long dy = -1; dy <= 1; ++dy)
          for (long dx = -1; dx <= 1; ++dx) {
            const long xx = x + dx, yy = y + dy;
            if (xx < 0 || yy < 0 || xx >= static_cast<long>(n) || yy >= static_cast<long>(n)) continue;
            const auto q = static_cast<std::size_t>(yy) * n + xx;
            if (r.mask[q] && !seen[q]) {
              seen[q] = 1;
              queue.push_back(q);
            }
          }
      }
      const auto total = std::count(r.mask.begin(), r.mask.end(), std::uint8_t{1});
      broken += reached != static_cast<std::size_t>(total) || !edge_lo || !edge_hi;
    }
    INFO("resolution ", res, " coverage range ", lo, "..", hi);
    CHECK(outside == 0);
    CHECK(broken == 0);
    for (int p : palettes) CHECK(p > 250);
  }
}

TEST_CASE("synthetic corpus is byte-identical across runs and thread counts") {
  testing::TempDir dir("synth");
  const auto a = synth_corpus(dir.path() / "a", 12, 16, 7, 1);
  const auto b = synth_corpus(dir.path() / "b", 12, 16, 7, 4);
  REQUIRE(a.size() == 12);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].path.filename() == b[i].path.filename());
    std::ifstream fa(a[i].path, std::ios::binary), fb(b[i].path, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(sa == sb);
  }
  CHECK(palette_from_river(a[0].river) >= 0);
  CHECK(read_manifest(dir.path() / "a" / "manifest.csv").size() == 12);

  std::vector<Image> tops;
  for (const auto& r : a) tops.push_back(image::read_image(r.path));
  const auto src = pyramid_source(tops);
  for (std::size_t r : {4, 8, 16}) CHECK(src.count(r) == 12);
}
