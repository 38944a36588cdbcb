#include "alphamaml/omniglot.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "alphamaml/rng.hpp"

namespace fs = std::filesystem;

namespace alphamaml {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

template <typename T>
void write_le(std::ostream& os, T v) {
  uint8_t buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<uint8_t>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  uint8_t buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

constexpr char kCacheMagic[5] = {'O', 'M', 'N', 'I', '1'};

}  // namespace

std::vector<uint8_t> read_png_gray(const std::string& path, long& width, long& height) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng initialization failed");
  }
  std::vector<uint8_t> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_packing(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  width = static_cast<long>(png_get_image_width(png, info));
  height = static_cast<long>(png_get_image_height(png, info));
  pixels.resize(static_cast<size_t>(width * height));
  rows.resize(static_cast<size_t>(height));
  for (long y = 0; y < height; ++y) rows[static_cast<size_t>(y)] = pixels.data() + y * width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

void write_png_gray(const std::string& path, const uint8_t* data, long width, long height) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot create PNG file: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to encode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (long y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(data + y * width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<uint8_t> downsample_area(const std::vector<uint8_t>& src, long sw, long sh, long dw,
                                     long dh) {
  std::vector<uint8_t> dst(static_cast<size_t>(dw * dh));
  const double rx = static_cast<double>(sw) / static_cast<double>(dw);
  const double ry = static_cast<double>(sh) / static_cast<double>(dh);
  for (long dy = 0; dy < dh; ++dy) {
    const double y0 = dy * ry, y1 = (dy + 1) * ry;
    for (long dx = 0; dx < dw; ++dx) {
      const double x0 = dx * rx, x1 = (dx + 1) * rx;
      double acc = 0.0;
      for (long sy = static_cast<long>(y0); sy < sh && static_cast<double>(sy) < y1; ++sy) {
        const double wy = std::min(y1, static_cast<double>(sy + 1)) -
                          std::max(y0, static_cast<double>(sy));
        if (wy <= 0.0) continue;
        for (long sx = static_cast<long>(x0); sx < sw && static_cast<double>(sx) < x1; ++sx) {
          const double wx = std::min(x1, static_cast<double>(sx + 1)) -
                            std::max(x0, static_cast<double>(sx));
          if (wx <= 0.0) continue;
          acc += wx * wy * static_cast<double>(src[static_cast<size_t>(sy * sw + sx)]);
        }
      }
      double v = acc / (rx * ry);
      dst[static_cast<size_t>(dy * dw + dx)] =
          static_cast<uint8_t>(std::clamp(v + 0.5, 0.0, 255.0));
    }
  }
  return dst;
}

OmniglotStore ingest_omniglot(const std::string& root, long train_chars, long rotations,
                              uint64_t shuffle_seed) {
  if (!fs::is_directory(root))
    throw std::runtime_error("omniglot root is not a directory: " + root);
  if (rotations != 1 && rotations != 4)
    throw std::runtime_error("rotations must be 1 or 4");

  std::vector<fs::path> alphabets;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) alphabets.push_back(e.path());
  std::sort(alphabets.begin(), alphabets.end());

  OmniglotStore store;
  store.rotations = rotations;
  store.shuffle_seed = shuffle_seed;
  for (const auto& alphabet : alphabets) {
    std::vector<fs::path> chars;
    for (const auto& e : fs::directory_iterator(alphabet))
      if (e.is_directory()) chars.push_back(e.path());
    std::sort(chars.begin(), chars.end());
    for (const auto& ch : chars) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(ch))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      const std::string name =
          alphabet.filename().string() + "/" + ch.filename().string();
      if (static_cast<long>(files.size()) != kOmniglotInstances) {
        std::cerr << "warning: skipping " << name << " with " << files.size()
                  << " instances (expected " << kOmniglotInstances << ")\n";
        continue;
      }
      OmniglotStore::Character character;
      character.name = name;
      character.images.reserve(files.size());
      for (const auto& f : files) {
        long w = 0, h = 0;
        auto pixels = read_png_gray(f.string(), w, h);
        auto small = (w == kOmniglotSide && h == kOmniglotSide)
                         ? pixels
                         : downsample_area(pixels, w, h, kOmniglotSide, kOmniglotSide);
        OmniglotStore::Image img;
        std::copy(small.begin(), small.end(), img.begin());
        character.images.push_back(img);
      }
      store.characters.push_back(std::move(character));
    }
  }
  if (store.characters.empty())
    throw std::runtime_error("no characters found under " + root +
                             " (expected <root>/<alphabet>/<character>/<instance>.png)");
  if (train_chars < 1 || train_chars >= store.char_count())
    throw std::runtime_error("train split of " + std::to_string(train_chars) +
                             " characters needs 1 <= train < " +
                             std::to_string(store.char_count()) +
                             " ingested characters (use --train-chars for small datasets)");

  Rng rng(shuffle_seed);
  rng.shuffle(store.characters);
  store.train_count = train_chars;
  return store;
}

void save_omniglot_cache(const OmniglotStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot create cache file: " + path);
  os.write(kCacheMagic, sizeof(kCacheMagic));
  write_le<uint32_t>(os, 1);  // version
  write_le<uint32_t>(os, static_cast<uint32_t>(store.char_count()));
  write_le<uint32_t>(os, static_cast<uint32_t>(kOmniglotInstances));
  write_le<uint32_t>(os, static_cast<uint32_t>(store.train_count));
  write_le<uint32_t>(os, static_cast<uint32_t>(store.rotations));
  write_le<uint64_t>(os, store.shuffle_seed);
  for (const auto& ch : store.characters) {
    write_le<uint32_t>(os, static_cast<uint32_t>(ch.name.size()));
    os.write(ch.name.data(), static_cast<std::streamsize>(ch.name.size()));
    for (const auto& img : ch.images)
      os.write(reinterpret_cast<const char*>(img.data()), img.size());
  }
  if (!os) throw std::runtime_error("failed writing cache file: " + path);
}

OmniglotStore load_omniglot_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open cache file: " + path);
  char magic[sizeof(kCacheMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not an omniglot cache file: " + path);
  const uint32_t version = read_le<uint32_t>(is);
  if (version != 1)
    throw std::runtime_error("unsupported cache version " + std::to_string(version));
  OmniglotStore store;
  const uint32_t chars = read_le<uint32_t>(is);
  const uint32_t instances = read_le<uint32_t>(is);
  if (instances != kOmniglotInstances)
    throw std::runtime_error("cache has " + std::to_string(instances) + " instances per class");
  store.train_count = read_le<uint32_t>(is);
  store.rotations = read_le<uint32_t>(is);
  store.shuffle_seed = read_le<uint64_t>(is);
  store.characters.resize(chars);
  for (auto& ch : store.characters) {
    const uint32_t len = read_le<uint32_t>(is);
    ch.name.resize(len);
    is.read(ch.name.data(), len);
    ch.images.resize(instances);
    for (auto& img : ch.images) is.read(reinterpret_cast<char*>(img.data()), img.size());
  }
  if (!is) throw std::runtime_error("truncated cache file: " + path);
  return store;
}

ad::Tensor omniglot_image(const OmniglotStore& store, long char_index, long instance,
                          long rotation) {
  const auto& img = store.characters.at(static_cast<size_t>(char_index))
                        .images.at(static_cast<size_t>(instance));
  const long s = kOmniglotSide;
  ad::Tensor t({1, s, s});
  double* dst = t.data();
  for (long i = 0; i < s; ++i) {
    for (long j = 0; j < s; ++j) {
      long si = i, sj = j;
      switch (rotation & 3) {
        case 0: break;
        case 1: si = j, sj = s - 1 - i; break;          // 90 degrees ccw
        case 2: si = s - 1 - i, sj = s - 1 - j; break;  // 180
        case 3: si = s - 1 - j, sj = i; break;          // 270
      }
      dst[i * s + j] = static_cast<double>(img[static_cast<size_t>(si * s + sj)]) / 255.0;
    }
  }
  return t;
}

}  // namespace alphamaml
