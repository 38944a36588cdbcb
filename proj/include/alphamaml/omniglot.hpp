#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "alphamaml/tensor.hpp"

namespace alphamaml {

constexpr long kOmniglotSide = 28;
constexpr long kOmniglotInstances = 20;
constexpr long kOmniglotDefaultTrainChars = 1200;  // paper split: 1200 of 1623

/// All ingested characters, shuffled by `shuffle_seed`; the first
/// `train_count` are the meta-train split. Immutable after ingestion and
/// safe to share across threads.
struct OmniglotStore {
  using Image = std::array<uint8_t, kOmniglotSide * kOmniglotSide>;

  struct Character {
    std::string name;  // "alphabet/character"
    std::vector<Image> images;
  };

  std::vector<Character> characters;
  long train_count = 0;
  long rotations = 4;  // classes per character: 0/90/180/270 degrees
  uint64_t shuffle_seed = 0;

  long char_count() const { return static_cast<long>(characters.size()); }
  long test_count() const { return char_count() - train_count; }
  long train_classes() const { return train_count * rotations; }
  long test_classes() const { return test_count() * rotations; }
};

/// Scans `<root>/<alphabet>/<character>/<instance>.png`, decodes to
/// grayscale, downsamples to 28x28 by area averaging, shuffles the
/// characters with `shuffle_seed` and splits off the first `train_chars`
/// for meta-training. Characters without exactly 20 instances are
/// skipped with a warning on stderr.
OmniglotStore ingest_omniglot(const std::string& root, long train_chars = kOmniglotDefaultTrainChars,
                              long rotations = 4, uint64_t shuffle_seed = 0);

/// Binary cache: "OMNI1" magic + counts header + raw 28x28 byte images;
/// bit-exact across platforms.
void save_omniglot_cache(const OmniglotStore& store, const std::string& path);
OmniglotStore load_omniglot_cache(const std::string& path);

/// Class id -> (character index, rotation); rotation is applied on the
/// fly since 90-degree turns are exact pixel permutations.
ad::Tensor omniglot_image(const OmniglotStore& store, long char_index, long instance,
                          long rotation);

/// Grayscale PNG helpers (8-bit).
std::vector<uint8_t> read_png_gray(const std::string& path, long& width, long& height);
void write_png_gray(const std::string& path, const uint8_t* pixels, long width, long height);

/// Anti-aliased box-filter resize with exact fractional coverage.
std::vector<uint8_t> downsample_area(const std::vector<uint8_t>& src, long sw, long sh, long dw,
                                     long dh);

}  // namespace alphamaml
