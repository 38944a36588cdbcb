#pragma once

#include <cstdint>
#include <string>

namespace alphamaml {

/// Writes a procedural handwritten-glyph dataset in the standard
/// Omniglot directory layout `<root>/<alphabet>/<character>/<k>.png`.
/// Each character is a fixed arrangement of strokes; instances jitter
/// the stroke control points, so instances of a character look alike
/// while characters stay distinguishable. Useful as demo data and as a
/// test fixture when the real dataset is not on disk.
void write_glyph_dataset(const std::string& root, long n_alphabets, long chars_per_alphabet,
                         long instances = 20, long canvas = 56, uint64_t seed = 0);

}  // namespace alphamaml
