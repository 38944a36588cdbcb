// Generates a procedural glyph dataset in the Omniglot directory layout,
// for demos and environments without the real dataset on disk.

#include <CLI11.hpp>

#include <iostream>

#include "alphamaml/glyphs.hpp"

int main(int argc, char** argv) {
  CLI::App app{"write a procedural glyph dataset (Omniglot directory layout)"};
  std::string root = "glyphs";
  long alphabets = 10, chars = 12, instances = 20, canvas = 56;
  uint64_t seed = 0;
  app.add_option("--out", root, "output directory");
  app.add_option("--alphabets", alphabets, "number of alphabets");
  app.add_option("--chars-per-alphabet", chars, "characters per alphabet");
  app.add_option("--instances", instances, "instances per character");
  app.add_option("--canvas", canvas, "rendered image side in pixels");
  app.add_option("--seed", seed, "rng seed");
  CLI11_PARSE(app, argc, argv);

  try {
    alphamaml::write_glyph_dataset(root, alphabets, chars, instances, canvas, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cout << "wrote " << alphabets * chars << " characters x " << instances << " instances to "
            << root << "\n";
  return 0;
}
