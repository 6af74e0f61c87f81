#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>

#include "paracap/alignment.hpp"
#include "paracap/dataset.hpp"
#include "paracap/image.hpp"

// Bundled toy corpus: eight 64x64 scenes with detections, ground-truth
// paragraphs, generated captions and a small word-vector table. Everything is
// generated from code so tests, the selftest and data/toy stay in sync.
namespace paracap::fixture {

inline constexpr int kImageSize = 64;
inline constexpr int kFeatureDim = 12;
inline constexpr int kEmbeddingDim = 64;

/// Dataset with pixel sources "images/<id>.ppm" (relative to the dataset file).
Dataset toy_dataset();
RgbImage toy_image(std::size_t index);
CaptionSet toy_captions();
EmbeddingTable toy_embeddings();

/// Writes toy.json, toy_caps.json, toy.vec and images/*.ppm into `dir`.
void write_toy_fixture(const std::filesystem::path& dir);

/// 64-bit FNV-1a, used to derive deterministic per-label values.
std::uint64_t fnv1a(std::string_view text);

}  // namespace paracap::fixture
