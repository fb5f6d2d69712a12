#pragma once

// SEGGRID binary container (little-endian):
//
//   offset  size  field
//   0       4     magic "SGRD"
//   4       1     kind: 0 = label, 1 = prob, 2 = dense/embedding
//   5       4     u32 height
//   9       4     u32 width
//   13      4     u32 channels (1 for label grids)
//   17      ...   payload, row-major pixel then channel
//                 kind 0: u16 class IDs
//                 kind 1, 2: f32 values
//
// A label file carries no class count, so readers supply C. Real values are
// stored as f32; grids whose values are f32-representable round-trip exactly.

#include <filesystem>
#include <iosfwd>
#include <variant>

#include "affield/grid.hpp"

namespace affield {

enum class GridKind : std::uint8_t { Label = 0, Prob = 1, Dense = 2 };

using AnyGrid = std::variant<LabelGrid, ProbGrid, DenseGrid>;

void write_grid(std::ostream& out, const LabelGrid& grid);
void write_grid(std::ostream& out, const ProbGrid& grid);
void write_grid(std::ostream& out, const DenseGrid& grid);

/// `num_classes` validates label payloads; prob grids take C from the channel count.
AnyGrid read_grid(std::istream& in, int num_classes);

void write_grid(const std::filesystem::path& path, const AnyGrid& grid);
AnyGrid read_grid(const std::filesystem::path& path, int num_classes);

LabelGrid read_label_grid(const std::filesystem::path& path, int num_classes);
DenseGrid read_dense_grid(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace affield
