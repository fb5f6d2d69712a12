#include "affield/seggrid.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace affield {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'G', 'R', 'D'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

void put_f32(std::ostream& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

void read_exact(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw ValidationError("SEGGRID: truncated file");
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_header(std::ostream& out, GridKind kind, int height, int width, int channels) {
  out.write(kMagic.data(), 4);
  out.put(static_cast<char>(kind));
  put_u32(out, static_cast<std::uint32_t>(height));
  put_u32(out, static_cast<std::uint32_t>(width));
  put_u32(out, static_cast<std::uint32_t>(channels));
}

std::vector<double> get_f32s(std::istream& in, std::size_t n) {
  std::vector<double> values(n);
  for (auto& v : values) v = static_cast<double>(std::bit_cast<float>(get_u32(in)));
  return values;
}

}  // namespace

void write_grid(std::ostream& out, const LabelGrid& grid) {
  if (grid.num_classes() > std::numeric_limits<std::uint16_t>::max() + 1) {
    throw ValidationError("SEGGRID: class count exceeds u16 label range");
  }
  put_header(out, GridKind::Label, grid.height(), grid.width(), 1);
  for (int label : grid.labels()) {
    const char bytes[2] = {static_cast<char>(label & 0xff), static_cast<char>((label >> 8) & 0xff)};
    out.write(bytes, 2);
  }
}

void write_grid(std::ostream& out, const ProbGrid& grid) {
  put_header(out, GridKind::Prob, grid.height(), grid.width(), grid.num_classes());
  for (double v : grid.probs()) put_f32(out, v);
}

void write_grid(std::ostream& out, const DenseGrid& grid) {
  put_header(out, GridKind::Dense, grid.height(), grid.width(), grid.channels());
  for (double v : grid.values()) put_f32(out, v);
}

AnyGrid read_grid(std::istream& in, int num_classes) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() == 0) throw ValidationError("SEGGRID: empty file");
  if (in.gcount() != 4 || magic != kMagic) throw ValidationError("SEGGRID: bad magic");
  const int kind = in.get();
  if (kind == std::char_traits<char>::eof()) throw ValidationError("SEGGRID: truncated file");
  const auto height = get_u32(in);
  const auto width = get_u32(in);
  const auto channels = get_u32(in);
  constexpr std::uint32_t kMaxDim = 1u << 16;
  if (height == 0 || width == 0 || channels == 0 || height > kMaxDim || width > kMaxDim || channels > kMaxDim) {
    throw ValidationError("SEGGRID: invalid dimensions");
  }
  const std::size_t n = static_cast<std::size_t>(height) * width;
  const int h = static_cast<int>(height);
  const int w = static_cast<int>(width);

  AnyGrid result;
  switch (static_cast<GridKind>(kind)) {
    case GridKind::Label: {
      if (channels != 1) throw ValidationError("SEGGRID: label grid must have 1 channel");
      std::vector<int> labels(n);
      for (auto& l : labels) {
        unsigned char b[2];
        read_exact(in, reinterpret_cast<char*>(b), 2);
        l = static_cast<int>(b[0]) | (static_cast<int>(b[1]) << 8);
      }
      result = LabelGrid(h, w, num_classes, std::move(labels));
      break;
    }
    case GridKind::Prob:
      if (num_classes > 0 && static_cast<int>(channels) != num_classes) {
        throw ValidationError("SEGGRID: prob grid has " + std::to_string(channels) + " channels, expected " +
                              std::to_string(num_classes));
      }
      result = ProbGrid(h, w, static_cast<int>(channels), get_f32s(in, n * channels));
      break;
    case GridKind::Dense:
      result = DenseGrid(h, w, static_cast<int>(channels), get_f32s(in, n * channels));
      break;
    default:
      throw ValidationError("SEGGRID: unknown kind " + std::to_string(kind));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("SEGGRID: trailing bytes after payload");
  return result;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw RuntimeFailure("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw RuntimeFailure("rename to " + path.string() + " failed: " + ec.message());
  }
}

void write_grid(const std::filesystem::path& path, const AnyGrid& grid) {
  std::ostringstream out(std::ios::binary);
  std::visit([&](const auto& g) { write_grid(out, g); }, grid);
  write_file_atomic(path, out.str());
}

AnyGrid read_grid(const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return read_grid(in, num_classes);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

LabelGrid read_label_grid(const std::filesystem::path& path, int num_classes) {
  auto grid = read_grid(path, num_classes);
  if (!std::holds_alternative<LabelGrid>(grid)) throw ValidationError(path.string() + ": not a label grid");
  return std::get<LabelGrid>(std::move(grid));
}

DenseGrid read_dense_grid(const std::filesystem::path& path) {
  auto grid = read_grid(path, 0);
  if (!std::holds_alternative<DenseGrid>(grid)) throw ValidationError(path.string() + ": not a dense grid");
  return std::get<DenseGrid>(std::move(grid));
}

}  // namespace affield
