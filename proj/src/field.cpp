#include "coprou/field.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "coprou/error.hpp"

namespace coprou {

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'F', 'L', 'D'};

static_assert(sizeof(float) == 4);

void put_u32(std::ostream& out, std::uint32_t value) {
  const std::array<char, 4> bytes = {static_cast<char>(value & 0xFF),
                                     static_cast<char>((value >> 8) & 0xFF),
                                     static_cast<char>((value >> 16) & 0xFF),
                                     static_cast<char>((value >> 24) & 0xFF)};
  out.write(bytes.data(), bytes.size());
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), b.size());
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

ScalarField::ScalarField(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  require(width > 0 && height > 0 && channels > 0, ErrorKind::kInvalidArgument,
          "field dimensions must be positive");
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

bool ScalarField::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

ScalarField ScalarField::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  require(in.good() && magic == kMagic, ErrorKind::kIo, path.string() + ": not an SFLD file");
  const std::uint32_t w = get_u32(in);
  const std::uint32_t h = get_u32(in);
  const std::uint32_t c = get_u32(in);
  require(in.good() && w > 0 && h > 0 && c > 0, ErrorKind::kIo,
          path.string() + ": bad SFLD header");
  ScalarField field(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
  for (double& value : field.data_) {
    std::uint32_t bits = get_u32(in);
    value = static_cast<double>(std::bit_cast<float>(bits));
  }
  require(in.good(), ErrorKind::kIo, path.string() + ": truncated SFLD payload");
  return field;
}

void ScalarField::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(width_));
  put_u32(out, static_cast<std::uint32_t>(height_));
  put_u32(out, static_cast<std::uint32_t>(channels_));
  for (double value : data_) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(value)));
  require(out.good(), ErrorKind::kIo, "write failed: " + path.string());
}

ValidityMask::ValidityMask(int width, int height, bool fill) : width_(width), height_(height) {
  require(width > 0 && height > 0, ErrorKind::kInvalidArgument,
          "mask dimensions must be positive");
  bits_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
}

std::size_t ValidityMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

ValidityMask ValidityMask::operator&(const ValidityMask& other) const {
  require(width_ == other.width_ && height_ == other.height_, ErrorKind::kDimensionMismatch,
          "mask dimensions differ");
  ValidityMask out = *this;
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] & other.bits_[i];
  return out;
}

ScalarField ValidityMask::to_field() const {
  ScalarField f(width_, height_);
  for (std::size_t i = 0; i < bits_.size(); ++i) f.data()[i] = bits_[i];
  return f;
}

void require_same_grid(const ScalarField& a, const ScalarField& b, const char* what) {
  require(a.same_grid(b), ErrorKind::kDimensionMismatch,
          std::string(what) + ": grids differ (" + std::to_string(a.width()) + "x" +
              std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
              std::to_string(b.height()) + ")");
}

void require_same_shape(const ScalarField& a, const ScalarField& b, const char* what) {
  require_same_grid(a, b, what);
  require(a.channels() == b.channels(), ErrorKind::kDimensionMismatch,
          std::string(what) + ": channel counts differ");
}

}  // namespace coprou
