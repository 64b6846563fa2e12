#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace coprou {

/// H x W grid of real values, row-major with channels interleaved. Holds
/// images (intensity in [0, 1]), depth maps (scene units) and photometric
/// uncertainty maps (intensity units).
class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(int width, int height, int channels = 1, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  int pixel_count() const { return width_ * height_; }
  bool empty() const { return data_.empty(); }

  double& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const ScalarField& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }
  bool same_grid(const ScalarField& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  bool all_finite() const;

  /// Binary "SFLD" format: magic, then width, height, channels as uint32
  /// little-endian, then float32 little-endian samples.
  static ScalarField read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;

  friend bool operator==(const ScalarField&, const ScalarField&) = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// One boolean per pixel.
class ValidityMask {
 public:
  ValidityMask() = default;
  ValidityMask(int width, int height, bool fill = false);

  int width() const { return width_; }
  int height() const { return height_; }

  bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool value) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = value ? 1 : 0;
  }

  std::size_t count() const;
  bool matches(const ScalarField& field) const {
    return width_ == field.width() && height_ == field.height();
  }

  /// Pixelwise AND.
  ValidityMask operator&(const ValidityMask& other) const;
  ScalarField to_field() const;

  friend bool operator==(const ValidityMask&, const ValidityMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

void require_same_grid(const ScalarField& a, const ScalarField& b, const char* what);
void require_same_shape(const ScalarField& a, const ScalarField& b, const char* what);

}  // namespace coprou
