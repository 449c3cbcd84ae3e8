#pragma once

#include <array>
#include <bitset>
#include <initializer_list>
#include <stdexcept>
#include <string>

#include <torch/torch.h>

namespace wavegan {

/// Raised when a tensor does not satisfy a shape contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for invalid configuration values (bad masks, unknown keys, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Haar sub-band identifiers.  LH is high-pass along height and low-pass
/// along width (horizontal-edge detail); HL is the converse.
enum class Band : int { LL = 0, LH = 1, HL = 2, HH = 3 };

std::string to_string(Band band);
Band band_from_string(const std::string& name);

/// Subset of the four sub-bands.
class BandMask {
 public:
  BandMask() = default;
  BandMask(std::initializer_list<Band> bands);

  static BandMask all() { return {Band::LL, Band::LH, Band::HL, Band::HH}; }
  static BandMask detail() { return {Band::LH, Band::HL, Band::HH}; }

  bool contains(Band band) const { return bits_.test(static_cast<size_t>(band)); }
  bool empty() const { return bits_.none(); }
  BandMask with(Band band) const;
  BandMask without(Band band) const;

  /// Comma separated band names, e.g. "LH,HL,HH".
  std::string to_string() const;
  static BandMask parse(const std::string& text);

  bool operator==(const BandMask&) const = default;

 private:
  std::bitset<4> bits_;
};

/// The four half-resolution sub-bands of a (B, C, H, W) feature map.
struct FrequencyBands {
  torch::Tensor ll;
  torch::Tensor lh;
  torch::Tensor hl;
  torch::Tensor hh;

  const torch::Tensor& operator[](Band band) const;
  torch::Tensor& operator[](Band band);

  /// Sum of squares over all four bands.
  double energy() const;
};

/// Fixed 2x2 analysis kernels built from L = [1, 1]/sqrt(2) and
/// H = [-1, 1]/sqrt(2).  kernel(b)[r][c] = row_filter[r] * col_filter[c].
struct HaarKernels {
  std::array<std::array<std::array<double, 2>, 2>, 4> taps{};

  static const HaarKernels& instance();
  const std::array<std::array<double, 2>, 2>& operator[](Band band) const {
    return taps[static_cast<size_t>(band)];
  }

  /// Kernels as a (4, 1, 2, 2) tensor in band order LL, LH, HL, HH.
  torch::Tensor as_tensor(torch::TensorOptions options) const;
};

/// Single-level 2D Haar analysis.  Requires a 4-D input with even H and W.
FrequencyBands haar_decompose(const torch::Tensor& x);

/// Exact inverse of haar_decompose.
torch::Tensor haar_reconstruct(const FrequencyBands& bands);

/// Synthesis using only the bands in `mask`; the rest are treated as zero.
torch::Tensor partial_reconstruct(const FrequencyBands& bands, const BandMask& mask);

/// Sum of squares of a tensor, accumulated in double.
double energy(const torch::Tensor& x);

}  // namespace wavegan
