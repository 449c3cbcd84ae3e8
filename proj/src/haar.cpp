#include "wavegan/haar.hpp"

#include <cmath>
#include <sstream>

namespace wavegan {

namespace {

constexpr std::array<Band, 4> kAllBands{Band::LL, Band::LH, Band::HL, Band::HH};

void require_4d(const torch::Tensor& x, const char* what) {
  if (!x.defined() || x.dim() != 4) {
    throw ShapeError(std::string(what) + ": expected a 4-D (B, C, H, W) tensor");
  }
}

// (4C, 1, 2, 2) grouped weight: for each channel the four kernels in band order.
torch::Tensor grouped_weight(int64_t channels, torch::TensorOptions options) {
  auto base = HaarKernels::instance().as_tensor(options);
  return base.repeat({channels, 1, 1, 1});
}

}  // namespace

std::string to_string(Band band) {
  switch (band) {
    case Band::LL: return "LL";
    case Band::LH: return "LH";
    case Band::HL: return "HL";
    case Band::HH: return "HH";
  }
  return "?";
}

Band band_from_string(const std::string& name) {
  for (auto b : kAllBands) {
    if (to_string(b) == name) return b;
  }
  throw ConfigError("unknown band '" + name + "'");
}

BandMask::BandMask(std::initializer_list<Band> bands) {
  for (auto b : bands) bits_.set(static_cast<size_t>(b));
}

BandMask BandMask::with(Band band) const {
  BandMask m = *this;
  m.bits_.set(static_cast<size_t>(band));
  return m;
}

BandMask BandMask::without(Band band) const {
  BandMask m = *this;
  m.bits_.reset(static_cast<size_t>(band));
  return m;
}

std::string BandMask::to_string() const {
  std::string out;
  for (auto b : kAllBands) {
    if (!contains(b)) continue;
    if (!out.empty()) out += ',';
    out += wavegan::to_string(b);
  }
  return out;
}

BandMask BandMask::parse(const std::string& text) {
  BandMask m;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    m = m.with(band_from_string(item));
  }
  return m;
}

const torch::Tensor& FrequencyBands::operator[](Band band) const {
  switch (band) {
    case Band::LL: return ll;
    case Band::LH: return lh;
    case Band::HL: return hl;
    case Band::HH: break;
  }
  return hh;
}

torch::Tensor& FrequencyBands::operator[](Band band) {
  return const_cast<torch::Tensor&>(std::as_const(*this)[band]);
}

double FrequencyBands::energy() const {
  return wavegan::energy(ll) + wavegan::energy(lh) + wavegan::energy(hl) + wavegan::energy(hh);
}

const HaarKernels& HaarKernels::instance() {
  static const HaarKernels kernels = [] {
    // Signs only; each separable tap pair has magnitude (1/sqrt2)^2 = 0.5 exactly.
    const std::array<double, 2> low{1.0, 1.0};
    const std::array<double, 2> high{-1.0, 1.0};
    // Row filter acts along height, column filter along width.
    const std::array<std::pair<const std::array<double, 2>*, const std::array<double, 2>*>, 4> pairs{{
        {&low, &low},    // LL
        {&high, &low},   // LH
        {&low, &high},   // HL
        {&high, &high},  // HH
    }};
    HaarKernels k;
    for (size_t b = 0; b < 4; ++b) {
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
          k.taps[b][r][c] = 0.5 * (*pairs[b].first)[r] * (*pairs[b].second)[c];
        }
      }
    }
    return k;
  }();
  return kernels;
}

torch::Tensor HaarKernels::as_tensor(torch::TensorOptions options) const {
  auto t = torch::empty({4, 1, 2, 2}, torch::kFloat64);
  auto acc = t.accessor<double, 4>();
  for (int b = 0; b < 4; ++b) {
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) acc[b][0][r][c] = taps[b][r][c];
    }
  }
  return t.to(options);
}

FrequencyBands haar_decompose(const torch::Tensor& x) {
  require_4d(x, "haar_decompose");
  const auto B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  if (H < 2 || W < 2 || H % 2 != 0 || W % 2 != 0) {
    throw ShapeError("haar_decompose: spatial size must be even and >= 2, got " +
                     std::to_string(H) + "x" + std::to_string(W));
  }
  auto weight = grouped_weight(C, x.options());
  const std::vector<int64_t> stride{2, 2}, padding{0, 0}, dilation{1, 1};
  auto out = torch::conv2d(x, weight, torch::Tensor(), stride, padding, dilation, C);
  out = out.view({B, C, 4, H / 2, W / 2});
  return {out.select(2, 0), out.select(2, 1), out.select(2, 2), out.select(2, 3)};
}

torch::Tensor haar_reconstruct(const FrequencyBands& bands) {
  for (auto b : kAllBands) require_4d(bands[b], "haar_reconstruct");
  const auto shape = bands.ll.sizes();
  for (auto b : {Band::LH, Band::HL, Band::HH}) {
    if (bands[b].sizes() != shape) {
      throw ShapeError("haar_reconstruct: band " + to_string(b) + " shape differs from LL");
    }
  }
  const auto B = shape[0], C = shape[1], h = shape[2], w = shape[3];
  auto stacked = torch::stack({bands.ll, bands.lh, bands.hl, bands.hh}, 2).reshape({B, 4 * C, h, w});
  auto weight = grouped_weight(C, stacked.options());
  const std::vector<int64_t> stride{2, 2}, padding{0, 0}, output_padding{0, 0};
  return torch::conv_transpose2d(stacked, weight, torch::Tensor(), stride, padding, output_padding, C);
}

torch::Tensor partial_reconstruct(const FrequencyBands& bands, const BandMask& mask) {
  if (mask.empty()) throw ConfigError("partial_reconstruct: band mask is empty");
  FrequencyBands kept;
  for (auto b : kAllBands) {
    kept[b] = mask.contains(b) ? bands[b] : torch::zeros_like(bands[b]);
  }
  return haar_reconstruct(kept);
}

double energy(const torch::Tensor& x) {
  return x.detach().to(torch::kFloat64).pow(2).sum().item<double>();
}

}  // namespace wavegan
