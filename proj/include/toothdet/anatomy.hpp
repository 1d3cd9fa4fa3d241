#pragma once

// FDI two-digit tooth codes (11..18, 21..28, 31..38, 41..48), their canonical
// channel enumeration, and the adjacency pair set consumed by the Gaussian
// disentanglement loss. Channel order is quadrant-major, position-minor:
// 11..18 -> 0..7, 21..28 -> 8..15, 31..38 -> 16..23, 41..48 -> 24..31.

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace toothdet {

inline constexpr int kNumTeeth = 32;

inline bool is_valid_fdi(int fdi) {
  const int q = fdi / 10, p = fdi % 10;
  return q >= 1 && q <= 4 && p >= 1 && p <= 8;
}

inline int fdi_to_channel(int fdi) {
  if (!is_valid_fdi(fdi))
    throw std::invalid_argument("invalid FDI code " + std::to_string(fdi));
  return (fdi / 10 - 1) * 8 + (fdi % 10 - 1);
}

inline int channel_to_fdi(int channel) {
  if (channel < 0 || channel >= kNumTeeth)
    throw std::invalid_argument("invalid channel " + std::to_string(channel));
  return (channel / 8 + 1) * 10 + channel % 8 + 1;
}

struct ToothId {
  int fdi = 11;

  ToothId() = default;
  explicit ToothId(int code) : fdi(code) {
    if (!is_valid_fdi(code))
      throw std::invalid_argument("invalid FDI code " + std::to_string(code));
  }
  static ToothId from_channel(int channel) {
    return ToothId(channel_to_fdi(channel));
  }

  int channel() const { return fdi_to_channel(fdi); }
  int quadrant() const { return fdi / 10; }
  int position() const { return fdi % 10; }
  bool upper() const { return quadrant() <= 2; }

  friend bool operator==(const ToothId& a, const ToothId& b) {
    return a.fdi == b.fdi;
  }
  friend bool operator!=(const ToothId& a, const ToothId& b) {
    return a.fdi != b.fdi;
  }
};

// Teeth in anatomical order along each arch, patient right to patient left.
inline const std::array<int, 16>& upper_arch_order() {
  static const std::array<int, 16> order = {18, 17, 16, 15, 14, 13, 12, 11,
                                            21, 22, 23, 24, 25, 26, 27, 28};
  return order;
}

inline const std::array<int, 16>& lower_arch_order() {
  static const std::array<int, 16> order = {48, 47, 46, 45, 44, 43, 42, 41,
                                            31, 32, 33, 34, 35, 36, 37, 38};
  return order;
}

// Unordered tooth pairs, stored with channels sorted ascending.
class AdjacencySet {
public:
  AdjacencySet() = default;

  void add(ToothId a, ToothId b) {
    if (a == b) throw std::invalid_argument("adjacency pair must be distinct");
    int i = a.channel(), j = b.channel();
    if (i > j) std::swap(i, j);
    if (!contains_channels(i, j)) pairs_.emplace_back(i, j);
  }

  bool contains(ToothId a, ToothId b) const {
    int i = a.channel(), j = b.channel();
    if (i > j) std::swap(i, j);
    return contains_channels(i, j);
  }

  // Pairs in canonical order: sorted by (first channel, second channel).
  std::vector<std::pair<int, int>> channel_pairs() const {
    auto sorted = pairs_;
    std::sort(sorted.begin(), sorted.end());
    return sorted;
  }

  std::size_t size() const { return pairs_.size(); }

  std::vector<int> neighbors(ToothId t) const {
    const int c = t.channel();
    std::vector<int> out;
    for (const auto& [i, j] : pairs_) {
      if (i == c) out.push_back(j);
      if (j == c) out.push_back(i);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

private:
  bool contains_channels(int i, int j) const {
    for (const auto& p : pairs_)
      if (p.first == i && p.second == j) return true;
    return false;
  }

  std::vector<std::pair<int, int>> pairs_;
};

// Consecutive teeth along each arch: 15 pairs per arch, 30 total, including
// the midline pairs (11,21) and (41,31), excluding any cross-arch pair.
inline AdjacencySet default_adjacency() {
  AdjacencySet adj;
  for (const auto* order : {&upper_arch_order(), &lower_arch_order()})
    for (std::size_t k = 0; k + 1 < order->size(); ++k)
      adj.add(ToothId((*order)[k]), ToothId((*order)[k + 1]));
  return adj;
}

}  // namespace toothdet
