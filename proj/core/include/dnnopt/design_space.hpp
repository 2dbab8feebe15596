#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dnnopt/error.hpp"

namespace dnnopt {

using Rng = std::mt19937_64;

struct Stage {
  int depth;
  double width;
  int kernel;
};

// One point of the design space, stored as choice indices in stage-major
// order (depth, width, kernel per stage) with the bit-width index last.
// Lexicographic comparison of the index list is the global tie-break order.
class DesignPoint {
 public:
  DesignPoint() = default;
  explicit DesignPoint(std::vector<int> indices) : indices_(std::move(indices)) {}

  const std::vector<int>& indices() const noexcept { return indices_; }
  std::size_t size() const noexcept { return indices_.size(); }
  int operator[](std::size_t i) const { return indices_[i]; }
  int& operator[](std::size_t i) { return indices_[i]; }

  friend auto operator<=>(const DesignPoint&, const DesignPoint&) = default;
  friend bool operator==(const DesignPoint&, const DesignPoint&) = default;

 private:
  std::vector<int> indices_;
};

std::string to_string(const DesignPoint& x);

class DesignSpace {
 public:
  DesignSpace(int num_stages, std::vector<int> depth_choices,
              std::vector<double> width_choices, std::vector<int> kernel_choices,
              std::vector<int> bits_choices);

  // 4 stages, depth {1..4}, width {0.5,0.75,1.0,1.25}, kernel {3,5,7},
  // bits {4,8,16,32}.
  static DesignSpace standard();
  // 2 stages, depth {1,2}, width {0.5,1.0}, kernel {3,5}, bits {8,32}:
  // 128 designs, small enough for exhaustive oracles.
  static DesignSpace reduced();

  int num_stages() const noexcept { return num_stages_; }
  const std::vector<int>& depth_choices() const noexcept { return depth_; }
  const std::vector<double>& width_choices() const noexcept { return width_; }
  const std::vector<int>& kernel_choices() const noexcept { return kernel_; }
  const std::vector<int>& bits_choices() const noexcept { return bits_; }

  // Length of the flat index list / continuous encoding: 3*num_stages + 1.
  std::size_t dimension() const noexcept { return 3 * static_cast<std::size_t>(num_stages_) + 1; }
  std::size_t choice_count(std::size_t dim) const;
  // Throws kSpaceTooLarge if the count does not fit in 64 bits.
  std::uint64_t cardinality() const;

  bool contains(const DesignPoint& x) const noexcept;
  // Throws kInvalidDesign when `x` is not a member of this space.
  void check(const DesignPoint& x) const;

  Stage stage(const DesignPoint& x, int i) const;
  int bits(const DesignPoint& x) const;

  // Builds a design from concrete values; every value must be a listed choice.
  DesignPoint make(std::span<const Stage> stages, int bits) const;
  DesignPoint all_min() const;
  DesignPoint all_max() const;

  friend bool operator==(const DesignSpace&, const DesignSpace&) = default;

 private:
  int num_stages_;
  std::vector<int> depth_;
  std::vector<double> width_;
  std::vector<int> kernel_;
  std::vector<int> bits_;
};

using Encoding = std::vector<double>;

DesignPoint sample_uniform(const DesignSpace& space, Rng& rng);

Encoding encode(const DesignPoint& x, const DesignSpace& space);
// Total on any vector of the right length: components are clamped to [0,1]
// and snapped to the nearest grid index, ties rounding up.
DesignPoint decode(std::span<const double> v, const DesignSpace& space);

DesignPoint mutate(const DesignPoint& x, double rate, const DesignSpace& space, Rng& rng);
DesignPoint crossover(const DesignPoint& a, const DesignPoint& b, const DesignSpace& space,
                      Rng& rng);

// Every design in lexicographic index order. Throws kSpaceTooLarge when the
// cardinality exceeds `limit`.
std::vector<DesignPoint> enumerate_all(const DesignSpace& space, std::uint64_t limit);

// Designs that differ from `x` in at most `radius` fields, `x` first, then by
// increasing distance and lexicographic order; stops after `budget` designs.
std::vector<DesignPoint> hamming_ball(const DesignPoint& x, int radius, std::size_t budget,
                                      const DesignSpace& space);

}  // namespace dnnopt
