#include "dnnopt/design_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dnnopt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kInvalidDesign: return "invalid design";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kSpaceTooLarge: return "space too large";
    case ErrorCode::kInsufficientData: return "insufficient data";
    case ErrorCode::kUndefinedCorrelation: return "undefined correlation";
    case ErrorCode::kUntrainedModel: return "untrained model";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kIo: return "io error";
  }
  return "error";
}

std::string to_string(const DesignPoint& x) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < x.size(); ++i) out << (i ? "," : "") << x[i];
  out << ']';
  return out.str();
}

namespace {

template <typename T>
void require_increasing(const std::vector<T>& v, const char* name) {
  if (v.empty()) throw Error(ErrorCode::kInvalidArgument, std::string(name) + " is empty");
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i - 1] < v[i])) {
      throw Error(ErrorCode::kInvalidArgument, std::string(name) + " is not strictly increasing");
    }
  }
}

template <typename T>
int index_of(const std::vector<T>& choices, T value) {
  auto it = std::find(choices.begin(), choices.end(), value);
  return it == choices.end() ? -1 : static_cast<int>(it - choices.begin());
}

}  // namespace

DesignSpace::DesignSpace(int num_stages, std::vector<int> depth_choices,
                         std::vector<double> width_choices, std::vector<int> kernel_choices,
                         std::vector<int> bits_choices)
    : num_stages_(num_stages),
      depth_(std::move(depth_choices)),
      width_(std::move(width_choices)),
      kernel_(std::move(kernel_choices)),
      bits_(std::move(bits_choices)) {
  if (num_stages_ < 1) throw Error(ErrorCode::kInvalidArgument, "num_stages must be >= 1");
  require_increasing(depth_, "depth_choices");
  require_increasing(width_, "width_choices");
  require_increasing(kernel_, "kernel_choices");
  require_increasing(bits_, "bits_choices");
  if (depth_.front() < 1) throw Error(ErrorCode::kInvalidArgument, "depth must be positive");
  if (width_.front() <= 0.0) throw Error(ErrorCode::kInvalidArgument, "width must be positive");
  for (int k : kernel_) {
    if (k < 1 || k % 2 == 0) throw Error(ErrorCode::kInvalidArgument, "kernel sizes must be odd");
  }
  if (bits_.front() < 1) throw Error(ErrorCode::kInvalidArgument, "bit-width must be positive");
}

DesignSpace DesignSpace::standard() {
  return DesignSpace(4, {1, 2, 3, 4}, {0.5, 0.75, 1.0, 1.25}, {3, 5, 7}, {4, 8, 16, 32});
}

DesignSpace DesignSpace::reduced() { return DesignSpace(2, {1, 2}, {0.5, 1.0}, {3, 5}, {8, 32}); }

std::size_t DesignSpace::choice_count(std::size_t dim) const {
  if (dim >= dimension()) throw Error(ErrorCode::kDimensionMismatch, "dimension index out of range");
  if (dim == dimension() - 1) return bits_.size();
  switch (dim % 3) {
    case 0: return depth_.size();
    case 1: return width_.size();
    default: return kernel_.size();
  }
}

std::uint64_t DesignSpace::cardinality() const {
  std::uint64_t total = 1;
  for (std::size_t d = 0; d < dimension(); ++d) {
    const std::uint64_t n = choice_count(d);
    if (total > std::numeric_limits<std::uint64_t>::max() / n) {
      throw Error(ErrorCode::kSpaceTooLarge, "cardinality overflows 64 bits");
    }
    total *= n;
  }
  return total;
}

bool DesignSpace::contains(const DesignPoint& x) const noexcept {
  if (x.size() != dimension()) return false;
  for (std::size_t d = 0; d < dimension(); ++d) {
    if (x[d] < 0 || static_cast<std::size_t>(x[d]) >= choice_count(d)) return false;
  }
  return true;
}

void DesignSpace::check(const DesignPoint& x) const {
  if (!contains(x)) throw Error(ErrorCode::kInvalidDesign, "design " + to_string(x) + " not in space");
}

Stage DesignSpace::stage(const DesignPoint& x, int i) const {
  const auto base = static_cast<std::size_t>(3 * i);
  return {depth_[x[base]], width_[x[base + 1]], kernel_[x[base + 2]]};
}

int DesignSpace::bits(const DesignPoint& x) const { return bits_[x[dimension() - 1]]; }

DesignPoint DesignSpace::make(std::span<const Stage> stages, int bits) const {
  if (stages.size() != static_cast<std::size_t>(num_stages_)) {
    throw Error(ErrorCode::kInvalidDesign, "stage count does not match space");
  }
  std::vector<int> idx;
  idx.reserve(dimension());
  for (const Stage& s : stages) {
    idx.push_back(index_of(depth_, s.depth));
    idx.push_back(index_of(width_, s.width));
    idx.push_back(index_of(kernel_, s.kernel));
  }
  idx.push_back(index_of(bits_, bits));
  DesignPoint x(std::move(idx));
  check(x);
  return x;
}

DesignPoint DesignSpace::all_min() const { return DesignPoint(std::vector<int>(dimension(), 0)); }

DesignPoint DesignSpace::all_max() const {
  std::vector<int> idx(dimension());
  for (std::size_t d = 0; d < dimension(); ++d) idx[d] = static_cast<int>(choice_count(d)) - 1;
  return DesignPoint(std::move(idx));
}

namespace {

int draw_index(std::size_t n, Rng& rng) {
  return std::uniform_int_distribution<int>(0, static_cast<int>(n) - 1)(rng);
}

}  // namespace

DesignPoint sample_uniform(const DesignSpace& space, Rng& rng) {
  std::vector<int> idx(space.dimension());
  for (std::size_t d = 0; d < idx.size(); ++d) idx[d] = draw_index(space.choice_count(d), rng);
  return DesignPoint(std::move(idx));
}

Encoding encode(const DesignPoint& x, const DesignSpace& space) {
  space.check(x);
  Encoding v(space.dimension());
  for (std::size_t d = 0; d < v.size(); ++d) {
    const auto n = space.choice_count(d);
    v[d] = n == 1 ? 0.5 : static_cast<double>(x[d]) / static_cast<double>(n - 1);
  }
  return v;
}

DesignPoint decode(std::span<const double> v, const DesignSpace& space) {
  if (v.size() != space.dimension()) {
    throw Error(ErrorCode::kDimensionMismatch, "encoding length " + std::to_string(v.size()) +
                                                   " != " + std::to_string(space.dimension()));
  }
  std::vector<int> idx(v.size());
  for (std::size_t d = 0; d < v.size(); ++d) {
    const auto n = static_cast<double>(space.choice_count(d));
    double c = std::isnan(v[d]) ? 0.0 : std::clamp(v[d], 0.0, 1.0);
    idx[d] = static_cast<int>(std::floor(c * (n - 1.0) + 0.5));
  }
  return DesignPoint(std::move(idx));
}

DesignPoint mutate(const DesignPoint& x, double rate, const DesignSpace& space, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "mutation rate outside [0,1]");
  space.check(x);
  DesignPoint y = x;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t d = 0; d < y.size(); ++d) {
    if (coin(rng) < rate) y[d] = draw_index(space.choice_count(d), rng);
  }
  return y;
}

DesignPoint crossover(const DesignPoint& a, const DesignPoint& b, const DesignSpace& space,
                      Rng& rng) {
  space.check(a);
  space.check(b);
  DesignPoint child = a;
  std::bernoulli_distribution pick_b(0.5);
  for (std::size_t d = 0; d < child.size(); ++d) {
    if (pick_b(rng)) child[d] = b[d];
  }
  return child;
}

std::vector<DesignPoint> enumerate_all(const DesignSpace& space, std::uint64_t limit) {
  const std::uint64_t total = space.cardinality();
  if (total > limit) {
    throw Error(ErrorCode::kSpaceTooLarge, "cardinality " + std::to_string(total) +
                                               " exceeds limit " + std::to_string(limit));
  }
  std::vector<DesignPoint> out;
  out.reserve(total);
  std::vector<int> idx(space.dimension(), 0);
  for (std::uint64_t n = 0; n < total; ++n) {
    out.emplace_back(idx);
    // Odometer increment, last dimension fastest.
    for (std::size_t d = idx.size(); d-- > 0;) {
      if (++idx[d] < static_cast<int>(space.choice_count(d))) break;
      idx[d] = 0;
    }
  }
  return out;
}

namespace {

void extend_ball(const DesignPoint& current, std::size_t first_dim, int changes_left,
                 const DesignSpace& space, std::vector<DesignPoint>& level_out) {
  if (changes_left == 0) {
    level_out.push_back(current);
    return;
  }
  for (std::size_t d = first_dim; d < current.size(); ++d) {
    for (int c = 0; c < static_cast<int>(space.choice_count(d)); ++c) {
      if (c == current[d]) continue;
      DesignPoint next = current;
      next[d] = c;
      extend_ball(next, d + 1, changes_left - 1, space, level_out);
    }
  }
}

}  // namespace

std::vector<DesignPoint> hamming_ball(const DesignPoint& x, int radius, std::size_t budget,
                                      const DesignSpace& space) {
  space.check(x);
  if (radius < 0) throw Error(ErrorCode::kInvalidArgument, "radius must be >= 0");
  std::vector<DesignPoint> out{x};
  for (int r = 1; r <= radius && out.size() < budget; ++r) {
    std::vector<DesignPoint> level;
    extend_ball(x, 0, r, space, level);
    std::sort(level.begin(), level.end());
    for (auto& y : level) {
      if (out.size() >= budget) break;
      out.push_back(std::move(y));
    }
  }
  return out;
}

}  // namespace dnnopt
