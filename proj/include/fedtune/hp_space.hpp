#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fedtune/rng.hpp"

// Hyperparameter search space: typed dimensions, draw-order-stable sampling,
// and the two concrete spaces used by the experiments (the 9-dimension
// federated tuning space and its nested server-lr refinements).
namespace fedtune::hp {

enum class DimKind { uniform, log_uniform, categorical, fixed };

struct Dimension {
  std::string name;
  DimKind kind = DimKind::fixed;
  // uniform: raw bounds; log_uniform: base-10 exponent bounds.
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> choices;  // categorical, in declared order
  double value = 0.0;           // fixed

  static Dimension uniform(std::string name, double lo, double hi);
  static Dimension log_uniform(std::string name, double lo_exp, double hi_exp);
  static Dimension categorical(std::string name, std::vector<double> choices);
  static Dimension fixed(std::string name, double value);

  // True if v is a legal value for this dimension (log_uniform checks the raw
  // value against [10^lo, 10^hi]; categorical checks membership; fixed checks
  // exact equality).
  bool contains(double v) const;

  // Coordinate used by model-based tuners and the surrogate: log10 of the raw
  // value for log_uniform dimensions, identity otherwise.
  double transform(double v) const;
  double lower_t() const;
  double upper_t() const;
  bool is_continuous() const { return kind == DimKind::uniform || kind == DimKind::log_uniform; }
};

// One point of the space: dimension name -> raw value (categorical values are
// stored as the chosen number; log-scaled values are stored exponentiated).
class HpConfig {
 public:
  double at(std::string_view name) const;  // throws SpecError if absent
  bool has(std::string_view name) const;
  void set(const std::string& name, double v);
  const std::map<std::string, double>& values() const { return values_; }
  bool operator==(const HpConfig&) const = default;

 private:
  std::map<std::string, double> values_;
};

class SearchSpace {
 public:
  explicit SearchSpace(std::vector<Dimension> dims);  // validates; throws SpecError

  const std::vector<Dimension>& dimensions() const { return dims_; }
  const Dimension& dimension(std::string_view name) const;  // throws SpecError
  const Dimension* find(std::string_view name) const;
  // True if config has exactly this space's dimensions, each within bounds.
  bool contains(const HpConfig& config) const;

 private:
  std::vector<Dimension> dims_;
};

// One independent draw; dimensions are drawn in declared order, fixed
// dimensions consume no randomness.
HpConfig sample_config(const SearchSpace& space, rng::Stream& stream);

// The 9-dimension federated tuning space (server/client optimizer settings).
SearchSpace default_space();

// Same space with the server-lr exponent range narrowed to
// [-3 - width/2, -3 + width/2]; width must be 1, 2, 3 or 4. Smaller widths are
// strict subsets of larger ones and all share the geometric midpoint 1e-3.
SearchSpace nested_server_lr_space(int width);

}  // namespace fedtune::hp
