#include "fedtune/hp_space.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fedtune/errors.hpp"

namespace fedtune::hp {

Dimension Dimension::uniform(std::string name, double lo, double hi) {
  if (!(lo < hi)) throw SpecError("dimension " + name + ": need lo < hi");
  Dimension d;
  d.name = std::move(name);
  d.kind = DimKind::uniform;
  d.lo = lo;
  d.hi = hi;
  return d;
}

Dimension Dimension::log_uniform(std::string name, double lo_exp, double hi_exp) {
  if (!(lo_exp < hi_exp)) throw SpecError("dimension " + name + ": need lo < hi");
  Dimension d;
  d.name = std::move(name);
  d.kind = DimKind::log_uniform;
  d.lo = lo_exp;
  d.hi = hi_exp;
  return d;
}

Dimension Dimension::categorical(std::string name, std::vector<double> choices) {
  if (choices.empty()) throw SpecError("dimension " + name + ": empty choice list");
  std::set<double> distinct(choices.begin(), choices.end());
  if (distinct.size() != choices.size()) {
    throw SpecError("dimension " + name + ": duplicate choices");
  }
  Dimension d;
  d.name = std::move(name);
  d.kind = DimKind::categorical;
  d.choices = std::move(choices);
  return d;
}

Dimension Dimension::fixed(std::string name, double value) {
  Dimension d;
  d.name = std::move(name);
  d.kind = DimKind::fixed;
  d.value = value;
  return d;
}

bool Dimension::contains(double v) const {
  switch (kind) {
    case DimKind::uniform:
      return v >= lo && v <= hi;
    case DimKind::log_uniform:
      return v >= std::pow(10.0, lo) && v <= std::pow(10.0, hi);
    case DimKind::categorical:
      return std::find(choices.begin(), choices.end(), v) != choices.end();
    case DimKind::fixed:
      return v == value;
  }
  return false;
}

double Dimension::transform(double v) const {
  return kind == DimKind::log_uniform ? std::log10(v) : v;
}

double Dimension::lower_t() const {
  switch (kind) {
    case DimKind::uniform:
    case DimKind::log_uniform:
      return lo;
    case DimKind::categorical:
      return *std::min_element(choices.begin(), choices.end());
    case DimKind::fixed:
      return value;
  }
  return 0.0;
}

double Dimension::upper_t() const {
  switch (kind) {
    case DimKind::uniform:
    case DimKind::log_uniform:
      return hi;
    case DimKind::categorical:
      return *std::max_element(choices.begin(), choices.end());
    case DimKind::fixed:
      return value;
  }
  return 0.0;
}

double HpConfig::at(std::string_view name) const {
  const auto it = values_.find(std::string(name));
  if (it == values_.end()) {
    throw SpecError("config has no dimension named " + std::string(name));
  }
  return it->second;
}

bool HpConfig::has(std::string_view name) const {
  return values_.count(std::string(name)) != 0;
}

void HpConfig::set(const std::string& name, double v) { values_[name] = v; }

SearchSpace::SearchSpace(std::vector<Dimension> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw SpecError("search space has no dimensions");
  std::set<std::string> names;
  for (const auto& d : dims_) {
    if (!names.insert(d.name).second) {
      throw SpecError("duplicate dimension name: " + d.name);
    }
  }
}

const Dimension* SearchSpace::find(std::string_view name) const {
  for (const auto& d : dims_) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

const Dimension& SearchSpace::dimension(std::string_view name) const {
  if (const Dimension* d = find(name)) return *d;
  throw SpecError("space has no dimension named " + std::string(name));
}

bool SearchSpace::contains(const HpConfig& config) const {
  if (config.values().size() != dims_.size()) return false;
  for (const auto& d : dims_) {
    if (!config.has(d.name) || !d.contains(config.at(d.name))) return false;
  }
  return true;
}

HpConfig sample_config(const SearchSpace& space, rng::Stream& stream) {
  HpConfig config;
  for (const auto& d : space.dimensions()) {
    switch (d.kind) {
      case DimKind::uniform:
        config.set(d.name, stream.uniform(d.lo, d.hi));
        break;
      case DimKind::log_uniform:
        config.set(d.name, std::pow(10.0, stream.uniform(d.lo, d.hi)));
        break;
      case DimKind::categorical:
        config.set(d.name, d.choices[stream.index(d.choices.size())]);
        break;
      case DimKind::fixed:
        config.set(d.name, d.value);
        break;
    }
  }
  return config;
}

namespace {

std::vector<Dimension> base_dimensions(double server_lr_lo, double server_lr_hi) {
  std::vector<Dimension> dims;
  dims.push_back(Dimension::log_uniform("server_lr", server_lr_lo, server_lr_hi));
  dims.push_back(Dimension::uniform("beta1", 0.0, 0.9));
  dims.push_back(Dimension::uniform("beta2", 0.0, 0.999));
  dims.push_back(Dimension::fixed("lr_decay", 0.9999));
  dims.push_back(Dimension::log_uniform("client_lr", -6.0, 0.0));
  dims.push_back(Dimension::uniform("momentum", 0.0, 0.9));
  dims.push_back(Dimension::fixed("weight_decay", 0.00005));
  dims.push_back(Dimension::categorical("batch_size", {32.0, 64.0, 128.0}));
  dims.push_back(Dimension::fixed("epochs", 1.0));
  return dims;
}

}  // namespace

SearchSpace default_space() { return SearchSpace(base_dimensions(-6.0, -1.0)); }

SearchSpace nested_server_lr_space(int width) {
  if (width < 1 || width > 4) {
    throw SpecError("nested space width must be 1, 2, 3 or 4");
  }
  const double half = static_cast<double>(width) / 2.0;
  return SearchSpace(base_dimensions(-3.0 - half, -3.0 + half));
}

}  // namespace fedtune::hp
