#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "setest/nn/tensor.hpp"
#include "setest/rng.hpp"

namespace setest::nn {

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Ordered collection of named parameters. Order is insertion order and is
/// what checkpoints and optimizer state are keyed on.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value, bool trainable = true) {
    if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
    params_.push_back({std::move(name), std::move(value), trainable});
    return params_.size() - 1;
  }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) return i;
    }
    return std::nullopt;
  }

  std::size_t index(std::string_view name) const {
    auto i = find(name);
    if (!i) throw ContractError("unknown parameter '" + std::string(name) + "'");
    return *i;
  }

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Tensor& value(std::string_view name) { return params_[index(name)].value; }
  const Tensor& value(std::string_view name) const { return params_[index(name)].value; }

  std::size_t size() const noexcept { return params_.size(); }
  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.params_.size() != b.params_.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
      if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value)) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<Parameter> params_;
};

namespace init {

/// Uniform in +-1/sqrt(fan_in), fan_in = rows of a (in x out) weight.
inline Tensor linear_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor w = Tensor::matrix(fan_in, fan_out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : w.values()) v = rng.uniform(-bound, bound);
  return w;
}

inline Tensor embedding(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 0.02) {
  Tensor w = Tensor::matrix(rows, cols);
  for (auto& v : w.values()) v = rng.normal(0.0, stddev);
  return w;
}

}  // namespace init

}  // namespace setest::nn
