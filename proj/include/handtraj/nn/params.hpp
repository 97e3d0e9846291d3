#pragma once

#include <map>
#include <string>
#include <vector>

#include "handtraj/common/rng.hpp"
#include "handtraj/nn/matrix.hpp"

namespace handtraj::nn {

// Named parameter tensors in registration order.
template <typename Real>
class ParamStore {
 public:
  std::size_t add(const std::string& name, std::size_t rows, std::size_t cols) {
    if (index_.count(name)) throw ConfigError("duplicate parameter " + name);
    index_[name] = values_.size();
    names_.push_back(name);
    values_.emplace_back(rows, cols);
    return values_.size() - 1;
  }

  std::size_t size() const { return values_.size(); }
  std::size_t id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix<Real>& operator[](std::size_t i) { return values_[i]; }
  const Matrix<Real>& operator[](std::size_t i) const { return values_[i]; }
  Matrix<Real>& at(const std::string& name) { return values_[id(name)]; }
  const Matrix<Real>& at(const std::string& name) const { return values_[id(name)]; }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  // Same names and shapes, zero-filled.
  std::vector<Matrix<Real>> zeros_like() const {
    std::vector<Matrix<Real>> out;
    out.reserve(values_.size());
    for (const auto& v : values_) out.emplace_back(v.rows, v.cols);
    return out;
  }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> p;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      p.add(names_[i], values_[i].rows, values_[i].cols);
      p[i] = values_[i].template cast<Other>();
    }
    return p;
  }

 private:
  std::vector<Matrix<Real>> values_;
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
};

template <typename Real>
using Grads = std::vector<Matrix<Real>>;

}  // namespace handtraj::nn
