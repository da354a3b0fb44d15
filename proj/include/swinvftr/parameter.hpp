#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "swinvftr/tensor.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

enum class InitKind { TruncNormal, Zeros, Ones };

struct InitSpec {
  InitKind kind = InitKind::Zeros;
  Scalar std = 0.0f;

  static InitSpec trunc_normal(Scalar std) { return {InitKind::TruncNormal, std}; }
  static InitSpec zeros() { return {InitKind::Zeros, 0.0f}; }
  static InitSpec ones() { return {InitKind::Ones, 0.0f}; }
};

struct Parameter {
  std::string name;
  Tensor tensor;
  InitSpec init;
};

/// Owns every trainable tensor of a model under a unique dotted name.
///
/// Initialization draws each parameter from its own generator seeded by
/// (seed, name), so values do not depend on registration order.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Shape shape, InitSpec init);

  void initialize(uint64_t seed);
  void zero_grad();

  const std::vector<Parameter>& params() const { return params_; }
  std::vector<Parameter>& params() { return params_; }
  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);
  int64_t scalar_count() const;
  size_t size() const { return params_.size(); }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, size_t> index_;
};

/// Hierarchical name builder: Scope("encoder").sub("stage1")("weight") -> "encoder.stage1.weight".
class Scope {
 public:
  Scope(ParameterStore& store, std::string prefix = {}) : store_(&store), prefix_(std::move(prefix)) {}
  Scope sub(const std::string& name) const { return Scope(*store_, join(name)); }
  Tensor add(const std::string& name, Shape shape, InitSpec init) const {
    return store_->add(join(name), std::move(shape), init);
  }
  const std::string& prefix() const { return prefix_; }

 private:
  std::string join(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "." + name; }
  ParameterStore* store_;
  std::string prefix_;
};

uint64_t fnv1a64(const void* data, size_t size, uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace swinvftr
