#include "swinvftr/parameter.hpp"

#include <algorithm>
#include <random>

namespace swinvftr::inline SWINVFTR_PRECISION {

uint64_t fnv1a64(const void* data, size_t size, uint64_t hash) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

Tensor ParameterStore::add(const std::string& name, Shape shape, InitSpec init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  Tensor t = Tensor::zeros(std::move(shape), true);
  index_[name] = params_.size();
  params_.push_back({name, t, init});
  return t;
}

void ParameterStore::initialize(uint64_t seed) {
  for (Parameter& p : params_) {
    auto data = p.tensor.mutable_data();
    switch (p.init.kind) {
      case InitKind::Zeros:
        std::fill(data.begin(), data.end(), 0.0f);
        break;
      case InitKind::Ones:
        std::fill(data.begin(), data.end(), 1.0f);
        break;
      case InitKind::TruncNormal: {
        std::mt19937_64 rng(fnv1a64(p.name.data(), p.name.size(), seed ^ 0x9e3779b97f4a7c15ULL));
        std::normal_distribution<Scalar> normal(0.0f, p.init.std);
        for (Scalar& v : data) {
          Scalar s;
          do {
            s = normal(rng);
          } while (std::abs(s) > 2.0f * p.init.std);
          v = s;
        }
        break;
      }
    }
  }
}

void ParameterStore::zero_grad() {
  for (Parameter& p : params_) p.tensor.zero_grad();
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

int64_t ParameterStore::scalar_count() const {
  int64_t n = 0;
  for (const Parameter& p : params_) n += p.tensor.numel();
  return n;
}

}  // namespace swinvftr
