#include "swinvftr/losses.hpp"

namespace swinvftr::inline SWINVFTR_PRECISION {

Tensor dice_loss(const Tensor& probs, const Tensor& target, Scalar eps) {
  if (probs.shape() != target.shape() || probs.rank() < 2) {
    throw ShapeError("dice_loss: probs " + shape_str(probs.shape()) + " vs target " + shape_str(target.shape()));
  }
  if (!(eps > 0.0f)) throw ConfigError("dice_loss: eps must be positive");
  const int64_t terms = probs.dim(0) * probs.dim(1);
  const int64_t len = probs.numel() / terms;
  const auto p = probs.data();
  const auto y = target.data();

  std::vector<double> inter(terms), denom(terms);
  double loss = 0.0;
  for (int64_t t = 0; t < terms; ++t) {
    double i = 0.0, sp = 0.0, sy = 0.0;
    for (int64_t j = t * len; j < (t + 1) * len; ++j) {
      i += static_cast<double>(p[j]) * y[j];
      sp += p[j];
      sy += y[j];
    }
    inter[t] = 2.0 * i + eps;
    denom[t] = sp + sy + eps;
    loss += 1.0 - inter[t] / denom[t];
  }
  loss /= static_cast<double>(terms);

  return detail::make_result(
      {1}, {static_cast<Scalar>(loss)}, {probs, target},
      [terms, len, inter = std::move(inter), denom = std::move(denom)](TensorImpl& node) {
        TensorImpl& pn = node.parent(0);
        if (!pn.requires_grad) return;
        const auto& yv = node.parent(1).data;
        auto& g = pn.ensure_grad();
        const double up = node.grad[0] / static_cast<double>(terms);
        for (int64_t t = 0; t < terms; ++t) {
          const double d2 = denom[t] * denom[t];
          for (int64_t j = t * len; j < (t + 1) * len; ++j) {
            g[j] += static_cast<Scalar>(-up * (2.0 * yv[j] * denom[t] - inter[t]) / d2);
          }
        }
      });
}

Tensor one_hot(std::span<const uint8_t> labels, int64_t num_classes, const Shape& spatial, int64_t batch) {
  const int64_t len = numel(spatial);
  if (static_cast<int64_t>(labels.size()) != batch * len) {
    throw ShapeError("one_hot: " + std::to_string(labels.size()) + " labels for batch " + std::to_string(batch) +
                     " x " + shape_str(spatial));
  }
  Shape shape{batch, num_classes};
  shape.insert(shape.end(), spatial.begin(), spatial.end());
  std::vector<Scalar> out(numel(shape), 0.0f);
  for (int64_t n = 0; n < batch; ++n) {
    for (int64_t i = 0; i < len; ++i) {
      const int64_t c = labels[n * len + i];
      if (c >= num_classes) throw ClassError("one_hot: label " + std::to_string(c) + " outside " +
                                             std::to_string(num_classes) + " classes");
      out[(n * num_classes + c) * len + i] = 1.0f;
    }
  }
  return Tensor::from_data(std::move(shape), std::move(out));
}

}  // namespace swinvftr
