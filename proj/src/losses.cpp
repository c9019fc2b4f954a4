#include "recurnet/losses.hpp"

namespace recurnet {

void LossConfig::validate() const {
  require(epsilon > 0, "loss.epsilon must be positive");
  require(phi >= 0, "loss.phi must be nonnegative");
  require(prediction_weight >= 0, "loss.prediction_weight must be nonnegative");
}

template <typename T>
double dice_loss(std::span<const T> prob, std::span<const T> target, double epsilon) {
  require(prob.size() == target.size(), "dice_loss: probability map and mask shapes differ");
  double inter = 0.0, total = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    inter += double(prob[i]) * double(target[i]);
    total += double(prob[i]) + double(target[i]);
  }
  return 1.0 - (2.0 * inter + epsilon) / (total + epsilon);
}

double dice_loss(const Slice& prob, const Mask& target, double epsilon) {
  if (!prob.same_shape(target)) fail(ErrorKind::kShapeMismatch, "dice_loss: shape mismatch");
  std::vector<float> g(target.pixels.begin(), target.pixels.end());
  return dice_loss<float>(prob.pixels, g, epsilon);
}

template <typename T>
void dice_loss_gradient(std::span<const T> prob, std::span<const T> target, double epsilon,
                        std::span<T> grad) {
  require(prob.size() == target.size() && grad.size() == prob.size(),
          "dice_loss_gradient: size mismatch");
  double inter = 0.0, total = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    inter += double(prob[i]) * double(target[i]);
    total += double(prob[i]) + double(target[i]);
  }
  const double num = 2.0 * inter + epsilon;
  const double den = total + epsilon;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    grad[i] = static_cast<T>(-(2.0 * double(target[i]) * den - num) / (den * den));
  }
}

double segmentation_loss(double dice, double correlation, double phi) {
  return dice + phi * correlation;
}

double total_loss(double seg_loss, double pred_dice, const LossConfig& config, TrainMode mode) {
  if (mode == TrainMode::kPretrain) return seg_loss;
  return seg_loss + config.prediction_weight * pred_dice;
}

template double dice_loss(std::span<const float>, std::span<const float>, double);
template double dice_loss(std::span<const double>, std::span<const double>, double);
template void dice_loss_gradient(std::span<const float>, std::span<const float>, double,
                                 std::span<float>);
template void dice_loss_gradient(std::span<const double>, std::span<const double>, double,
                                 std::span<double>);

}  // namespace recurnet
