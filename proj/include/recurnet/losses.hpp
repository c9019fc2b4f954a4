#pragma once

#include <span>

#include "recurnet/data_model.hpp"

namespace recurnet {

struct LossConfig {
  double epsilon = 1e-5;
  // Weight of the correlation loss inside the segmentation loss.
  double phi = 0.1;
  double prediction_weight = 1.0;

  void validate() const;
};

// Soft Dice: 1 - (2 sum(p g) + eps) / (sum p + sum g + eps).
template <typename T>
double dice_loss(std::span<const T> prob, std::span<const T> target, double epsilon);
double dice_loss(const Slice& prob, const Mask& target, double epsilon);

// d dice_loss / d prob, written into `grad` (overwritten).
template <typename T>
void dice_loss_gradient(std::span<const T> prob, std::span<const T> target, double epsilon,
                        std::span<T> grad);

// L_seg = L_dice + phi * L_cor
double segmentation_loss(double dice, double correlation, double phi);

enum class TrainMode { kPretrain, kFull };

// Full mode: L_seg + prediction_weight * L_dice_pred. Pretrain mode: L_seg.
double total_loss(double seg_loss, double pred_dice, const LossConfig& config, TrainMode mode);

}  // namespace recurnet
