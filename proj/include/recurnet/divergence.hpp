#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace recurnet {

enum class Divergence { kKl, kJeffreys, kHellinger2 };

// Config spellings: "kl", "jeffreys", "hellinger2".
std::string to_string(Divergence d);
std::optional<Divergence> parse_divergence(const std::string& name);

// Inputs are clamped below at this value before logs and square roots.
inline constexpr double kProbabilityFloor = 1e-12;

// sum P log(P / Q)
double kl_divergence(std::span<const double> p, std::span<const double> q);
// sum (P - Q)(ln P - ln Q)
double jeffreys_divergence(std::span<const double> p, std::span<const double> q);
// sum 2 (sqrt P - sqrt Q)^2. The constant 2 makes disjoint supports score 4.
double squared_hellinger(std::span<const double> p, std::span<const double> q);

double divergence(Divergence kind, std::span<const double> p, std::span<const double> q);

// Partial derivatives of `divergence` with respect to every P and Q entry.
// Entries clamped at the floor get a zero derivative.
void divergence_gradient(Divergence kind, std::span<const double> p, std::span<const double> q,
                         std::span<double> grad_p, std::span<double> grad_q);

// Max-shifted softmax over every entry.
template <typename T>
std::vector<double> softmax(std::span<const T> values);

}  // namespace recurnet
