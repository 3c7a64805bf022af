#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "posefix/codec.hpp"
#include "posefix/network.hpp"
#include "posefix/refiner.hpp"

namespace netcheck {

struct Result {
  double norm_rel = 0.0;   // |a - n|_2 / max(|a|_2, |n|_2)
  double max_rel = 0.0;    // elementwise, over entries with max(|a|, |n|) >= floor
  double max_small = 0.0;  // absolute error on entries below the floor
  std::size_t checked = 0;
  std::size_t resolved = 0;
};

inline double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Entries whose true value sits below the finite-difference resolution
// (the head biases, whose gradient is exactly zero by softmax shift
// invariance) are judged by absolute error; the rest by relative error.
inline void accumulate(Result& r, double analytic, double numeric, double floor) {
  ++r.checked;
  if (std::max(std::abs(analytic), std::abs(numeric)) >= floor) {
    r.max_rel = std::max(r.max_rel, std::abs(analytic - numeric) /
                                        std::max(std::abs(analytic), std::abs(numeric)));
    ++r.resolved;
  } else {
    r.max_small = std::max(r.max_small, std::abs(analytic - numeric));
  }
}

// Miniature two-layer net on 8x6 maps, three input channels, two joints.
// The analytic gradient comes from ConvNet<T>; the finite-difference
// reference always runs in double at the same (rounded) parameters.
template <class T>
Result miniature_check(std::uint64_t seed, std::size_t sample_params, posefix::LossMode mode,
                       double step, double floor) {
  using namespace posefix;
  const int w = 8, h = 6, joints = 2, channels = 3;
  const auto arch = miniature_architecture(channels, joints, w, h);
  std::mt19937_64 rng(seed);
  ConvNet<double> ref(arch);
  ref.init_gaussian(rng, 0.3);
  std::normal_distribution<double> bias(0.0, 0.1);
  // Nonzero biases so the check also covers them.
  for (auto& p : ref.params()) if (p == 0.0) p = bias(rng);

  ConvNet<T> net(arch);
  for (std::size_t i = 0; i < net.num_params(); ++i)
    net.params()[i] = static_cast<T>(ref.params()[i]);
  for (std::size_t i = 0; i < net.num_params(); ++i)
    ref.params()[i] = static_cast<double>(net.params()[i]);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<T> input(static_cast<std::size_t>(channels * w * h));
  for (auto& v : input) v = static_cast<T>(unit(rng));
  std::vector<double> input_d(input.begin(), input.end());

  RefinerConfig cfg;
  cfg.heatmap_width = w;
  cfg.heatmap_height = h;
  cfg.loss_mode = mode;
  RefinerTarget target;
  for (int j = 0; j < joints; ++j) {
    const Coord c{0.5 + unit(rng) * (w - 2), 0.5 + unit(rng) * (h - 2)};
    target.coords.push_back(c);
    target.maps.push_back(mode == LossMode::c2c ? gaussian_encode(c, 1.0, w, h)
                                                : target_encode(c, w, h).map);
    target.mask.push_back(1);
  }

  auto loss_at = [&](const ConvNet<double>& n) {
    typename ConvNet<double>::Workspace ws;
    n.forward(input_d, ws);
    return evaluate_loss(cfg, joints, ws.activations.back(), target).loss;
  };

  typename ConvNet<T>::Workspace ws;
  net.forward(input, ws);
  const auto& out = ws.activations.back();
  const std::vector<double> out_d(out.begin(), out.end());
  const auto eval = evaluate_loss(cfg, joints, out_d, target);
  std::vector<T> grad_out(eval.grad_output.begin(), eval.grad_output.end());
  std::vector<T> grad(net.num_params(), T(0));
  net.backward(ws, grad_out, grad);

  std::vector<std::size_t> order(net.num_params());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (sample_params > 0 && sample_params < order.size()) {
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(sample_params);
  }
  Result r;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (auto i : order) {
    const double keep = ref.params()[i];
    ref.params()[i] = keep + step;
    const double up = loss_at(ref);
    ref.params()[i] = keep - step;
    const double down = loss_at(ref);
    ref.params()[i] = keep;
    const double numeric = (up - down) / (2 * step);
    const double analytic = static_cast<double>(grad[i]);
    accumulate(r, analytic, numeric, floor);
    diff2 += (analytic - numeric) * (analytic - numeric);
    a2 += analytic * analytic;
    n2 += numeric * numeric;
  }
  r.norm_rel = std::sqrt(diff2) / std::max(std::sqrt(std::max(a2, n2)), 1e-300);
  return r;
}

}  // namespace netcheck
