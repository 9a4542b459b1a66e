#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "mpctc/autodiff.hpp"

namespace mpctc {

// Central finite differences against analytic gradients. Coordinates are
// perturbed in place through the callback, so the scalar function must
// re-read them on every call.
struct FiniteDiffChecker {
  double step = 1e-4;
  double floor = 1e-6;  // denominators below this count as this
  double max_rel_err = 0.0;
  int checked = 0;

  void check_coordinate(const std::function<double()>& f, double& coord,
                        double analytic) {
    const double saved = coord;
    coord = saved + step;
    const double up = f();
    coord = saved - step;
    const double down = f();
    coord = saved;
    const double fd = (up - down) / (2.0 * step);
    const double denom =
        std::max({floor, std::abs(fd), std::abs(analytic)});
    max_rel_err = std::max(max_rel_err, std::abs(fd - analytic) / denom);
    ++checked;
  }

  // Checks every coordinate of a leaf tensor against its gradient.
  void check_tensor(const std::function<double()>& f, Tensor& data,
                    const Tensor& grad) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      check_coordinate(f, data.data[i], grad.data[i]);
    }
  }

  // Checks an evenly strided subset, for large parameter vectors.
  void check_tensor_strided(const std::function<double()>& f, Tensor& data,
                            const Tensor& grad, std::size_t stride) {
    for (std::size_t i = 0; i < data.size(); i += std::max<std::size_t>(1, stride)) {
      check_coordinate(f, data.data[i], grad.data[i]);
    }
  }
};

}  // namespace mpctc
