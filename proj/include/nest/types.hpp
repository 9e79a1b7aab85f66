#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "nest/errors.hpp"

namespace nest {

struct Location {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Location&, const Location&) = default;
};

/// One observation: a time inside the window and a planar location.
struct Event {
  double t = 0.0;
  Location s;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Time horizon (0, T) and an axis-aligned rectangular region.
class ObservationWindow {
 public:
  ObservationWindow() = default;
  ObservationWindow(double T, double x_lo, double x_hi, double y_lo, double y_hi)
      : T_(T), x_lo_(x_lo), x_hi_(x_hi), y_lo_(y_lo), y_hi_(y_hi) {
    if (!(T > 0.0) || !std::isfinite(T)) throw InvalidArgument("window horizon must be positive");
    if (!(x_lo < x_hi) || !(y_lo < y_hi)) throw InvalidArgument("window region must have positive extent");
    if (!std::isfinite(x_lo) || !std::isfinite(x_hi) || !std::isfinite(y_lo) || !std::isfinite(y_hi))
      throw InvalidArgument("window region must be finite");
  }

  /// T = 10 and S = [-1, 1]^2.
  static ObservationWindow canonical() { return {10.0, -1.0, 1.0, -1.0, 1.0}; }

  double horizon() const { return T_; }
  double x_lo() const { return x_lo_; }
  double x_hi() const { return x_hi_; }
  double y_lo() const { return y_lo_; }
  double y_hi() const { return y_hi_; }
  double width() const { return x_hi_ - x_lo_; }
  double height() const { return y_hi_ - y_lo_; }
  double area() const { return width() * height(); }
  Location centroid() const { return {0.5 * (x_lo_ + x_hi_), 0.5 * (y_lo_ + y_hi_)}; }

  bool contains(Location s) const {
    return s.x >= x_lo_ && s.x <= x_hi_ && s.y >= y_lo_ && s.y <= y_hi_;
  }
  // The window is open at 0: zero time gaps would hit the kernel's 1/(t - t') factor.
  bool contains(const Event& e) const { return e.t > 0.0 && e.t < T_ && contains(e.s); }

  friend bool operator==(const ObservationWindow&, const ObservationWindow&) = default;

 private:
  double T_ = 10.0;
  double x_lo_ = -1.0;
  double x_hi_ = 1.0;
  double y_lo_ = -1.0;
  double y_hi_ = 1.0;
};

struct EventSequence {
  std::vector<Event> events;
  ObservationWindow window;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
};

/// Throws NonMonotoneTimes or OutOfWindow; returns the sequence unchanged otherwise.
inline const EventSequence& validate_sequence(const EventSequence& seq) {
  for (std::size_t i = 0; i < seq.events.size(); ++i) {
    const Event& e = seq.events[i];
    if (!std::isfinite(e.t) || !std::isfinite(e.s.x) || !std::isfinite(e.s.y)) {
      throw OutOfWindow("event " + std::to_string(i) + " has a non-finite coordinate");
    }
    if (!seq.window.contains(e)) {
      std::ostringstream os;
      os << "event " << i << " (t=" << e.t << ", x=" << e.s.x << ", y=" << e.s.y
         << ") lies outside the observation window";
      throw OutOfWindow(os.str());
    }
    if (i > 0 && !(seq.events[i - 1].t < e.t)) {
      std::ostringstream os;
      os << "event " << i << " at t=" << e.t << " does not follow t=" << seq.events[i - 1].t;
      throw NonMonotoneTimes(os.str());
    }
  }
  return seq;
}

/// Shape of one Gaussian diffusion component at a source location.
struct LocalKernelParams {
  double mu_x = 0.0;
  double mu_y = 0.0;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double rho = 0.0;

  double det_sigma() const { return sigma_x * sigma_x * sigma_y * sigma_y * (1.0 - rho * rho); }
  bool valid() const {
    return sigma_x > 0.0 && sigma_y > 0.0 && rho > -1.0 && rho < 1.0 && std::isfinite(mu_x) &&
           std::isfinite(mu_y);
  }
};

struct Component {
  LocalKernelParams params;
  double weight = 1.0;
};

/// Mixture of diffusion components evaluated at one source location.
using Mixture = std::vector<Component>;

/// Reverse-mode sensitivities of a scalar objective to one component's outputs.
struct ComponentAdjoint {
  double mu_x = 0.0;
  double mu_y = 0.0;
  double sigma_x = 0.0;
  double sigma_y = 0.0;
  double rho = 0.0;
  double weight = 0.0;
};

using MixtureAdjoint = std::vector<ComponentAdjoint>;

}  // namespace nest
