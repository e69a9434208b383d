#include "sem/systems.hpp"

#include <cmath>
#include <stdexcept>

namespace sem {

void check_dim(const SystemDefinition& sys, const Vec& z, const char* where) {
  if (static_cast<int>(z.size()) != sys.dim()) {
    throw std::invalid_argument(std::string(where) + ": state has length " +
                                std::to_string(z.size()) + ", expected " +
                                std::to_string(sys.dim()));
  }
}

double extended_H(const SystemDefinition& sys, const Vec& z) {
  check_dim(sys, z, "extended_H");
  return prho_of(sys, z) + sys.eval_H(t_of(sys, z), q_of(sys, z), p_of(sys, z));
}

double extended_H(const SystemDefinition& sys, const ExtendedState& z) {
  return extended_H(sys, z.flat());
}

void extended_grad(const SystemDefinition& sys, const Vec& z, Vec& out) {
  check_dim(sys, z, "extended_grad");
  const int m = 2 * sys.n + 1;
  out.assign(z.size(), 0.0);
  sys.grad_H(t_of(sys, z), q_of(sys, z), p_of(sys, z), std::span<double>(out.data(), m));
  out[m] = 1.0;
}

Vec extended_grad(const SystemDefinition& sys, const Vec& z) {
  Vec out;
  extended_grad(sys, z, out);
  return out;
}

Vec extended_grad(const SystemDefinition& sys, const ExtendedState& z) {
  return extended_grad(sys, z.flat());
}

void extended_hess(const SystemDefinition& sys, const Vec& z, Mat& out) {
  check_dim(sys, z, "extended_hess");
  const int d = sys.dim();
  const int m = 2 * sys.n + 1;
  Mat phys;
  sys.hess_H(t_of(sys, z), q_of(sys, z), p_of(sys, z), phys);
  if (phys.rows() != m || phys.cols() != m) {
    throw std::invalid_argument("extended_hess: system hess_H has wrong shape");
  }
  out = Mat(d, d);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) out(i, j) = phys(i, j);
  }
}

Mat extended_hess(const SystemDefinition& sys, const Vec& z) {
  Mat out;
  extended_hess(sys, z, out);
  return out;
}

Mat extended_hess(const SystemDefinition& sys, const ExtendedState& z) {
  return extended_hess(sys, z.flat());
}

SystemDefinition pendulum() {
  SystemDefinition sys;
  sys.n = 1;
  sys.name = "pendulum";
  sys.eval_H = [](double, ConstSpan q, ConstSpan p) {
    return 0.5 * p[0] * p[0] - std::cos(q[0]);
  };
  sys.grad_H = [](double, ConstSpan q, ConstSpan p, std::span<double> out) {
    out[0] = std::sin(q[0]);  // H_q
    out[1] = 0.0;             // H_t
    out[2] = p[0];            // H_p
  };
  sys.hess_H = [](double, ConstSpan q, ConstSpan, Mat& out) {
    out = Mat(3, 3);
    out(0, 0) = std::cos(q[0]);
    out(2, 2) = 1.0;
  };
  // Only H_qqq = -sin(q) is nonzero.
  sys.third_contraction = [](ConstSpan z, ConstSpan v, std::span<double> out) {
    for (auto& x : out) x = 0.0;
    out[0] = -std::sin(z[0]) * v[0] * v[0];
  };
  return sys;
}

SystemDefinition harmonic_oscillator() {
  SystemDefinition sys;
  sys.n = 1;
  sys.name = "harmonic";
  sys.eval_H = [](double, ConstSpan q, ConstSpan p) {
    return 0.5 * (p[0] * p[0] + q[0] * q[0]);
  };
  sys.grad_H = [](double, ConstSpan q, ConstSpan p, std::span<double> out) {
    out[0] = q[0];
    out[1] = 0.0;
    out[2] = p[0];
  };
  sys.hess_H = [](double, ConstSpan, ConstSpan, Mat& out) {
    out = Mat(3, 3);
    out(0, 0) = 1.0;
    out(2, 2) = 1.0;
  };
  sys.third_contraction = [](ConstSpan, ConstSpan, std::span<double> out) {
    for (auto& x : out) x = 0.0;
  };
  return sys;
}

namespace {

constexpr double kKeplerMinRadius = 1e-12;

double kepler_radius(ConstSpan q) {
  const double r2 = q[0] * q[0] + q[1] * q[1];
  const double r = std::sqrt(r2);
  if (r < kKeplerMinRadius) {
    throw std::domain_error("kepler_2d: |x| < 1e-12 is out of domain");
  }
  return r;
}

}  // namespace

SystemDefinition kepler_2d() {
  SystemDefinition sys;
  sys.n = 2;
  sys.name = "kepler";
  sys.eval_H = [](double, ConstSpan q, ConstSpan p) {
    const double r = kepler_radius(q);
    return 0.5 * (p[0] * p[0] + p[1] * p[1]) - 1.0 / r;
  };
  sys.grad_H = [](double, ConstSpan q, ConstSpan p, std::span<double> out) {
    const double r = kepler_radius(q);
    const double r3 = r * r * r;
    out[0] = q[0] / r3;  // H_q = x / |x|^3
    out[1] = q[1] / r3;
    out[2] = 0.0;  // H_t
    out[3] = p[0];
    out[4] = p[1];
  };
  sys.hess_H = [](double, ConstSpan q, ConstSpan, Mat& out) {
    const double r = kepler_radius(q);
    const double r3 = r * r * r;
    const double r5 = r3 * r * r;
    out = Mat(5, 5);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        out(i, j) = (i == j ? 1.0 / r3 : 0.0) - 3.0 * (q[i] * q[j]) / r5;
      }
    }
    out(3, 3) = 1.0;
    out(4, 4) = 1.0;
  };
  // d^3(-1/r)/dx^3 contracted twice with the q-part of v:
  //   w_i = -3 (x_i |v|^2 + 2 v_i (x.v)) / r^5 + 15 x_i (x.v)^2 / r^7.
  sys.third_contraction = [](ConstSpan z, ConstSpan v, std::span<double> out) {
    const double x0 = z[0], x1 = z[1];
    const double r = kepler_radius(ConstSpan(z.data(), 2));
    const double r2 = r * r;
    const double r5 = r2 * r2 * r;
    const double r7 = r5 * r2;
    const double v0 = v[0], v1 = v[1];
    const double vv = v0 * v0 + v1 * v1;
    const double xv = x0 * v0 + x1 * v1;
    for (auto& x : out) x = 0.0;
    out[0] = -3.0 * (x0 * vv + 2.0 * v0 * xv) / r5 + 15.0 * x0 * xv * xv / r7;
    out[1] = -3.0 * (x1 * vv + 2.0 * v1 * xv) / r5 + 15.0 * x1 * xv * xv / r7;
  };
  return sys;
}

}  // namespace sem
