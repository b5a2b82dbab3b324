#include "detail/stiff_ode.hpp"

// uBLAS run-time consistency checks dominate the cost of a 12x12 solve.
#ifndef BOOST_UBLAS_NDEBUG
#define BOOST_UBLAS_NDEBUG
#endif

#include <algorithm>

#include <boost/numeric/odeint.hpp>

namespace pegamm::detail {

StiffStatus integrate_stiff(const StiffSystem& sys, StiffState& x, double t0, double t1, double& dt,
                     double abs_tol, double rel_tol) {
  namespace odeint = boost::numeric::odeint;
  namespace ublas = boost::numeric::ublas;
  using Vector = ublas::vector<double>;
  using Matrix = ublas::matrix<double>;

  const auto rhs = [&](const Vector& v, Vector& dv, double /*t*/) {
    StiffState in{};
    StiffState out{};
    std::copy(v.begin(), v.end(), in.begin());
    sys.rhs(in, out);
    std::copy(out.begin(), out.end(), dv.begin());
  };
  const auto jacobian = [&](const Vector& v, Matrix& jac, double /*t*/, Vector& dfdt) {
    StiffState in{};
    StiffJacobian out{};
    std::copy(v.begin(), v.end(), in.begin());
    sys.jacobian(in, out);
    for (std::size_t r = 0; r < kStiffDim; ++r) {
      for (std::size_t c = 0; c < kStiffDim; ++c) jac(r, c) = out[r][c];
      dfdt(r) = 0.0;
    }
  };

  odeint::rosenbrock4_controller<odeint::rosenbrock4<double>> stepper(abs_tol, rel_tol);
  const auto system = std::make_pair(rhs, jacobian);
  Vector v(kStiffDim);
  std::copy(x.begin(), x.end(), v.begin());

  double t = t0;
  int rejected = 0;
  while (t < t1) {
    double step = std::min(dt, t1 - t);
    const bool last = step >= t1 - t;
    if (stepper.try_step(system, v, t, step) == odeint::success) {
      rejected = 0;
      // try_step proposes the next size; a truncated final step must not shrink it.
      if (!last || step > dt) dt = step;
      if (last) t = t1;
      std::copy(v.begin(), v.end(), x.begin());
      if (sys.keep_going && !sys.keep_going(x, t)) return StiffStatus::stopped;
    } else {
      dt = step;
      if (++rejected > 500 || !(dt > 0.0)) return StiffStatus::step_collapse;
    }
  }
  std::copy(v.begin(), v.end(), x.begin());
  return StiffStatus::done;
}

}  // namespace pegamm::detail
