#include "tailbalance/kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace tailbalance::kernels {

namespace serial {

void affine_forward(const Tensor2& x, const Tensor2& w, std::span<const double> b,
                    Tensor2& out) {
  const std::size_t n = x.rows(), d = x.cols(), m = w.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += x(i, k) * w(j, k);
      out(i, j) = s + b[j];
    }
  }
}

void affine_backward_input(const Tensor2& g, const Tensor2& w, Tensor2& dx) {
  const std::size_t n = g.rows(), m = g.cols(), d = w.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += g(i, j) * w(j, k);
      dx(i, k) = s;
    }
  }
}

void affine_backward_params(const Tensor2& g, const Tensor2& x, Tensor2& dw,
                            std::span<double> db) {
  const std::size_t n = g.rows(), m = g.cols(), d = x.cols();
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < d; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += g(i, j) * x(i, k);
      dw(j, k) = s;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += g(i, j);
    db[j] = s;
  }
}

void relu_forward(const Tensor2& x, Tensor2& out) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.values()[i];
    out.values()[i] = v > 0.0 ? v : 0.0;
  }
}

void relu_backward(const Tensor2& g, const Tensor2& x, Tensor2& dx) {
  for (std::size_t i = 0; i < x.size(); ++i)
    dx.values()[i] = x.values()[i] > 0.0 ? g.values()[i] : 0.0;
}

}  // namespace serial

namespace parallel {

namespace {
bool worth_threads(std::size_t work) { return work >= kParallelMinWork; }
}  // namespace

void affine_forward(const Tensor2& x, const Tensor2& w, std::span<const double> b,
                    Tensor2& out) {
  const auto n = static_cast<std::int64_t>(x.rows());
  const std::size_t d = x.cols(), m = w.rows();
  const double* xp = x.values().data();
  const double* wp = w.values().data();
  double* op = out.values().data();
#pragma omp parallel for schedule(static) if (worth_threads(x.rows() * m * d))
  for (std::int64_t i = 0; i < n; ++i) {
    const double* xi = xp + static_cast<std::size_t>(i) * d;
    double* oi = op + static_cast<std::size_t>(i) * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* wj = wp + j * d;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += xi[k] * wj[k];
      oi[j] = s + b[j];
    }
  }
}

void affine_backward_input(const Tensor2& g, const Tensor2& w, Tensor2& dx) {
  const auto n = static_cast<std::int64_t>(g.rows());
  const std::size_t m = g.cols(), d = w.cols();
  const double* gp = g.values().data();
  const double* wp = w.values().data();
  double* dp = dx.values().data();
#pragma omp parallel for schedule(static) if (worth_threads(g.rows() * m * d))
  for (std::int64_t i = 0; i < n; ++i) {
    const double* gi = gp + static_cast<std::size_t>(i) * m;
    double* di = dp + static_cast<std::size_t>(i) * d;
    std::fill_n(di, d, 0.0);
    // Row-streaming form; each di[k] still sums over j in ascending order.
    for (std::size_t j = 0; j < m; ++j) {
      const double gij = gi[j];
      const double* wj = wp + j * d;
      for (std::size_t k = 0; k < d; ++k) di[k] += gij * wj[k];
    }
  }
}

void affine_backward_params(const Tensor2& g, const Tensor2& x, Tensor2& dw,
                            std::span<double> db) {
  const std::size_t n = g.rows(), d = x.cols();
  const auto m = static_cast<std::int64_t>(g.cols());
  const double* gp = g.values().data();
  const double* xp = x.values().data();
  double* dwp = dw.values().data();
#pragma omp parallel for schedule(static) if (worth_threads(n * g.cols() * d))
  for (std::int64_t j = 0; j < m; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    double* dwj = dwp + ju * d;
    std::fill_n(dwj, d, 0.0);
    double bias = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double gij = gp[i * g.cols() + ju];
      const double* xi = xp + i * d;
      for (std::size_t k = 0; k < d; ++k) dwj[k] += gij * xi[k];
      bias += gij;
    }
    db[ju] = bias;
  }
}

void relu_forward(const Tensor2& x, Tensor2& out) {
  const auto n = static_cast<std::int64_t>(x.size());
  const double* xp = x.values().data();
  double* op = out.values().data();
#pragma omp parallel for schedule(static) if (worth_threads(x.size()))
  for (std::int64_t i = 0; i < n; ++i) op[i] = xp[i] > 0.0 ? xp[i] : 0.0;
}

void relu_backward(const Tensor2& g, const Tensor2& x, Tensor2& dx) {
  const auto n = static_cast<std::int64_t>(x.size());
  const double* gp = g.values().data();
  const double* xp = x.values().data();
  double* dp = dx.values().data();
#pragma omp parallel for schedule(static) if (worth_threads(x.size()))
  for (std::int64_t i = 0; i < n; ++i) dp[i] = xp[i] > 0.0 ? gp[i] : 0.0;
}

}  // namespace parallel

}  // namespace tailbalance::kernels
