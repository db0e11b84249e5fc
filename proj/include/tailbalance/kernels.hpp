#pragma once

#include <cstddef>
#include <span>

#include "tailbalance/tensor.hpp"

// Dense kernels behind the autodiff ops.
//
// `serial` is the plain reference implementation. `parallel` splits the
// outermost output loop across OpenMP threads; every output element is still
// accumulated by one thread in the same index order as the reference, so the
// two agree bit for bit (tests/test_kernels.cpp holds them to that).
//
// Output tensors must already have the right shape.
namespace tailbalance::kernels {

/// Below this many multiply-adds the parallel kernels run on one thread.
inline constexpr std::size_t kParallelMinWork = std::size_t{1} << 15;

namespace serial {

// out[i,j] = sum_d x[i,d] * w[j,d] + b[j]
void affine_forward(const Tensor2& x, const Tensor2& w, std::span<const double> b,
                    Tensor2& out);
// dx[i,d] = sum_j g[i,j] * w[j,d]
void affine_backward_input(const Tensor2& g, const Tensor2& w, Tensor2& dx);
// dw[j,d] = sum_i g[i,j] * x[i,d];  db[j] = sum_i g[i,j]
void affine_backward_params(const Tensor2& g, const Tensor2& x, Tensor2& dw,
                            std::span<double> db);
void relu_forward(const Tensor2& x, Tensor2& out);
// dx = g where x > 0, else 0 (subgradient 0 at the kink)
void relu_backward(const Tensor2& g, const Tensor2& x, Tensor2& dx);

}  // namespace serial

namespace parallel {

void affine_forward(const Tensor2& x, const Tensor2& w, std::span<const double> b,
                    Tensor2& out);
void affine_backward_input(const Tensor2& g, const Tensor2& w, Tensor2& dx);
void affine_backward_params(const Tensor2& g, const Tensor2& x, Tensor2& dw,
                            std::span<double> db);
void relu_forward(const Tensor2& x, Tensor2& out);
void relu_backward(const Tensor2& g, const Tensor2& x, Tensor2& dx);

}  // namespace parallel

}  // namespace tailbalance::kernels
