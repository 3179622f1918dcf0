#pragma once

// Dense kernels behind the policy network. All tensors are contiguous,
// channel-major (c, y, x). Convolutions are 3x3 "same" cross-correlations
// with zero padding.
//
// `serial` is the reference implementation. `omp` splits work over channels
// so every output element is produced by exactly one thread with the same
// operation order as the reference; results are bitwise identical.

#include <cstdint>
#include <span>

namespace driftplan::kernels {

enum class Backend { serial, omp };

// Shape of a (channels, height, width) tensor.
struct Dims {
  int c = 0, h = 0, w = 0;
  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
};

bool omp_available();
int omp_threads();

namespace serial {

// out[co] += sum_ci weight[co][ci] (*) in[ci]; weight is (c_out, c_in, 3, 3).
void conv3x3_forward(std::span<const double> in, Dims in_dims, std::span<const double> weight,
                     int c_out, std::span<double> out);
// grad_in[ci] += sum_co weight[co][ci] (*)^T grad_out[co]
void conv3x3_backward_input(std::span<const double> grad_out, int c_out, std::span<const double> weight,
                            Dims in_dims, std::span<double> grad_in);
// grad_w[co][ci] += correlation of grad_out[co] with in[ci]
void conv3x3_backward_weight(std::span<const double> grad_out, int c_out, std::span<const double> in,
                             Dims in_dims, std::span<double> grad_weight);

// 2x2 stride-2 max pool (h, w even). argmax holds flat input indices.
void maxpool2x2_forward(std::span<const double> in, Dims in_dims, std::span<double> out,
                        std::span<std::int32_t> argmax);
void maxpool2x2_backward(std::span<const double> grad_out, std::span<const std::int32_t> argmax,
                         std::span<double> grad_in);

}  // namespace serial

namespace omp {

void conv3x3_forward(std::span<const double> in, Dims in_dims, std::span<const double> weight,
                     int c_out, std::span<double> out);
void conv3x3_backward_input(std::span<const double> grad_out, int c_out, std::span<const double> weight,
                            Dims in_dims, std::span<double> grad_in);
void conv3x3_backward_weight(std::span<const double> grad_out, int c_out, std::span<const double> in,
                             Dims in_dims, std::span<double> grad_weight);

}  // namespace omp

// Backend dispatch.
void conv3x3_forward(Backend b, std::span<const double> in, Dims in_dims, std::span<const double> weight,
                     int c_out, std::span<double> out);
void conv3x3_backward_input(Backend b, std::span<const double> grad_out, int c_out,
                            std::span<const double> weight, Dims in_dims, std::span<double> grad_in);
void conv3x3_backward_weight(Backend b, std::span<const double> grad_out, int c_out,
                             std::span<const double> in, Dims in_dims, std::span<double> grad_weight);

// y += W x, W is (rows, cols) row-major.
void matvec_add(std::span<const double> W, int rows, int cols, std::span<const double> x, std::span<double> y);
// x_grad += W^T y_grad
void matvec_t_add(std::span<const double> W, int rows, int cols, std::span<const double> y_grad,
                  std::span<double> x_grad);
// W_grad += y_grad x^T
void outer_add(std::span<const double> y_grad, std::span<const double> x, std::span<double> W_grad);

}  // namespace driftplan::kernels
