#include "driftplan/kernels.hpp"

#include <algorithm>
#include <cassert>

#ifdef DRIFTPLAN_HAVE_OPENMP
#include <omp.h>
#endif

namespace driftplan::kernels {

bool omp_available() {
#ifdef DRIFTPLAN_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

int omp_threads() {
#ifdef DRIFTPLAN_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

// out += w (*) in for a single channel pair.
inline void plane_correlate(const double* in, const double* w9, int H, int W, double* out) {
  for (int ky = 0; ky < 3; ++ky) {
    const int dy = ky - 1;
    const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
    for (int kx = 0; kx < 3; ++kx) {
      const int dx = kx - 1;
      const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
      const double w = w9[ky * 3 + kx];
      if (w == 0.0) continue;
      for (int y = y0; y < y1; ++y) {
        const double* src = in + static_cast<std::ptrdiff_t>(y + dy) * W + dx;
        double* dst = out + static_cast<std::ptrdiff_t>(y) * W;
        for (int x = x0; x < x1; ++x) dst[x] += w * src[x];
      }
    }
  }
}

// grad_in += w (*)^T grad_out for a single channel pair.
inline void plane_correlate_t(const double* gout, const double* w9, int H, int W, double* gin) {
  for (int ky = 0; ky < 3; ++ky) {
    const int dy = ky - 1;
    const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
    for (int kx = 0; kx < 3; ++kx) {
      const int dx = kx - 1;
      const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
      const double w = w9[ky * 3 + kx];
      if (w == 0.0) continue;
      for (int y = y0; y < y1; ++y) {
        double* dst = gin + static_cast<std::ptrdiff_t>(y + dy) * W + dx;
        const double* src = gout + static_cast<std::ptrdiff_t>(y) * W;
        for (int x = x0; x < x1; ++x) dst[x] += w * src[x];
      }
    }
  }
}

inline void plane_weight_grad(const double* gout, const double* in, int H, int W, double* gw9) {
  for (int ky = 0; ky < 3; ++ky) {
    const int dy = ky - 1;
    const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
    for (int kx = 0; kx < 3; ++kx) {
      const int dx = kx - 1;
      const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
      double acc = 0.0;
      for (int y = y0; y < y1; ++y) {
        const double* src = in + static_cast<std::ptrdiff_t>(y + dy) * W + dx;
        const double* g = gout + static_cast<std::ptrdiff_t>(y) * W;
        for (int x = x0; x < x1; ++x) acc += g[x] * src[x];
      }
      gw9[ky * 3 + kx] += acc;
    }
  }
}

inline void forward_channel(int co, const double* in, Dims d, const double* weight, double* out) {
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  for (int ci = 0; ci < d.c; ++ci)
    plane_correlate(in + ci * plane, weight + (static_cast<std::size_t>(co) * d.c + ci) * 9, d.h, d.w,
                    out + co * plane);
}

inline void backward_input_channel(int ci, const double* gout, int c_out, const double* weight, Dims d,
                                   double* gin) {
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  for (int co = 0; co < c_out; ++co)
    plane_correlate_t(gout + co * plane, weight + (static_cast<std::size_t>(co) * d.c + ci) * 9, d.h, d.w,
                      gin + ci * plane);
}

inline void backward_weight_channel(int co, const double* gout, const double* in, Dims d, double* gw) {
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  for (int ci = 0; ci < d.c; ++ci)
    plane_weight_grad(gout + co * plane, in + ci * plane, d.h, d.w,
                      gw + (static_cast<std::size_t>(co) * d.c + ci) * 9);
}

}  // namespace

namespace serial {

void conv3x3_forward(std::span<const double> in, Dims d, std::span<const double> weight, int c_out,
                     std::span<double> out) {
  assert(in.size() == d.size() && weight.size() == static_cast<std::size_t>(c_out) * d.c * 9);
  assert(out.size() == static_cast<std::size_t>(c_out) * d.h * d.w);
  for (int co = 0; co < c_out; ++co) forward_channel(co, in.data(), d, weight.data(), out.data());
}

void conv3x3_backward_input(std::span<const double> grad_out, int c_out, std::span<const double> weight,
                            Dims d, std::span<double> grad_in) {
  assert(grad_in.size() == d.size());
  for (int ci = 0; ci < d.c; ++ci)
    backward_input_channel(ci, grad_out.data(), c_out, weight.data(), d, grad_in.data());
}

void conv3x3_backward_weight(std::span<const double> grad_out, int c_out, std::span<const double> in,
                             Dims d, std::span<double> grad_weight) {
  assert(grad_weight.size() == static_cast<std::size_t>(c_out) * d.c * 9);
  for (int co = 0; co < c_out; ++co) backward_weight_channel(co, grad_out.data(), in.data(), d, grad_weight.data());
}

void maxpool2x2_forward(std::span<const double> in, Dims d, std::span<double> out,
                        std::span<std::int32_t> argmax) {
  const int oh = d.h / 2, ow = d.w / 2;
  assert(out.size() == static_cast<std::size_t>(d.c) * oh * ow && argmax.size() == out.size());
  std::size_t o = 0;
  for (int c = 0; c < d.c; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * d.h * d.w;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x, ++o) {
        std::size_t best = base + static_cast<std::size_t>(2 * y) * d.w + 2 * x;
        const std::size_t cands[3] = {best + 1, best + d.w, best + d.w + 1};
        for (std::size_t i : cands)
          if (in[i] > in[best]) best = i;
        out[o] = in[best];
        argmax[o] = static_cast<std::int32_t>(best);
      }
    }
  }
}

void maxpool2x2_backward(std::span<const double> grad_out, std::span<const std::int32_t> argmax,
                         std::span<double> grad_in) {
  for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in[static_cast<std::size_t>(argmax[o])] += grad_out[o];
}

}  // namespace serial

namespace omp {

void conv3x3_forward(std::span<const double> in, Dims d, std::span<const double> weight, int c_out,
                     std::span<double> out) {
#pragma omp parallel for schedule(static)
  for (int co = 0; co < c_out; ++co) forward_channel(co, in.data(), d, weight.data(), out.data());
}

void conv3x3_backward_input(std::span<const double> grad_out, int c_out, std::span<const double> weight,
                            Dims d, std::span<double> grad_in) {
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < d.c; ++ci)
    backward_input_channel(ci, grad_out.data(), c_out, weight.data(), d, grad_in.data());
}

void conv3x3_backward_weight(std::span<const double> grad_out, int c_out, std::span<const double> in,
                             Dims d, std::span<double> grad_weight) {
#pragma omp parallel for schedule(static)
  for (int co = 0; co < c_out; ++co) backward_weight_channel(co, grad_out.data(), in.data(), d, grad_weight.data());
}

}  // namespace omp

void conv3x3_forward(Backend b, std::span<const double> in, Dims d, std::span<const double> weight,
                     int c_out, std::span<double> out) {
  if (b == Backend::omp)
    omp::conv3x3_forward(in, d, weight, c_out, out);
  else
    serial::conv3x3_forward(in, d, weight, c_out, out);
}

void conv3x3_backward_input(Backend b, std::span<const double> grad_out, int c_out,
                            std::span<const double> weight, Dims d, std::span<double> grad_in) {
  if (b == Backend::omp)
    omp::conv3x3_backward_input(grad_out, c_out, weight, d, grad_in);
  else
    serial::conv3x3_backward_input(grad_out, c_out, weight, d, grad_in);
}

void conv3x3_backward_weight(Backend b, std::span<const double> grad_out, int c_out,
                             std::span<const double> in, Dims d, std::span<double> grad_weight) {
  if (b == Backend::omp)
    omp::conv3x3_backward_weight(grad_out, c_out, in, d, grad_weight);
  else
    serial::conv3x3_backward_weight(grad_out, c_out, in, d, grad_weight);
}

void matvec_add(std::span<const double> W, int rows, int cols, std::span<const double> x, std::span<double> y) {
  for (int r = 0; r < rows; ++r) {
    const double* row = W.data() + static_cast<std::size_t>(r) * cols;
    double acc = 0.0;
    for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

void matvec_t_add(std::span<const double> W, int rows, int cols, std::span<const double> y_grad,
                  std::span<double> x_grad) {
  for (int r = 0; r < rows; ++r) {
    const double g = y_grad[r];
    if (g == 0.0) continue;
    const double* row = W.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) x_grad[c] += g * row[c];
  }
}

void outer_add(std::span<const double> y_grad, std::span<const double> x, std::span<double> W_grad) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < y_grad.size(); ++r) {
    const double g = y_grad[r];
    if (g == 0.0) continue;
    double* row = W_grad.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += g * x[c];
  }
}

}  // namespace driftplan::kernels
