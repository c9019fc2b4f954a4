#include "recurnet/conv.hpp"

#include <Eigen/Core>

namespace recurnet {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMatrix = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMapMatrix = Eigen::Map<const RowMatrix<T>>;

// Rows are (cin, ky, kx), columns are output pixels.
template <typename T>
void im2col(const Tensor<T>& input, const ConvGeometry& g, std::size_t ho, std::size_t wo,
            AlignedVector<T>& col) {
  const std::size_t cin = input.channels(), h = input.height(), w = input.width();
  const std::size_t k = g.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(g.padding());
  col.assign(cin * k * k * ho * wo, T(0));
  T* out = col.data();
  for (std::size_t c = 0; c < cin; ++c) {
    const T* plane = input.data() + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = std::ptrdiff_t(oy * g.stride + ky * g.dilation) - pad;
          T* row = out + oy * wo;
          if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
          const T* src = plane + iy * std::ptrdiff_t(w);
          const std::ptrdiff_t x0 = std::ptrdiff_t(kx * g.dilation) - pad;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = std::ptrdiff_t(ox * g.stride) + x0;
            if (ix >= 0 && ix < std::ptrdiff_t(w)) row[ox] = src[ix];
          }
        }
        out += ho * wo;
      }
    }
  }
}

template <typename T>
void col2im(const AlignedVector<T>& col, const ConvGeometry& g, std::size_t ho, std::size_t wo,
            Tensor<T>& grad_input) {
  const std::size_t cin = grad_input.channels(), h = grad_input.height(), w = grad_input.width();
  const std::size_t k = g.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(g.padding());
  const T* in = col.data();
  for (std::size_t c = 0; c < cin; ++c) {
    T* plane = grad_input.data() + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = std::ptrdiff_t(oy * g.stride + ky * g.dilation) - pad;
          if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
          const T* row = in + oy * wo;
          T* dst = plane + iy * std::ptrdiff_t(w);
          const std::ptrdiff_t x0 = std::ptrdiff_t(kx * g.dilation) - pad;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = std::ptrdiff_t(ox * g.stride) + x0;
            if (ix >= 0 && ix < std::ptrdiff_t(w)) dst[ix] += row[ox];
          }
        }
        in += ho * wo;
      }
    }
  }
}

template <typename T>
void check_shapes(const Tensor<T>& input, const Tensor<T>& kernel, const ConvGeometry& g) {
  require(input.rank() == 3, "conv2d input must be rank 3, got " + shape_string(input.shape()));
  require(kernel.rank() == 4 && kernel.dim(2) == g.kernel && kernel.dim(3) == g.kernel,
          "conv2d kernel shape " + shape_string(kernel.shape()) + " does not match geometry");
  require(kernel.dim(1) == input.channels(),
          "conv2d channel mismatch: kernel expects " + std::to_string(kernel.dim(1)) +
              " input channels, got " + std::to_string(input.channels()));
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                         const ConvGeometry& g) {
  check_shapes(input, kernel, g);
  const std::size_t cout = kernel.dim(0);
  const std::size_t ho = g.output_size(input.height()), wo = g.output_size(input.width());
  const std::size_t kk = input.channels() * g.kernel * g.kernel;
  Tensor<T> out(chw(cout, ho, wo));
  MapMatrix<T> y(out.data(), Eigen::Index(cout), Eigen::Index(ho * wo));
  ConstMapMatrix<T> wmat(kernel.data(), Eigen::Index(cout), Eigen::Index(kk));
  if (g.kernel == 1 && g.stride == 1) {
    ConstMapMatrix<T> x(input.data(), Eigen::Index(kk), Eigen::Index(ho * wo));
    y.noalias() = wmat * x;
  } else {
    AlignedVector<T> col;
    im2col(input, g, ho, wo, col);
    ConstMapMatrix<T> x(col.data(), Eigen::Index(kk), Eigen::Index(ho * wo));
    y.noalias() = wmat * x;
  }
  if (!bias.empty()) {
    for (std::size_t c = 0; c < cout; ++c) y.row(Eigen::Index(c)).array() += bias[c];
  }
  return out;
}

template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_output,
                     const ConvGeometry& g, Tensor<T>* grad_input, Tensor<T>* grad_kernel,
                     Tensor<T>* grad_bias) {
  const std::size_t cout = kernel.dim(0);
  const std::size_t ho = grad_output.height(), wo = grad_output.width();
  const std::size_t kk = input.channels() * g.kernel * g.kernel;
  ConstMapMatrix<T> dy(grad_output.data(), Eigen::Index(cout), Eigen::Index(ho * wo));
  ConstMapMatrix<T> wmat(kernel.data(), Eigen::Index(cout), Eigen::Index(kk));
  const bool pointwise = g.kernel == 1 && g.stride == 1;

  if (grad_bias) {
    for (std::size_t c = 0; c < cout; ++c) (*grad_bias)[c] += dy.row(Eigen::Index(c)).sum();
  }
  if (grad_kernel) {
    MapMatrix<T> dw(grad_kernel->data(), Eigen::Index(cout), Eigen::Index(kk));
    if (pointwise) {
      ConstMapMatrix<T> x(input.data(), Eigen::Index(kk), Eigen::Index(ho * wo));
      dw.noalias() += dy * x.transpose();
    } else {
      AlignedVector<T> col;
      im2col(input, g, ho, wo, col);
      ConstMapMatrix<T> x(col.data(), Eigen::Index(kk), Eigen::Index(ho * wo));
      dw.noalias() += dy * x.transpose();
    }
  }
  if (grad_input) {
    if (pointwise) {
      MapMatrix<T> dx(grad_input->data(), Eigen::Index(kk), Eigen::Index(ho * wo));
      dx.noalias() += wmat.transpose() * dy;
    } else {
      AlignedVector<T> dcol(kk * ho * wo);
      MapMatrix<T> dc(dcol.data(), Eigen::Index(kk), Eigen::Index(ho * wo));
      dc.noalias() = wmat.transpose() * dy;
      col2im(dcol, g, ho, wo, *grad_input);
    }
  }
}

template Tensor<float> conv2d_forward(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                      const ConvGeometry&);
template Tensor<double> conv2d_forward(const Tensor<double>&, const Tensor<double>&,
                                       const Tensor<double>&, const ConvGeometry&);
template void conv2d_backward(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                              const ConvGeometry&, Tensor<float>*, Tensor<float>*, Tensor<float>*);
template void conv2d_backward(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                              const ConvGeometry&, Tensor<double>*, Tensor<double>*,
                              Tensor<double>*);

}  // namespace recurnet
