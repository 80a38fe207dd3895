#include "qsub/denoiser.h"

#include <cmath>

#include "qsub/error.h"
#include "qsub/rng.h"

namespace qsub {

DenoiserParams::DenoiserParams(DenoiserShape shape)
    : shape_(shape)
{
  require(shape.channels >= 1 && shape.width >= 1 && shape.blocks >= 1, "DenoiserParams: invalid shape");
  Eigen::Index at = 0;
  for (int l = 0; l < layers(); ++l) {
    Offsets o{};
    o.weight = at;
    at += static_cast<Eigen::Index>(in_channels(l)) * 9 * out_channels(l);
    o.bias = at;
    at += out_channels(l);
    if (l < shape_.blocks) {
      o.scale = at;
      at += out_channels(l);
      o.shift = at;
      at += out_channels(l);
    }
    offsets_.push_back(o);
  }
  rho_offset_ = at;
  theta = Eigen::VectorXd::Zero(at + 1);
}

int DenoiserParams::in_channels(int layer) const { return layer == 0 ? shape_.channels : shape_.width; }

int DenoiserParams::out_channels(int layer) const
{
  return layer == shape_.blocks ? shape_.channels : shape_.width;
}

Eigen::Map<Eigen::MatrixXd> DenoiserParams::weight(int l)
{
  return {theta.data() + offsets_[l].weight, in_channels(l) * 9, out_channels(l)};
}
Eigen::Map<Eigen::MatrixXd const> DenoiserParams::weight(int l) const
{
  return {theta.data() + offsets_[l].weight, in_channels(l) * 9, out_channels(l)};
}
Eigen::Map<Eigen::VectorXd> DenoiserParams::bias(int l) { return {theta.data() + offsets_[l].bias, out_channels(l)}; }
Eigen::Map<Eigen::VectorXd const> DenoiserParams::bias(int l) const
{
  return {theta.data() + offsets_[l].bias, out_channels(l)};
}
Eigen::Map<Eigen::VectorXd> DenoiserParams::scale(int b) { return {theta.data() + offsets_[b].scale, shape_.width}; }
Eigen::Map<Eigen::VectorXd const> DenoiserParams::scale(int b) const
{
  return {theta.data() + offsets_[b].scale, shape_.width};
}
Eigen::Map<Eigen::VectorXd> DenoiserParams::shift(int b) { return {theta.data() + offsets_[b].shift, shape_.width}; }
Eigen::Map<Eigen::VectorXd const> DenoiserParams::shift(int b) const
{
  return {theta.data() + offsets_[b].shift, shape_.width};
}

double DenoiserParams::lambda() const
{
  double const r = rho();
  return r > 30.0 ? r : std::log1p(std::exp(r));
}

double DenoiserParams::lambda_slope() const { return 1.0 / (1.0 + std::exp(-rho())); }

double DenoiserParams::rho_for(double lambda)
{
  require(lambda > 0.0, "rho_for: lambda must be positive");
  return lambda > 30.0 ? lambda : std::log(std::expm1(lambda));
}

DenoiserParams DenoiserParams::initial(DenoiserShape shape, std::uint64_t seed, double lambda0)
{
  DenoiserParams p(shape);
  auto rng = make_rng(seed, 0xde40);
  for (int l = 0; l < shape.blocks; ++l) {
    std::normal_distribution<double> g(0.0, std::sqrt(2.0 / (9.0 * p.in_channels(l))));
    auto w = p.weight(l);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = g(rng);
    }
    p.scale(l).setOnes();
  }
  p.rho() = rho_for(lambda0);
  return p;
}

namespace {

// N x (C * 9) patch matrix.
Eigen::MatrixXd im2col(Eigen::MatrixXd const &in, Dims d)
{
  int const C = static_cast<int>(in.cols());
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(d.size(), C * 9);
  for (int c = 0; c < C; ++c) {
    double const *src = in.col(c).data();
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dz = -1; dz <= 1; ++dz) {
        double *dst = cols.col(c * 9 + (dy + 1) * 3 + (dz + 1)).data();
        int const z0 = std::max(0, -dz);
        int const z1 = std::min(d.nz, d.nz - dz);
        for (int iy = std::max(0, -dy); iy < std::min(d.ny, d.ny - dy); ++iy) {
          double const *s = src + (iy + dy) * d.nz + dz;
          double *o = dst + iy * d.nz;
          for (int iz = z0; iz < z1; ++iz) {
            o[iz] = s[iz];
          }
        }
      }
    }
  }
  return cols;
}

Eigen::MatrixXd col2im(Eigen::MatrixXd const &cols, Dims d, int C)
{
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d.size(), C);
  for (int c = 0; c < C; ++c) {
    double *dst = out.col(c).data();
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dz = -1; dz <= 1; ++dz) {
        double const *src = cols.col(c * 9 + (dy + 1) * 3 + (dz + 1)).data();
        int const z0 = std::max(0, -dz);
        int const z1 = std::min(d.nz, d.nz - dz);
        for (int iy = std::max(0, -dy); iy < std::min(d.ny, d.ny - dy); ++iy) {
          double *o = dst + (iy + dy) * d.nz + dz;
          double const *s = src + iy * d.nz;
          for (int iz = z0; iz < z1; ++iz) {
            o[iz] += s[iz];
          }
        }
      }
    }
  }
  return out;
}

} // namespace

Eigen::MatrixXd conv3x3(
    Eigen::MatrixXd const &in, Dims d, Eigen::Ref<Eigen::MatrixXd const> w, Eigen::Ref<Eigen::VectorXd const> b)
{
  require(in.rows() == d.size() && w.rows() == in.cols() * 9, "conv3x3: shape mismatch");
  Eigen::MatrixXd out = im2col(in, d) * w;
  out.rowwise() += b.transpose();
  return out;
}

Eigen::MatrixXd conv3x3_reference(
    Eigen::MatrixXd const &in, Dims d, Eigen::Ref<Eigen::MatrixXd const> w, Eigen::Ref<Eigen::VectorXd const> b)
{
  require(in.rows() == d.size() && w.rows() == in.cols() * 9, "conv3x3: shape mismatch");
  int const cin = static_cast<int>(in.cols());
  int const cout = static_cast<int>(w.cols());
  Eigen::MatrixXd out(d.size(), cout);
  for (int o = 0; o < cout; ++o) {
    for (int iy = 0; iy < d.ny; ++iy) {
      for (int iz = 0; iz < d.nz; ++iz) {
        double acc = b[o];
        for (int c = 0; c < cin; ++c) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dz = -1; dz <= 1; ++dz) {
              int const y = iy + dy;
              int const z = iz + dz;
              if (y < 0 || y >= d.ny || z < 0 || z >= d.nz) {
                continue;
              }
              acc += w(c * 9 + (dy + 1) * 3 + (dz + 1), o) * in(y * d.nz + z, c);
            }
          }
        }
        out(iy * d.nz + iz, o) = acc;
      }
    }
  }
  return out;
}

Eigen::MatrixXd denoise_real(DenoiserParams const &p, Eigen::MatrixXd const &in, Dims d, DenoiserCache *cache)
{
  require(in.cols() == p.shape().channels, "denoise: channel count mismatch");
  require(in.rows() == d.size(), "denoise: voxel count mismatch");
  if (cache) {
    cache->layers.assign(p.layers(), {});
  }
  double const n = d.size();
  Eigen::MatrixXd a = in;
  for (int l = 0; l < p.shape().blocks; ++l) {
    Eigen::MatrixXd h = conv3x3(a, d, p.weight(l), p.bias(l));
    Eigen::RowVectorXd const mean = h.colwise().mean();
    h.rowwise() -= mean;
    Eigen::VectorXd const var = h.colwise().squaredNorm().transpose() / n;
    Eigen::VectorXd const inv_std = (var.array() + kNormEps).rsqrt().matrix();
    Eigen::MatrixXd xhat = h * inv_std.asDiagonal();
    Eigen::MatrixXd normed = xhat * p.scale(l).asDiagonal();
    normed.rowwise() += p.shift(l).transpose();
    Eigen::MatrixXd next = normed.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
    if (cache) {
      auto &c = cache->layers[l];
      c.input = std::move(a);
      c.xhat = std::move(xhat);
      c.inv_std = inv_std;
      c.normed = std::move(normed);
    }
    a = std::move(next);
  }
  int const last = p.shape().blocks;
  Eigen::MatrixXd out = conv3x3(a, d, p.weight(last), p.bias(last));
  if (cache) {
    cache->layers[last].input = std::move(a);
  }
  out += in;
  return out;
}

Eigen::MatrixXd denoise_real_backward(
    DenoiserParams const &p, DenoiserCache const &cache, Eigen::MatrixXd const &grad_out, Dims d,
    Eigen::VectorXd &grad)
{
  require(grad.size() == p.theta.size(), "denoise_backward: gradient size mismatch");
  auto gw = [&](int l) {
    return Eigen::Map<Eigen::MatrixXd>(grad.data() + (p.weight(l).data() - p.theta.data()),
                                       p.in_channels(l) * 9, p.out_channels(l));
  };
  auto gvec = [&](double const *base, int len) {
    return Eigen::Map<Eigen::VectorXd>(grad.data() + (base - p.theta.data()), len);
  };
  double const n = d.size();

  int const last = p.shape().blocks;
  auto const &cl = cache.layers[last];
  {
    Eigen::MatrixXd const cols = im2col(cl.input, d);
    gw(last) += cols.transpose() * grad_out;
    gvec(p.bias(last).data(), p.out_channels(last)) += grad_out.colwise().sum().transpose();
  }
  Eigen::MatrixXd g = col2im(grad_out * p.weight(last).transpose(), d, p.in_channels(last));

  for (int l = last - 1; l >= 0; --l) {
    auto const &c = cache.layers[l];
    // leaky ReLU
    Eigen::MatrixXd gn = g.cwiseProduct(c.normed.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; }));
    // scale / shift
    gvec(p.scale(l).data(), p.shape().width) += gn.cwiseProduct(c.xhat).colwise().sum().transpose();
    gvec(p.shift(l).data(), p.shape().width) += gn.colwise().sum().transpose();
    Eigen::MatrixXd gx = gn * p.scale(l).asDiagonal();
    // normalization over all voxels of the channel
    Eigen::RowVectorXd const sum_g = gx.colwise().sum();
    Eigen::RowVectorXd const sum_gx = gx.cwiseProduct(c.xhat).colwise().sum();
    Eigen::MatrixXd gh = gx;
    gh.rowwise() -= sum_g / n;
    gh -= c.xhat * (sum_gx / n).asDiagonal();
    gh = gh * c.inv_std.asDiagonal();
    // convolution
    Eigen::MatrixXd const cols = im2col(c.input, d);
    gw(l) += cols.transpose() * gh;
    gvec(p.bias(l).data(), p.out_channels(l)) += gh.colwise().sum().transpose();
    g = col2im(gh * p.weight(l).transpose(), d, p.in_channels(l));
  }
  return g + grad_out;
}

Eigen::MatrixXd to_real_channels(CoefficientImage const &x)
{
  Eigen::MatrixXd r(x.data.rows(), 2 * x.channels());
  for (int k = 0; k < x.channels(); ++k) {
    r.col(2 * k) = x.data.col(k).real();
    r.col(2 * k + 1) = x.data.col(k).imag();
  }
  return r;
}

CoefficientImage from_real_channels(Eigen::MatrixXd const &r, Dims dims)
{
  CoefficientImage x(dims, static_cast<int>(r.cols() / 2));
  for (int k = 0; k < x.channels(); ++k) {
    x.data.col(k).real() = r.col(2 * k);
    x.data.col(k).imag() = r.col(2 * k + 1);
  }
  return x;
}

Eigen::MatrixXd to_real_grad(CoefficientImage const &g) { return to_real_channels(g); }
CoefficientImage from_real_grad(Eigen::MatrixXd const &g, Dims dims) { return from_real_channels(g, dims); }

CoefficientImage denoise(CoefficientImage const &x, DenoiserParams const &p)
{
  return from_real_channels(denoise_real(p, to_real_channels(x), x.dims), x.dims);
}

} // namespace qsub
