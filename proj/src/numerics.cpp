#include "strnet/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace strnet {

std::vector<double> fd_weights(double z, const std::vector<double>& x, int m) {
  int n = static_cast<int>(x.size()) - 1;
  std::vector<std::vector<double>> c(n + 1, std::vector<double>(m + 1, 0.0));
  double c1 = 1, c4 = x[0] - z;
  c[0][0] = 1;
  for (int i = 1; i <= n; ++i) {
    int mn = std::min(i, m);
    double c2 = 1, c5 = c4;
    c4 = x[i] - z;
    for (int j = 0; j < i; ++j) {
      double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n + 1);
  for (int i = 0; i <= n; ++i) w[i] = c[i][m];
  return w;
}

std::vector<Vec3> derivative(const std::vector<Vec3>& f, double h, int order) {
  int n = static_cast<int>(f.size());
  std::vector<Vec3> out(n, Vec3::Zero());
  if (n == 0) return out;
  int width = order + 4;  // points in a one-sided stencil of accuracy 4
  int half = 2;           // central stencil half width for orders 1 and 2
  if (order > 2) half = (order + 3) / 2 + 1;
  if (n < width + 1) width = n;
  for (int k = 0; k < n; ++k) {
    int lo, hi;
    if (k - half >= 0 && k + half < n) {
      lo = k - half;
      hi = k + half;
    } else if (k - half < 0) {
      lo = 0;
      hi = std::min(n - 1, width - 1);
    } else {
      hi = n - 1;
      lo = std::max(0, n - width);
    }
    std::vector<double> xs;
    for (int j = lo; j <= hi; ++j) xs.push_back(j - k);
    auto w = fd_weights(0.0, xs, order);
    Vec3 s = Vec3::Zero();
    for (int j = lo; j <= hi; ++j) s += w[j - lo] * f[j];
    out[k] = s / std::pow(h, order);
  }
  return out;
}

std::vector<Vec3> one_sided_derivatives(const std::vector<Vec3>& f, int k, double h, int order, bool backward,
                                        int accuracy) {
  std::vector<Vec3> out;
  for (int m = 0; m <= order; ++m) {
    if (m == 0) {
      out.push_back(f[k]);
      continue;
    }
    int np = m + accuracy;
    std::vector<double> xs;
    std::vector<int> idx;
    for (int j = 0; j < np; ++j) {
      int i = backward ? k - j : k + j;
      if (i < 0 || i >= static_cast<int>(f.size())) break;
      idx.push_back(i);
      xs.push_back(static_cast<double>(i - k));
    }
    if (static_cast<int>(idx.size()) <= m) throw Error(ErrorKind::Config, "trace segment too short for derivative estimate");
    auto w = fd_weights(0.0, xs, m);
    Vec3 s = Vec3::Zero();
    for (size_t j = 0; j < idx.size(); ++j) s += w[j] * f[idx[j]];
    out.push_back(s / std::pow(h, m));
  }
  return out;
}

HermiteBridge::HermiteBridge(const std::vector<Vec3>& left, const std::vector<Vec3>& right, double span)
    : span_(span) {
  int k = static_cast<int>(left.size()) - 1;
  int deg = 2 * k + 1;
  int n = deg + 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd B(n, 3);
  // In u = s/span the m-th derivative scales by span^m.
  for (int m = 0; m <= k; ++m) {
    // at u = 0: only coefficient m contributes m!
    double fact = 1;
    for (int j = 2; j <= m; ++j) fact *= j;
    A(m, m) = fact;
    // at u = 1: sum_p p!/(p-m)! c_p
    for (int p = m; p <= deg; ++p) {
      double f = 1;
      for (int j = p - m + 1; j <= p; ++j) f *= j;
      A(k + 1 + m, p) = f;
    }
    double sc = std::pow(span, m);
    B.row(m) = (left[m] * sc).transpose();
    B.row(k + 1 + m) = (right[m] * sc).transpose();
  }
  Eigen::MatrixXd C = A.fullPivLu().solve(B);
  c_.resize(n);
  for (int p = 0; p < n; ++p) c_[p] = C.row(p).transpose();
}

Vec3 HermiteBridge::operator()(double s, int deriv) const {
  double u = s / span_;
  int n = static_cast<int>(c_.size());
  Vec3 acc = Vec3::Zero();
  for (int p = n - 1; p >= deriv; --p) {
    double f = 1;
    for (int j = p - deriv + 1; j <= p; ++j) f *= j;
    acc = acc * u + f * c_[p];
  }
  return acc / std::pow(span_, deriv);
}

Vec3 QuinticSamples::eval(double x, int deriv) const {
  int n = static_cast<int>(f.size()) - 1;
  double u = (x - x0) / h;
  int k = static_cast<int>(std::floor(u));
  k = std::clamp(k, 0, n - 1);
  double t = u - k;
  // Basis on [0,1] for value, slope and curvature at both ends.
  double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
  double b[6];
  if (deriv == 0) {
    b[0] = 1 - 10 * t3 + 15 * t4 - 6 * t5;
    b[1] = t - 6 * t3 + 8 * t4 - 3 * t5;
    b[2] = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    b[3] = 10 * t3 - 15 * t4 + 6 * t5;
    b[4] = -4 * t3 + 7 * t4 - 3 * t5;
    b[5] = 0.5 * t3 - t4 + 0.5 * t5;
  } else if (deriv == 1) {
    b[0] = -30 * t2 + 60 * t3 - 30 * t4;
    b[1] = 1 - 18 * t2 + 32 * t3 - 15 * t4;
    b[2] = t - 4.5 * t2 + 6 * t3 - 2.5 * t4;
    b[3] = 30 * t2 - 60 * t3 + 30 * t4;
    b[4] = -12 * t2 + 28 * t3 - 15 * t4;
    b[5] = 1.5 * t2 - 4 * t3 + 2.5 * t4;
  } else {
    b[0] = -60 * t + 180 * t2 - 120 * t3;
    b[1] = -36 * t + 96 * t2 - 60 * t3;
    b[2] = 1 - 9 * t + 18 * t2 - 10 * t3;
    b[3] = 60 * t - 180 * t2 + 120 * t3;
    b[4] = -24 * t + 84 * t2 - 60 * t3;
    b[5] = 3 * t - 12 * t2 + 10 * t3;
  }
  Vec3 v = b[0] * f[k] + b[1] * h * d1[k] + b[2] * h * h * d2[k] + b[3] * f[k + 1] + b[4] * h * d1[k + 1] +
           b[5] * h * h * d2[k + 1];
  return v / std::pow(h, deriv);
}

std::vector<double> simpson_weights(int n, double h) {
  std::vector<double> w(n + 1, 0.0);
  if (n == 1) {
    w[0] = w[1] = h / 2;
    return w;
  }
  int m = n;
  if (n % 2 == 1) {
    // 3/8 rule on the last three intervals
    m = n - 3;
    w[m] += 3 * h / 8;
    w[m + 1] += 9 * h / 8;
    w[m + 2] += 9 * h / 8;
    w[m + 3] += 3 * h / 8;
  }
  for (int i = 0; i + 2 <= m; i += 2) {
    w[i] += h / 3;
    w[i + 1] += 4 * h / 3;
    w[i + 2] += h / 3;
  }
  return w;
}

double smooth_step(double s) {
  if (s <= 0) return 0;
  if (s >= 1) return 1;
  auto psi = [](double x) { return x > 0 ? std::exp(-1 / x) : 0.0; };
  return psi(s) / (psi(s) + psi(1 - s));
}

}  // namespace strnet
