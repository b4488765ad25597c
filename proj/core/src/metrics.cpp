#include "vccdsa/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <vector>

#include "vccdsa/error.hpp"

namespace vccdsa {

void SsimParams::validate() const {
  if (!(k1 > 0 && k2 > 0)) throw ArgumentError("SSIM constants k1, k2 must be positive");
  if (window < 1 || window % 2 == 0) throw ArgumentError("SSIM window size must be odd");
  if (!(sigma > 0) || !(dynamic_range > 0)) throw ArgumentError("SSIM sigma and dynamic range must be positive");
}

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const int r = size / 2;
  double s = 0.0;
  for (int i = 0; i < size; ++i) {
    k[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - r) * (i - r) / (sigma * sigma));
    s += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= s;
  return k;
}

// Separable "valid" filtering: (h, w) -> (h - size + 1, w - size + 1).
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w, const std::vector<double>& k) {
  const int size = static_cast<int>(k.size());
  const int ho = h - size + 1, wo = w - size + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * wo);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < wo; ++x) {
      double s = 0.0;
      for (int i = 0; i < size; ++i) s += k[static_cast<std::size_t>(i)] * in[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * wo + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ho) * wo);
  for (int y = 0; y < ho; ++y) {
    for (int x = 0; x < wo; ++x) {
      double s = 0.0;
      for (int i = 0; i < size; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * wo + x];
      out[static_cast<std::size_t>(y) * wo + x] = s;
    }
  }
  return out;
}

}  // namespace

double ssim(const ImageFrame& x, const ImageFrame& y, const SsimParams& params) {
  require_same_shape(x, y, "ssim");
  params.validate();
  const int h = x.height(), w = x.width();
  if (params.window > h || params.window > w) throw ArgumentError("SSIM window larger than frame");
  const std::size_t n = x.size();
  std::vector<double> a(n), b(n), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = x.data()[i];
    b[i] = y.data()[i];
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto k = gaussian_kernel(params.window, params.sigma);
  const auto mu_a = filter_valid(a, h, w, k);
  const auto mu_b = filter_valid(b, h, w, k);
  const auto e_aa = filter_valid(aa, h, w, k);
  const auto e_bb = filter_valid(bb, h, w, k);
  const auto e_ab = filter_valid(ab, h, w, k);
  const double c1 = params.c1(), c2 = params.c2();
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return 100.0 * total / static_cast<double>(mu_a.size());
}

double mean_squared_error(const ImageFrame& x, const ImageFrame& y) {
  require_same_shape(x, y, "mean_squared_error");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x.data()[i]) - y.data()[i];
    s += d * d;
  }
  return s / static_cast<double>(x.size());
}

double psnr_from_mse(double mse, double max_val) {
  if (!(max_val > 0)) throw ArgumentError("psnr: max_val must be positive");
  if (mse <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 20.0 * std::log10(max_val) - 10.0 * std::log10(mse));
}

double psnr(const ImageFrame& x, const ImageFrame& y, double max_val) {
  return psnr_from_mse(mean_squared_error(x, y), max_val);
}

void write_metrics_csv_header(std::ostream& out) { out << "sequence_id,frame,method,ssim_percent,psnr_db\n"; }

void write_metrics_csv_row(std::ostream& out, const MetricsRecord& r) {
  out << r.sequence_id << ',' << r.frame << ',' << r.method << ',' << std::setprecision(10) << r.ssim_percent << ','
      << r.psnr_db << '\n';
}

}  // namespace vccdsa
