#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "vccdsa/image.hpp"

namespace vccdsa {

struct SsimParams {
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
  int window = 11;
  double sigma = 1.5;

  void validate() const;
  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

constexpr double kPsnrCapDb = 100.0;

// Mean SSIM over all Gaussian windows lying fully inside the frame, in percent.
double ssim(const ImageFrame& x, const ImageFrame& y, const SsimParams& params = {});

// 20 log10(max_val) - 10 log10(MSE), capped at kPsnrCapDb (also for MSE = 0).
double psnr(const ImageFrame& x, const ImageFrame& y, double max_val = 1.0);
double psnr_from_mse(double mse, double max_val = 1.0);

double mean_squared_error(const ImageFrame& x, const ImageFrame& y);

struct MetricsRecord {
  std::string sequence_id;
  int frame = 0;
  std::string method;
  double ssim_percent = 0.0;
  double psnr_db = 0.0;
};

// "sequence_id,frame,method,ssim_percent,psnr_db"
void write_metrics_csv_header(std::ostream& out);
void write_metrics_csv_row(std::ostream& out, const MetricsRecord& record);

}  // namespace vccdsa
