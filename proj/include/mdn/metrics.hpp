#pragma once

#include <string>
#include <vector>

#include "mdn/common.hpp"

namespace mdn {

/// 10*log10(range^2 / MSE) in dB; +infinity when the images are identical.
/// data_range <= 0 selects max(gt) per call.
double psnr(const std::vector<double>& pred, const std::vector<double>& gt, double data_range = 0.0);

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), k1=0.01,
/// k2=0.03, over positions where the full window fits.
double ssim(const std::vector<double>& pred, const std::vector<double>& gt, int h, int w,
            double data_range = 0.0);

/// sqrt(MSE); normalized form is scaled to percent of the data range.
double rmse(const std::vector<double>& pred, const std::vector<double>& gt, bool normalize = false,
            double data_range = 0.0);

struct MetricReport {
    std::string name;
    std::vector<double> psnr_values, ssim_values, rmse_values;

    int count() const { return static_cast<int>(psnr_values.size()); }
    double psnr_mean() const;
    double psnr_std() const;
    double ssim_mean() const;
    double rmse_mean() const;

    void add(double p, double s, double r);
};

/// Tab-separated row: name, split, PSNR, SSIM, RMSE, n, std(PSNR).
std::string report_row(const MetricReport& report, const std::string& split);

}  // namespace mdn
