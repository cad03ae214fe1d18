#include "mdn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mdn {

namespace {

void require_same_size(const std::vector<double>& a, const std::vector<double>& b,
                       const char* what) {
    if (a.size() != b.size())
        throw ShapeError(std::string(what) + ": lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " differ");
}

double range_of(const std::vector<double>& gt, double data_range) {
    if (data_range > 0) return data_range;
    double m = 0;
    for (double v : gt) m = std::max(m, std::fabs(v));
    if (m <= 0) throw ConfigError("data range is zero; pass an explicit data_range");
    return m;
}

double mse_of(const std::vector<double>& pred, const std::vector<double>& gt) {
    double acc = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - gt[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

}  // namespace

double psnr(const std::vector<double>& pred, const std::vector<double>& gt, double data_range) {
    require_same_size(pred, gt, "psnr");
    const double range = range_of(gt, data_range);
    const double mse = mse_of(pred, gt);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(range * range / mse);
}

double ssim(const std::vector<double>& pred, const std::vector<double>& gt, int h, int w,
            double data_range) {
    require_same_size(pred, gt, "ssim");
    if (static_cast<size_t>(h) * w != gt.size())
        throw ShapeError("ssim: extents do not match buffer length");
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    if (h < kWin || w < kWin)
        throw ConfigError("ssim: image smaller than the 11x11 window");

    const double range = range_of(gt, data_range);
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);

    double window[kWin];
    double norm = 0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - (kWin - 1) / 2.0;
        window[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        norm += window[i];
    }
    for (double& v : window) v /= norm;

    double total = 0;
    int count = 0;
    for (int y0 = 0; y0 + kWin <= h; ++y0)
        for (int x0 = 0; x0 + kWin <= w; ++x0) {
            double mu_p = 0, mu_g = 0, pp = 0, gg = 0, pg = 0;
            for (int dy = 0; dy < kWin; ++dy)
                for (int dx = 0; dx < kWin; ++dx) {
                    const double wgt = window[dy] * window[dx];
                    const size_t i = static_cast<size_t>(y0 + dy) * w + (x0 + dx);
                    mu_p += wgt * pred[i];
                    mu_g += wgt * gt[i];
                    pp += wgt * pred[i] * pred[i];
                    gg += wgt * gt[i] * gt[i];
                    pg += wgt * pred[i] * gt[i];
                }
            const double var_p = pp - mu_p * mu_p;
            const double var_g = gg - mu_g * mu_g;
            const double cov = pg - mu_p * mu_g;
            total += ((2 * mu_p * mu_g + c1) * (2 * cov + c2)) /
                     ((mu_p * mu_p + mu_g * mu_g + c1) * (var_p + var_g + c2));
            ++count;
        }
    return total / count;
}

double rmse(const std::vector<double>& pred, const std::vector<double>& gt, bool normalize,
            double data_range) {
    require_same_size(pred, gt, "rmse");
    const double root = std::sqrt(mse_of(pred, gt));
    if (!normalize) return root;
    return 100.0 * root / range_of(gt, data_range);
}

void MetricReport::add(double p, double s, double r) {
    psnr_values.push_back(p);
    ssim_values.push_back(s);
    rmse_values.push_back(r);
}

namespace {

double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw ContractError("metric report is empty");
    double acc = 0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

}  // namespace

double MetricReport::psnr_mean() const { return mean_of(psnr_values); }
double MetricReport::ssim_mean() const { return mean_of(ssim_values); }
double MetricReport::rmse_mean() const { return mean_of(rmse_values); }

double MetricReport::psnr_std() const {
    const double m = psnr_mean();
    double acc = 0;
    for (double v : psnr_values) acc += (v - m) * (v - m);
    return std::sqrt(acc / static_cast<double>(psnr_values.size()));
}

std::string report_row(const MetricReport& report, const std::string& split) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    os << report.name << "\t" << split << "\t" << report.psnr_mean() << "\t" << report.ssim_mean()
       << "\t" << report.rmse_mean() << "\t" << report.count() << "\t" << report.psnr_std();
    return os.str();
}

}  // namespace mdn
