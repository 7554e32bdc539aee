// Fusion quality metrics: PSNR, SSIM, FSIM, mutual information, pixel
// feature mutual information, and Shannon entropy, plus the batch evaluator
// that runs extract -> fuse -> reconstruct over a manifest's test split.
//
// Reference-based metrics score the fused image against each source and
// report the mean of the two numbers. Histogram metrics use 256 bins,
// matching the 8-bit provenance of the data. The FMI feature image is the
// Scharr gradient magnitude and the per-source score is the normalized
// mutual information 2*MI/(H(a)+H(b)); absolute values therefore differ from
// tools that pick other feature maps or regional windows.
#pragma once

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "fusenet/common.hpp"
#include "fusenet/dataio.hpp"
#include "fusenet/fusion.hpp"
#include "fusenet/image.hpp"
#include "fusenet/network.hpp"

namespace fusenet {

// ---------------------------------------------------------------------------
// PSNR
// ---------------------------------------------------------------------------

inline constexpr double kPsnrCapDb = 100.0;  // identical images would be +inf

inline double psnr(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width) {
        throw ShapeError("psnr: image sizes differ");
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse <= 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

inline double psnr(const Image& fused, const Image& src_a, const Image& src_b) {
    return 0.5 * (psnr(src_a, fused) + psnr(src_b, fused));
}

// ---------------------------------------------------------------------------
// SSIM (11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03, L=1)
// ---------------------------------------------------------------------------

namespace detail {

inline const std::vector<double>& ssim_window() {
    static const std::vector<double> win = [] {
        constexpr int n = 11;
        constexpr double sigma = 1.5;
        std::vector<double> w(n * n);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const double dy = i - (n - 1) / 2.0, dx = j - (n - 1) / 2.0;
                w[i * n + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                total += w[i * n + j];
            }
        }
        for (double& v : w) v /= total;
        return w;
    }();
    return win;
}

}  // namespace detail

inline double ssim(const Image& x, const Image& y) {
    if (x.height != y.height || x.width != y.width) throw ShapeError("ssim: image sizes differ");
    constexpr int n = 11;
    if (x.height < n || x.width < n) {
        throw ValidationError("ssim needs images of at least 11x11, got " + std::to_string(x.height) + "x" +
                              std::to_string(x.width));
    }
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // (K*L)^2 with L=1
    const auto& win = detail::ssim_window();

    double accum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i + n <= x.height; ++i) {
        for (std::size_t j = 0; j + n <= x.width; ++j) {
            double mx = 0.0, my = 0.0;
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    const double wgt = win[a * n + b];
                    mx += wgt * x.at(i + a, j + b);
                    my += wgt * y.at(i + a, j + b);
                }
            double vx = 0.0, vy = 0.0, cov = 0.0;
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    const double wgt = win[a * n + b];
                    const double dx = x.at(i + a, j + b) - mx;
                    const double dy = y.at(i + a, j + b) - my;
                    vx += wgt * dx * dx;
                    vy += wgt * dy * dy;
                    cov += wgt * dx * dy;
                }
            accum += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return accum / static_cast<double>(count);
}

inline double ssim(const Image& fused, const Image& src_a, const Image& src_b) {
    return 0.5 * (ssim(src_a, fused) + ssim(src_b, fused));
}

// ---------------------------------------------------------------------------
// Histograms, entropy, mutual information
// ---------------------------------------------------------------------------

inline constexpr int kHistBins = 256;

namespace detail {

inline int intensity_bin(double p) {
    const int b = static_cast<int>(p * kHistBins);
    return std::min(kHistBins - 1, std::max(0, b));
}

/// Bin a value range [lo, hi] into kHistBins levels; constant inputs land in
/// bin 0.
inline std::vector<int> range_bins(const std::vector<float>& xs) {
    float lo = xs[0], hi = xs[0];
    for (float v : xs) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<int> bins(xs.size(), 0);
    if (hi > lo) {
        const double scale = static_cast<double>(kHistBins) / (static_cast<double>(hi) - lo);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            bins[i] = std::min(kHistBins - 1, static_cast<int>((static_cast<double>(xs[i]) - lo) * scale));
        }
    }
    return bins;
}

struct JointEntropy {
    double hx = 0.0, hy = 0.0, hxy = 0.0;
    double mi() const { return hx + hy - hxy; }
};

inline JointEntropy joint_entropy(const std::vector<int>& bx, const std::vector<int>& by) {
    std::vector<double> joint(static_cast<std::size_t>(kHistBins) * kHistBins, 0.0);
    const double inv_n = 1.0 / static_cast<double>(bx.size());
    for (std::size_t i = 0; i < bx.size(); ++i) joint[bx[i] * kHistBins + by[i]] += inv_n;

    std::array<double, kHistBins> px{}, py{};
    JointEntropy out;
    for (int i = 0; i < kHistBins; ++i) {
        for (int j = 0; j < kHistBins; ++j) {
            const double p = joint[i * kHistBins + j];
            px[i] += p;
            py[j] += p;
            if (p > 0.0) out.hxy -= p * std::log2(p);
        }
    }
    for (int i = 0; i < kHistBins; ++i) {
        if (px[i] > 0.0) out.hx -= px[i] * std::log2(px[i]);
        if (py[i] > 0.0) out.hy -= py[i] * std::log2(py[i]);
    }
    return out;
}

inline std::vector<int> image_bins(const Image& img) {
    std::vector<int> bins(img.numel());
    for (std::size_t i = 0; i < img.numel(); ++i) bins[i] = intensity_bin(img.pixels[i]);
    return bins;
}

}  // namespace detail

/// Shannon entropy of the 256-bin intensity histogram, in bits.
inline double entropy(const Image& img) {
    std::array<double, kHistBins> hist{};
    const double inv_n = 1.0 / static_cast<double>(img.numel());
    for (float p : img.pixels) hist[detail::intensity_bin(p)] += inv_n;
    double h = 0.0;
    for (double p : hist) {
        if (p > 0.0) h -= p * std::log2(p);
    }
    return h;
}

/// MI between intensity histograms, in bits.
inline double mutual_information(const Image& x, const Image& y) {
    if (x.height != y.height || x.width != y.width) throw ShapeError("mutual_information: image sizes differ");
    return detail::joint_entropy(detail::image_bins(x), detail::image_bins(y)).mi();
}

inline double mutual_information(const Image& fused, const Image& src_a, const Image& src_b) {
    return 0.5 * (mutual_information(src_a, fused) + mutual_information(src_b, fused));
}

// ---------------------------------------------------------------------------
// Gradient features (Scharr) and pixel feature mutual information
// ---------------------------------------------------------------------------

namespace detail {

/// Scharr gradient magnitude, kernels /16. Borders replicate the edge pixel
/// so constant images have zero gradient everywhere.
inline std::vector<float> scharr_magnitude(const Image& img) {
    const long h = static_cast<long>(img.height), w = static_cast<long>(img.width);
    std::vector<float> out(img.numel());
    auto px = [&](long i, long j) -> double {
        i = std::min(h - 1, std::max(0L, i));
        j = std::min(w - 1, std::max(0L, j));
        return img.pixels[static_cast<std::size_t>(i * w + j)];
    };
    for (long i = 0; i < h; ++i) {
        for (long j = 0; j < w; ++j) {
            const double gx = (3.0 * px(i - 1, j - 1) + 10.0 * px(i, j - 1) + 3.0 * px(i + 1, j - 1) -
                               3.0 * px(i - 1, j + 1) - 10.0 * px(i, j + 1) - 3.0 * px(i + 1, j + 1)) /
                              16.0;
            const double gy = (3.0 * px(i - 1, j - 1) + 10.0 * px(i - 1, j) + 3.0 * px(i - 1, j + 1) -
                               3.0 * px(i + 1, j - 1) - 10.0 * px(i + 1, j) - 3.0 * px(i + 1, j + 1)) /
                              16.0;
            out[static_cast<std::size_t>(i * w + j)] = static_cast<float>(std::sqrt(gx * gx + gy * gy));
        }
    }
    return out;
}

inline double normalized_feature_mi(const std::vector<float>& fa, const std::vector<float>& fb) {
    const JointEntropy je = joint_entropy(range_bins(fa), range_bins(fb));
    const double denom = je.hx + je.hy;
    if (denom <= 0.0) return 1.0;  // both feature maps constant: nothing to disagree on
    return 2.0 * je.mi() / denom;
}

}  // namespace detail

/// Normalized MI between gradient-magnitude feature images, averaged over
/// the two sources; 1.0 when fused matches both sources exactly.
inline double fmi_pixel(const Image& fused, const Image& src_a, const Image& src_b) {
    if (fused.height != src_a.height || fused.width != src_a.width || fused.height != src_b.height ||
        fused.width != src_b.width) {
        throw ShapeError("fmi_pixel: image sizes differ");
    }
    const std::vector<float> ff = detail::scharr_magnitude(fused);
    const double a = detail::normalized_feature_mi(detail::scharr_magnitude(src_a), ff);
    const double b = detail::normalized_feature_mi(detail::scharr_magnitude(src_b), ff);
    return 0.5 * (a + b);
}

// ---------------------------------------------------------------------------
// FSIM (log-Gabor phase congruency, 4 scales x 4 orientations)
// ---------------------------------------------------------------------------

namespace detail {

struct FftwDeleter {
    void operator()(void* p) const { fftw_free(p); }
};
using FftwBuf = std::unique_ptr<fftw_complex[], FftwDeleter>;

inline FftwBuf fftw_buffer(std::size_t n) {
    return FftwBuf(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)));
}

/// Kovesi-style phase congruency: 4 log-Gabor scales (min wavelength 6,
/// scaling factor 2, sigmaOnf 0.55), 4 orientations, Rayleigh noise
/// threshold with k=2. Returns sum_o max(Energy_o - T_o, 0) over the total
/// filter amplitude, pointwise in [0,1].
inline std::vector<double> phase_congruency(const std::vector<double>& img, std::size_t h, std::size_t w) {
    constexpr int nscale = 4;
    constexpr int norient = 4;
    constexpr double min_wavelength = 6.0;
    constexpr double mult = 2.0;
    constexpr double sigma_onf = 0.55;
    constexpr double k_noise = 2.0;
    constexpr double eps = 1e-4;
    const std::size_t n = h * w;

    // DFT-ordered frequency grid (DC at index 0).
    std::vector<double> radius(n), theta(n);
    for (std::size_t i = 0; i < h; ++i) {
        const double fy = (i < (h + 1) / 2) ? static_cast<double>(i) / h : static_cast<double>(i) / h - 1.0;
        for (std::size_t j = 0; j < w; ++j) {
            const double fx = (j < (w + 1) / 2) ? static_cast<double>(j) / w : static_cast<double>(j) / w - 1.0;
            radius[i * w + j] = std::sqrt(fx * fx + fy * fy);
            theta[i * w + j] = std::atan2(-fy, fx);
        }
    }
    radius[0] = 1.0;

    std::vector<std::vector<double>> log_gabor(nscale, std::vector<double>(n));
    const double log_sigma = std::log(sigma_onf);
    for (int s = 0; s < nscale; ++s) {
        const double f0 = 1.0 / (min_wavelength * std::pow(mult, s));
        for (std::size_t i = 0; i < n; ++i) {
            const double lr = std::log(radius[i] / f0);
            const double lowpass = 1.0 / (1.0 + std::pow(radius[i] / 0.45, 30.0));
            log_gabor[s][i] = std::exp(-(lr * lr) / (2.0 * log_sigma * log_sigma)) * lowpass;
        }
        log_gabor[s][0] = 0.0;
    }

    const double theta_sigma = std::numbers::pi / norient / 1.5;
    std::vector<std::vector<double>> spread(norient, std::vector<double>(n));
    for (int o = 0; o < norient; ++o) {
        const double angle = o * std::numbers::pi / norient;
        for (std::size_t i = 0; i < n; ++i) {
            const double ds = std::sin(theta[i] - angle), dc = std::cos(theta[i] - angle);
            const double dtheta = std::abs(std::atan2(ds, dc));
            spread[o][i] = std::exp(-(dtheta * dtheta) / (2.0 * theta_sigma * theta_sigma));
        }
    }

    FftwBuf freq = fftw_buffer(n), work = fftw_buffer(n), resp = fftw_buffer(n);
    for (std::size_t i = 0; i < n; ++i) {
        freq[i][0] = img[i];
        freq[i][1] = 0.0;
    }
    fftw_plan fwd = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), freq.get(), freq.get(),
                                     FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_plan bwd = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), work.get(), resp.get(),
                                     FFTW_BACKWARD, FFTW_ESTIMATE);
    fftw_execute(fwd);

    std::vector<double> energy_all(n, 0.0), an_all(n, 0.0);
    std::vector<double> sum_e(n), sum_o(n), sum_an(n), an0(n);
    std::vector<double> e_maps(static_cast<std::size_t>(nscale) * n), o_maps(static_cast<std::size_t>(nscale) * n);
    const double inv_n = 1.0 / static_cast<double>(n);

    for (int o = 0; o < norient; ++o) {
        std::fill(sum_e.begin(), sum_e.end(), 0.0);
        std::fill(sum_o.begin(), sum_o.end(), 0.0);
        std::fill(sum_an.begin(), sum_an.end(), 0.0);
        for (int s = 0; s < nscale; ++s) {
            for (std::size_t i = 0; i < n; ++i) {
                const double f = log_gabor[s][i] * spread[o][i];
                work[i][0] = freq[i][0] * f;
                work[i][1] = freq[i][1] * f;
            }
            fftw_execute(bwd);
            double* em = e_maps.data() + static_cast<std::size_t>(s) * n;
            double* om = o_maps.data() + static_cast<std::size_t>(s) * n;
            for (std::size_t i = 0; i < n; ++i) {
                em[i] = resp[i][0] * inv_n;
                om[i] = resp[i][1] * inv_n;
                const double an = std::sqrt(em[i] * em[i] + om[i] * om[i]);
                sum_e[i] += em[i];
                sum_o[i] += om[i];
                sum_an[i] += an;
                if (s == 0) an0[i] = an;
            }
        }

        // Rayleigh noise threshold from the smallest-scale amplitudes.
        std::vector<double> med = an0;
        std::nth_element(med.begin(), med.begin() + static_cast<std::ptrdiff_t>(n / 2), med.end());
        const double tau = med[n / 2] / std::sqrt(std::log(4.0));
        const double total_tau = tau * (1.0 - std::pow(1.0 / mult, nscale)) / (1.0 - 1.0 / mult);
        const double noise_mean = total_tau * std::sqrt(std::numbers::pi / 2.0);
        const double noise_sigma = total_tau * std::sqrt((4.0 - std::numbers::pi) / 2.0);
        const double t_noise = noise_mean + k_noise * noise_sigma;

        for (std::size_t i = 0; i < n; ++i) {
            const double x_energy = std::sqrt(sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]) + eps;
            const double mean_e = sum_e[i] / x_energy, mean_o = sum_o[i] / x_energy;
            double energy = 0.0;
            for (int s = 0; s < nscale; ++s) {
                const double e = e_maps[static_cast<std::size_t>(s) * n + i];
                const double od = o_maps[static_cast<std::size_t>(s) * n + i];
                energy += e * mean_e + od * mean_o - std::abs(e * mean_o - od * mean_e);
            }
            energy_all[i] += std::max(energy - t_noise, 0.0);
            an_all[i] += sum_an[i];
        }
    }

    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);

    std::vector<double> pc(n);
    for (std::size_t i = 0; i < n; ++i) pc[i] = energy_all[i] / (an_all[i] + eps);
    return pc;
}

inline std::vector<double> image_to_doubles(const Image& img) {
    std::vector<double> out(img.numel());
    for (std::size_t i = 0; i < img.numel(); ++i) out[i] = static_cast<double>(img.pixels[i]);
    return out;
}

}  // namespace detail

/// Feature similarity: phase-congruency and Scharr-gradient similarity maps,
/// weighted by max phase congruency. T1 keeps its canonical value (phase
/// congruency is contrast-invariant); T2 is the canonical 160 rescaled from
/// the [0,255] range to [0,1] intensities.
inline double fsim(const Image& x, const Image& y) {
    if (x.height != y.height || x.width != y.width) throw ShapeError("fsim: image sizes differ");
    if (x.height < 32 || x.width < 32) {
        throw ValidationError("fsim needs images of at least 32x32, got " + std::to_string(x.height) + "x" +
                              std::to_string(x.width));
    }
    constexpr double t1 = 0.85;
    constexpr double t2 = 160.0 / (255.0 * 255.0);

    const auto pc1 = detail::phase_congruency(detail::image_to_doubles(x), x.height, x.width);
    const auto pc2 = detail::phase_congruency(detail::image_to_doubles(y), y.height, y.width);
    const auto g1 = detail::scharr_magnitude(x);
    const auto g2 = detail::scharr_magnitude(y);

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pc1.size(); ++i) {
        const double s_pc = (2.0 * pc1[i] * pc2[i] + t1) / (pc1[i] * pc1[i] + pc2[i] * pc2[i] + t1);
        const double ga = g1[i], gb = g2[i];
        const double s_g = (2.0 * ga * gb + t2) / (ga * ga + gb * gb + t2);
        const double pcm = std::max(pc1[i], pc2[i]);
        num += s_pc * s_g * pcm;
        den += pcm;
    }
    if (den <= 0.0) return 1.0;  // no structure in either image
    return num / den;
}

inline double fsim(const Image& fused, const Image& src_a, const Image& src_b) {
    return 0.5 * (fsim(src_a, fused) + fsim(src_b, fused));
}

// ---------------------------------------------------------------------------
// Reports and batch evaluation
// ---------------------------------------------------------------------------

struct MetricReport {
    std::string pair_id;
    double psnr = 0.0;
    double ssim = 0.0;
    double fsim = 0.0;
    double mi = 0.0;
    double fmi_pixel = 0.0;
    double entropy = 0.0;
};

inline constexpr const char* kReportHeader = "pair_id,psnr,ssim,fsim,mi,fmi_pixel,entropy";

inline MetricReport compute_metrics(std::string pair_id, const Image& fused, const Image& src_a,
                                    const Image& src_b) {
    MetricReport r;
    r.pair_id = std::move(pair_id);
    r.psnr = psnr(fused, src_a, src_b);
    r.ssim = ssim(fused, src_a, src_b);
    r.fsim = fsim(fused, src_a, src_b);
    r.mi = mutual_information(fused, src_a, src_b);
    r.fmi_pixel = fmi_pixel(fused, src_a, src_b);
    r.entropy = entropy(fused);
    return r;
}

inline std::string report_row(const MetricReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", r.pair_id.c_str(), r.psnr, r.ssim,
                  r.fsim, r.mi, r.fmi_pixel, r.entropy);
    return buf;
}

struct BatchEvaluation {
    std::vector<MetricReport> reports;
    MetricReport mean;  // pair_id "MEAN"
};

/// Fuses an already-loaded pair with the model and strategy.
template <class S>
Image fuse_pair(const FusionModel<S>& model, const Image& a, const Image& b, const FusionStrategy& strategy,
                FusionWeights* weights_out = nullptr) {
    const Tensor<S> f1 = extract_features(model, a);
    const Tensor<S> f2 = extract_features(model, b);
    const Tensor<S> fused = fuse(f1, f2, strategy, weights_out);
    return reconstruct(model, fused);
}

template <class S>
BatchEvaluation evaluate_batch(const PairManifest& manifest, const FusionModel<S>& model,
                               const FusionStrategy& strategy) {
    const auto test_entries = manifest.in_split(Split::test);
    if (test_entries.empty()) throw ValidationError("manifest has an empty test split");

    BatchEvaluation out;
    out.mean.pair_id = "MEAN";
    for (const PairEntry* e : test_entries) {
        try {
            const auto [a, b] = load_pair(e->path_a, e->path_b);
            const Image fused = fuse_pair(model, a, b, strategy);
            out.reports.push_back(compute_metrics(e->id, fused, a, b));
        } catch (const IoError& err) {
            throw IoError("pair '" + e->id + "': " + err.what());
        }
        const MetricReport& r = out.reports.back();
        out.mean.psnr += r.psnr;
        out.mean.ssim += r.ssim;
        out.mean.fsim += r.fsim;
        out.mean.mi += r.mi;
        out.mean.fmi_pixel += r.fmi_pixel;
        out.mean.entropy += r.entropy;
    }
    const double inv = 1.0 / static_cast<double>(out.reports.size());
    out.mean.psnr *= inv;
    out.mean.ssim *= inv;
    out.mean.fsim *= inv;
    out.mean.mi *= inv;
    out.mean.fmi_pixel *= inv;
    out.mean.entropy *= inv;
    return out;
}

inline void write_report_csv(const BatchEvaluation& eval, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report '" + path + "'");
    out << kReportHeader << '\n';
    for (const auto& r : eval.reports) out << report_row(r) << '\n';
    out << report_row(eval.mean) << '\n';
}

/// Rows in file order; a trailing MEAN row is included when present.
inline std::vector<MetricReport> parse_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read report '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != kReportHeader) {
        throw FormatError("report '" + path + "' has an unexpected header");
    }
    std::vector<MetricReport> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        MetricReport r;
        std::string field;
        std::getline(ss, r.pair_id, ',');
        double* slots[6] = {&r.psnr, &r.ssim, &r.fsim, &r.mi, &r.fmi_pixel, &r.entropy};
        for (double* slot : slots) {
            if (!std::getline(ss, field, ',')) throw FormatError("report '" + path + "': short row");
            *slot = std::stod(field);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace fusenet
