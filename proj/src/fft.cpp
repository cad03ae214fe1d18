#include "mdn/fft.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace mdn {

std::vector<double> ComplexImage::magnitude() const {
    std::vector<double> out(re.size());
    for (size_t i = 0; i < re.size(); ++i) out[i] = std::hypot(re[i], im[i]);
    return out;
}

double l2_norm(const std::vector<double>& re, const std::vector<double>& im) {
    double acc = 0;
    for (size_t i = 0; i < re.size(); ++i) acc += re[i] * re[i] + im[i] * im[i];
    return std::sqrt(acc);
}

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, unnormalized.
void fft_pow2(double* re, double* im, size_t n, bool inverse) {
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (size_t k = 0; k < len / 2; ++k) {
                const size_t a = i + k, b = i + k + len / 2;
                const double tr = re[b] * cr - im[b] * ci;
                const double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

// Bluestein chirp-z for arbitrary n, built on a power-of-two FFT.
void fft_bluestein(double* re, double* im, size_t n, bool inverse) {
    size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;

    std::vector<double> chirp_r(n), chirp_i(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument small for large n.
        const double ang = kPi * static_cast<double>((k * k) % (2 * n)) / static_cast<double>(n);
        chirp_r[k] = std::cos(ang);
        chirp_i[k] = sign * std::sin(ang);
    }

    std::vector<double> ar(m, 0.0), ai(m, 0.0), br(m, 0.0), bi(m, 0.0);
    for (size_t k = 0; k < n; ++k) {
        ar[k] = re[k] * chirp_r[k] - im[k] * chirp_i[k];
        ai[k] = re[k] * chirp_i[k] + im[k] * chirp_r[k];
    }
    br[0] = chirp_r[0];
    bi[0] = -chirp_i[0];
    for (size_t k = 1; k < n; ++k) {
        br[k] = br[m - k] = chirp_r[k];
        bi[k] = bi[m - k] = -chirp_i[k];
    }

    fft_pow2(ar.data(), ai.data(), m, false);
    fft_pow2(br.data(), bi.data(), m, false);
    for (size_t k = 0; k < m; ++k) {
        const double tr = ar[k] * br[k] - ai[k] * bi[k];
        ai[k] = ar[k] * bi[k] + ai[k] * br[k];
        ar[k] = tr;
    }
    fft_pow2(ar.data(), ai.data(), m, true);
    const double scale = 1.0 / static_cast<double>(m);
    for (size_t k = 0; k < n; ++k) {
        const double vr = ar[k] * scale, vi = ai[k] * scale;
        re[k] = vr * chirp_r[k] - vi * chirp_i[k];
        im[k] = vr * chirp_i[k] + vi * chirp_r[k];
    }
}

void fft_line(double* re, double* im, size_t n, bool inverse) {
    if (n == 1) return;
    if (is_pow2(n))
        fft_pow2(re, im, n, inverse);
    else
        fft_bluestein(re, im, n, inverse);
}

// Transform all rows then all columns, unnormalized.
void fft_2d_raw(std::vector<double>& re, std::vector<double>& im, int h, int w, bool inverse) {
    for (int y = 0; y < h; ++y)
        fft_line(re.data() + static_cast<size_t>(y) * w, im.data() + static_cast<size_t>(y) * w,
                 static_cast<size_t>(w), inverse);
    std::vector<double> cr(h), ci(h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            cr[y] = re[static_cast<size_t>(y) * w + x];
            ci[y] = im[static_cast<size_t>(y) * w + x];
        }
        fft_line(cr.data(), ci.data(), static_cast<size_t>(h), inverse);
        for (int y = 0; y < h; ++y) {
            re[static_cast<size_t>(y) * w + x] = cr[y];
            im[static_cast<size_t>(y) * w + x] = ci[y];
        }
    }
}

// Circular shift by (sy, sx): out[(y+sy) mod h][(x+sx) mod w] = in[y][x].
void circ_shift(std::vector<double>& buf, int h, int w, int sy, int sx) {
    std::vector<double> tmp(buf.size());
    for (int y = 0; y < h; ++y) {
        const int oy = (y + sy) % h;
        for (int x = 0; x < w; ++x) tmp[static_cast<size_t>(oy) * w + (x + sx) % w] =
            buf[static_cast<size_t>(y) * w + x];
    }
    buf.swap(tmp);
}

}  // namespace

KSpaceGrid fft2(const ComplexImage& img) {
    if (img.h < 1 || img.w < 1) throw ShapeError("fft2 on empty image");
    KSpaceGrid k(img.h, img.w);
    k.re = img.re;
    k.im = img.im;
    fft_2d_raw(k.re, k.im, k.h, k.w, false);
    const double scale = 1.0 / std::sqrt(static_cast<double>(k.h) * k.w);
    for (size_t i = 0; i < k.re.size(); ++i) {
        k.re[i] *= scale;
        k.im[i] *= scale;
    }
    // fftshift: DC moves to (h/2, w/2).
    circ_shift(k.re, k.h, k.w, k.h / 2, k.w / 2);
    circ_shift(k.im, k.h, k.w, k.h / 2, k.w / 2);
    k.centered = true;
    return k;
}

ComplexImage ifft2(const KSpaceGrid& k) {
    if (k.h < 1 || k.w < 1) throw ShapeError("ifft2 on empty grid");
    ComplexImage img(k.h, k.w);
    img.re = k.re;
    img.im = k.im;
    if (k.centered) {
        // ifftshift: inverse of the shift above (matters for odd extents).
        circ_shift(img.re, k.h, k.w, (k.h + 1) / 2, (k.w + 1) / 2);
        circ_shift(img.im, k.h, k.w, (k.h + 1) / 2, (k.w + 1) / 2);
    }
    fft_2d_raw(img.re, img.im, img.h, img.w, true);
    const double scale = 1.0 / std::sqrt(static_cast<double>(img.h) * img.w);
    for (size_t i = 0; i < img.re.size(); ++i) {
        img.re[i] *= scale;
        img.im[i] *= scale;
    }
    return img;
}

void fft_1d(std::vector<double>& re, std::vector<double>& im, bool inverse) {
    if (re.size() != im.size()) throw ShapeError("fft_1d planes differ in length");
    fft_line(re.data(), im.data(), re.size(), inverse);
    const double scale = 1.0 / std::sqrt(static_cast<double>(re.size()));
    for (size_t i = 0; i < re.size(); ++i) {
        re[i] *= scale;
        im[i] *= scale;
    }
}

void save_cplx(const std::string& path, const ComplexImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write("CPLX", 4);
    const uint64_t h = static_cast<uint64_t>(img.h), w = static_cast<uint64_t>(img.w);
    out.write(reinterpret_cast<const char*>(&h), 8);
    out.write(reinterpret_cast<const char*>(&w), 8);
    for (size_t i = 0; i < img.numel(); ++i) {
        out.write(reinterpret_cast<const char*>(&img.re[i]), 8);
        out.write(reinterpret_cast<const char*>(&img.im[i]), 8);
    }
    if (!out) throw IoError("write failed: " + path);
}

ComplexImage load_cplx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CPLX", 4) != 0) throw IoError("bad CPLX magic in " + path);
    uint64_t h = 0, w = 0;
    in.read(reinterpret_cast<char*>(&h), 8);
    in.read(reinterpret_cast<char*>(&w), 8);
    if (!in || h == 0 || w == 0 || h > (1u << 20) || w > (1u << 20))
        throw IoError("bad CPLX extents in " + path);
    ComplexImage img(static_cast<int>(h), static_cast<int>(w));
    for (size_t i = 0; i < img.numel(); ++i) {
        in.read(reinterpret_cast<char*>(&img.re[i]), 8);
        in.read(reinterpret_cast<char*>(&img.im[i]), 8);
    }
    if (!in) throw IoError("CPLX truncated: " + path);
    return img;
}

}  // namespace mdn
