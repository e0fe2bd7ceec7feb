#include "neurophys/sigproc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "neurophys/errors.hpp"

namespace neurophys {

using cplx = std::complex<double>;

void TrialSet::validate() const {
    if (sample_rate_hz <= 0.0) throw DataError("trial set: sample rate must be positive");
    if (labels.size() != trials.size())
        throw DataError("trial set: label count does not match trial count");
    for (std::size_t i = 0; i < trials.size(); ++i) {
        if (trials[i].ndim() != 2 || trials[i].dim(0) != channels() ||
            trials[i].dim(1) != samples())
            throw DataError("trial set: trial " + std::to_string(i) + " has shape " +
                            shape_str(trials[i].shape()) + ", expected uniform geometry");
        if (labels[i] >= n_classes)
            throw DataError("trial set: label " + std::to_string(labels[i]) + " of trial " +
                            std::to_string(i) + " out of range [0," + std::to_string(n_classes) +
                            ")");
    }
}

std::size_t WindowSpec::count_windows(std::size_t total_samples) const {
    if (window_len == 0 || stride == 0 || stride > window_len)
        throw ConfigError("window spec: need 0 < stride <= window_len");
    if (window_len > total_samples)
        throw ConfigError("window spec: window length " + std::to_string(window_len) +
                          " exceeds trial length " + std::to_string(total_samples));
    return (total_samples - window_len) / stride + 1;
}

FilterBankSpec FilterBankSpec::default_bank() {
    FilterBankSpec spec;
    for (int lo = 4; lo < 40; lo += 4) spec.bands.emplace_back(lo, lo + 4);
    return spec;
}

void BiquadCascade::filter_inplace(double* x, std::size_t n) const {
    for (const BiquadSection& s : sections) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double xi = x[i];
            const double yi = s.b0 * xi + s1;
            s1 = s.b1 * xi - s.a1 * yi + s2;
            s2 = s.b2 * xi - s.a2 * yi;
            x[i] = yi;
        }
    }
    if (gain != 1.0)
        for (std::size_t i = 0; i < n; ++i) x[i] *= gain;
}

std::vector<double> BiquadCascade::filter(const std::vector<double>& x) const {
    std::vector<double> y = x;
    filter_inplace(y.data(), y.size());
    return y;
}

cplx BiquadCascade::response(double freq_hz, double sample_rate_hz) const {
    const double w = 2.0 * M_PI * freq_hz / sample_rate_hz;
    const cplx z1 = std::polar(1.0, -w);  // z^-1
    const cplx z2 = z1 * z1;
    cplx h = gain;
    for (const BiquadSection& s : sections)
        h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    return h;
}

double BiquadCascade::max_pole_radius() const {
    double r = 0.0;
    for (const BiquadSection& s : sections) {
        // roots of z^2 + a1 z + a2
        const cplx disc = std::sqrt(cplx(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
        r = std::max(r, std::abs((-s.a1 + disc) / 2.0));
        r = std::max(r, std::abs((-s.a1 - disc) / 2.0));
    }
    return r;
}

namespace {

struct Zpk {
    std::vector<cplx> z, p;
    double k = 1.0;
};

// Analog Chebyshev Type II lowpass prototype, stopband edge at w = 1.
Zpk cheb2_prototype(int n, double atten_db) {
    if (n < 1) throw DesignError("filter order must be >= 1");
    Zpk out;
    const double de = 1.0 / std::sqrt(std::pow(10.0, 0.1 * atten_db) - 1.0);
    const double mu = std::asinh(1.0 / de) / n;
    for (int m = -n + 1; m < n; m += 2) {
        const double theta = M_PI * m / (2.0 * n);
        if (m != 0) out.z.push_back(cplx(0.0, 1.0 / std::sin(theta)));
        const cplx lp = -std::exp(cplx(0.0, theta));
        const cplx scaled(std::sinh(mu) * lp.real(), std::cosh(mu) * lp.imag());
        out.p.push_back(1.0 / scaled);
    }
    cplx num = 1.0, den = 1.0;
    for (const cplx& p : out.p) num *= -p;
    for (const cplx& z : out.z) den *= -z;
    out.k = (num / den).real();
    return out;
}

Zpk lp2bp(const Zpk& lp, double wo, double bw) {
    Zpk out;
    const std::size_t degree = lp.p.size() - lp.z.size();
    auto transform = [&](const std::vector<cplx>& roots, std::vector<cplx>& dst) {
        for (const cplx& r : roots) {
            const cplx s = r * (bw / 2.0);
            const cplx d = std::sqrt(s * s - wo * wo);
            dst.push_back(s + d);
            dst.push_back(s - d);
        }
    };
    transform(lp.z, out.z);
    transform(lp.p, out.p);
    for (std::size_t i = 0; i < degree; ++i) out.z.push_back(0.0);
    out.k = lp.k * std::pow(bw, static_cast<double>(degree));
    return out;
}

Zpk bilinear(const Zpk& analog, double fs) {
    Zpk out;
    const double fs2 = 2.0 * fs;
    cplx num = 1.0, den = 1.0;
    for (const cplx& z : analog.z) {
        out.z.push_back((fs2 + z) / (fs2 - z));
        num *= fs2 - z;
    }
    for (const cplx& p : analog.p) {
        out.p.push_back((fs2 + p) / (fs2 - p));
        den *= fs2 - p;
    }
    const std::size_t degree = analog.p.size() - analog.z.size();
    for (std::size_t i = 0; i < degree; ++i) out.z.push_back(-1.0);
    out.k = analog.k * (num / den).real();
    return out;
}

// Collapse roots into conjugate-pair representatives and real leftovers.
void split_roots(std::vector<cplx> roots, std::vector<cplx>& pairs, std::vector<double>& reals) {
    constexpr double kImagTol = 1e-10;
    std::vector<cplx> upper;
    for (const cplx& r : roots) {
        if (std::fabs(r.imag()) < kImagTol)
            reals.push_back(r.real());
        else if (r.imag() > 0.0)
            upper.push_back(r);
    }
    pairs = std::move(upper);
}

BiquadCascade zpk_to_sos(const Zpk& zpk) {
    if (zpk.z.size() != zpk.p.size())
        throw DesignError("zpk_to_sos expects equal zero and pole counts");
    std::vector<cplx> zp, pp;
    std::vector<double> zr, pr;
    split_roots(zpk.z, zp, zr);
    split_roots(zpk.p, pp, pr);
    if (zp.size() * 2 + zr.size() != zpk.z.size() || pp.size() * 2 + pr.size() != zpk.p.size())
        throw DesignError("conjugate pairing failed (asymmetric root set)");
    if (zr.size() % 2 != 0 || pr.size() % 2 != 0)
        throw DesignError("odd real root count cannot form second-order sections");

    BiquadCascade cascade;
    cascade.gain = zpk.k;
    // Highest-Q pole pairs lead the cascade.
    std::sort(pp.begin(), pp.end(), [](const cplx& a, const cplx& b) {
        return std::abs(a) > std::abs(b);
    });
    auto take_nearest_pair = [](std::vector<cplx>& pool, const cplx& ref) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pool.size(); ++i) {
            const double d = std::abs(pool[i] - ref);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        cplx out = pool[best];
        pool.erase(pool.begin() + best);
        return out;
    };
    for (const cplx& p : pp) {
        BiquadSection s{1.0, 0.0, 0.0, 0.0, 0.0};
        s.a1 = -2.0 * p.real();
        s.a2 = std::norm(p);
        if (!zp.empty()) {
            const cplx z = take_nearest_pair(zp, p);
            s.b1 = -2.0 * z.real();
            s.b2 = std::norm(z);
        } else if (zr.size() >= 2) {
            const double z0 = zr.back();
            zr.pop_back();
            const double z1 = zr.back();
            zr.pop_back();
            s.b1 = -(z0 + z1);
            s.b2 = z0 * z1;
        }
        cascade.sections.push_back(s);
    }
    for (std::size_t i = 0; i + 1 < pr.size(); i += 2) {
        BiquadSection s{1.0, 0.0, 0.0, 0.0, 0.0};
        s.a1 = -(pr[i] + pr[i + 1]);
        s.a2 = pr[i] * pr[i + 1];
        if (zp.size() >= 1) {
            const cplx z = take_nearest_pair(zp, cplx(pr[i], 0.0));
            s.b1 = -2.0 * z.real();
            s.b2 = std::norm(z);
        } else if (zr.size() >= 2) {
            const double z0 = zr.back();
            zr.pop_back();
            const double z1 = zr.back();
            zr.pop_back();
            s.b1 = -(z0 + z1);
            s.b2 = z0 * z1;
        }
        cascade.sections.push_back(s);
    }
    if (!zp.empty() || zr.size() > 1) throw DesignError("leftover zeros after SOS pairing");
    return cascade;
}

}  // namespace

BiquadCascade design_cheby2_bandpass(std::pair<double, double> band_hz, int order,
                                     double atten_db, double transition_hz,
                                     double sample_rate_hz) {
    const double nyquist = sample_rate_hz / 2.0;
    const double lo = band_hz.first, hi = band_hz.second;
    if (!(lo > 0.0) || !(hi > lo) || hi >= nyquist)
        throw DesignError("band (" + std::to_string(lo) + "," + std::to_string(hi) +
                          ") Hz must satisfy 0 < low < high < Nyquist=" + std::to_string(nyquist));
    const double stop_lo = lo - transition_hz;
    const double stop_hi = hi + transition_hz;
    if (stop_lo <= 0.0 || stop_hi >= nyquist)
        throw DesignError("stopband edges (" + std::to_string(stop_lo) + "," +
                          std::to_string(stop_hi) + ") Hz fall outside (0, Nyquist)");
    if (atten_db <= 0.0) throw DesignError("stopband attenuation must be positive dB");

    // Prewarp stopband edges, design at fs = 2 on Nyquist-normalized axis.
    const double w1 = 4.0 * std::tan(M_PI * (stop_lo / nyquist) / 2.0);
    const double w2 = 4.0 * std::tan(M_PI * (stop_hi / nyquist) / 2.0);
    const double wo = std::sqrt(w1 * w2);
    const double bw = w2 - w1;

    Zpk proto = cheb2_prototype(order, atten_db);
    Zpk bp = lp2bp(proto, wo, bw);
    Zpk dig = bilinear(bp, 2.0);

    for (const cplx& p : dig.p)
        if (std::abs(p) >= 1.0)
            throw DesignError("unstable design: pole radius " + std::to_string(std::abs(p)) +
                              " for band (" + std::to_string(lo) + "," + std::to_string(hi) + ")");
    return zpk_to_sos(dig);
}

Tensor segment_temporal(const TrialSet& data, const WindowSpec& spec) {
    data.validate();
    const std::size_t B = data.size(), C = data.channels(), T = data.samples();
    const std::size_t omega = spec.window_len;
    const std::size_t W = spec.count_windows(T);
    Tensor out({B, W, C, omega});
    for (std::size_t b = 0; b < B; ++b) {
        const Tensor& trial = data.trials[b];
        for (std::size_t w = 0; w < W; ++w)
            for (std::size_t c = 0; c < C; ++c) {
                const double* src = trial.data() + c * T + w * spec.stride;
                double* dst = out.data() + ((b * W + w) * C + c) * omega;
                std::copy(src, src + omega, dst);
            }
    }
    return out;
}

std::vector<BiquadCascade> make_filter_bank(const FilterBankSpec& spec, double sample_rate_hz) {
    if (spec.bands.empty()) throw ConfigError("filter bank: at least one band required");
    std::vector<BiquadCascade> bank;
    bank.reserve(spec.bands.size());
    for (const auto& band : spec.bands)
        bank.push_back(design_cheby2_bandpass(band, spec.order, spec.stopband_atten_db,
                                              spec.transition_hz, sample_rate_hz));
    return bank;
}

Tensor apply_filter_bank(const Tensor& x, const std::vector<BiquadCascade>& bank) {
    if (x.ndim() != 4) throw ShapeError("apply_filter_bank: expected [B,W,C,omega] input");
    const std::size_t B = x.dim(0), W = x.dim(1), C = x.dim(2), omega = x.dim(3);
    const std::size_t F = bank.size();
    Tensor out({B, W, F, C, omega});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t w = 0; w < W; ++w)
            for (std::size_t f = 0; f < F; ++f)
                for (std::size_t c = 0; c < C; ++c) {
                    const double* src = x.data() + ((b * W + w) * C + c) * omega;
                    double* dst = out.data() + (((b * W + w) * F + f) * C + c) * omega;
                    std::copy(src, src + omega, dst);
                    bank[f].filter_inplace(dst, omega);
                }
    return out;
}

Tensor apply_filter_bank(const Tensor& x, const FilterBankSpec& spec, double sample_rate_hz) {
    return apply_filter_bank(x, make_filter_bank(spec, sample_rate_hz));
}

Tensor preprocess(const TrialSet& data, const WindowSpec& wspec, const FilterBankSpec& fbspec) {
    return apply_filter_bank(segment_temporal(data, wspec), fbspec, data.sample_rate_hz);
}

}  // namespace neurophys
