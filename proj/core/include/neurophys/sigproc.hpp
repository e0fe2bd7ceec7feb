#pragma once

#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

#include "neurophys/tensor.hpp"

namespace neurophys {

// Labeled multichannel time-series trials sharing one geometry.
struct TrialSet {
    std::vector<Tensor> trials;  // each [C, T]
    std::vector<std::size_t> labels;
    double sample_rate_hz = 0.0;
    std::size_t n_classes = 0;

    std::size_t size() const { return trials.size(); }
    std::size_t channels() const { return trials.empty() ? 0 : trials[0].dim(0); }
    std::size_t samples() const { return trials.empty() ? 0 : trials[0].dim(1); }
    // Checks shared geometry, label range and positive sample rate.
    void validate() const;
};

struct WindowSpec {
    std::size_t window_len = 0;  // omega, in samples
    std::size_t stride = 0;      // in samples

    std::size_t count_windows(std::size_t total_samples) const;
};

struct FilterBankSpec {
    std::vector<std::pair<double, double>> bands;  // (low_hz, high_hz)
    int order = 4;
    double stopband_atten_db = 30.0;
    double transition_hz = 2.0;

    // Nine 4 Hz bands spanning 4-40 Hz.
    static FilterBankSpec default_bank();
};

struct BiquadSection {
    double b0, b1, b2;  // numerator
    double a1, a2;      // denominator (a0 == 1)
};

// Cascade of stable second-order sections with an overall gain.
struct BiquadCascade {
    std::vector<BiquadSection> sections;
    double gain = 1.0;

    // Causal filtering with zero initial state (direct form II transposed).
    void filter_inplace(double* x, std::size_t n) const;
    std::vector<double> filter(const std::vector<double>& x) const;
    // H(e^{j 2 pi f / fs}).
    std::complex<double> response(double freq_hz, double sample_rate_hz) const;
    double max_pole_radius() const;
};

// Digital Chebyshev Type II bandpass. The stopband edges sit at
// (low - transition, high + transition) and reach >= atten_db there; the
// passband around the geometric band center stays within 3 dB of unity for
// sane specs. Throws DesignError on invalid edges or unstable poles.
BiquadCascade design_cheby2_bandpass(std::pair<double, double> band_hz, int order,
                                     double atten_db, double transition_hz,
                                     double sample_rate_hz);

// Eq-style windowing: w-th window covers samples [w*stride, w*stride+len).
// Trailing samples that do not fill a window are dropped.
Tensor segment_temporal(const TrialSet& data, const WindowSpec& spec);

std::vector<BiquadCascade> make_filter_bank(const FilterBankSpec& spec, double sample_rate_hz);

// x: [B,W,C,omega] -> [B,W,F,C,omega]; each band filtered independently per
// (trial, window, channel) from zero state.
Tensor apply_filter_bank(const Tensor& x, const FilterBankSpec& spec, double sample_rate_hz);
Tensor apply_filter_bank(const Tensor& x, const std::vector<BiquadCascade>& bank);

// segment_temporal followed by apply_filter_bank.
Tensor preprocess(const TrialSet& data, const WindowSpec& wspec, const FilterBankSpec& fbspec);

}  // namespace neurophys
