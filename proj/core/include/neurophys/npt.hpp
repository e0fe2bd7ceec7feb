#pragma once

#include <string>
#include <vector>

#include "neurophys/tensor.hpp"

namespace neurophys {

// Preprocessed dataset: the band-decomposed windowed tensor plus labels.
struct PreprocessedSet {
    Tensor x;  // [B, W, F, C, omega]
    std::vector<std::size_t> labels;
    double sample_rate_hz = 0.0;
    std::size_t n_classes = 0;

    std::size_t size() const { return labels.size(); }
    PreprocessedSet subset(const std::vector<std::size_t>& indices) const;
};

// NPT1 container, little-endian: magic "NPT1", u32 version=1, u32 ndim,
// u64 dims[ndim], u32 n_classes, f64 sample_rate_hz, u32 n_labels,
// u8 labels[n_labels], then the f64 payload. Round trips are bit-exact.
PreprocessedSet load_npt(const std::string& path);
void save_npt(const PreprocessedSet& set, const std::string& path);

}  // namespace neurophys
