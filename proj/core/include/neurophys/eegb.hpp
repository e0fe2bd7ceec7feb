#pragma once

#include <string>

#include "neurophys/sigproc.hpp"

namespace neurophys {

// EEGB container, little-endian:
//   magic "EEGB", u32 version=1, u32 n_trials, u32 n_channels, u32 n_samples,
//   u32 n_classes, f32 sample_rate_hz; per trial: u8 label followed by
//   n_channels * n_samples f32 values, channel-major. No padding.
// Round trips are bit-exact. Malformed input raises FormatError with the
// offending byte offset.
TrialSet load_eegb(const std::string& path);
void save_eegb(const TrialSet& data, const std::string& path);

}  // namespace neurophys
