#pragma once

#include <string>

#include "neurophys/trainer.hpp"

namespace neurophys {

// NPNW checkpoint, little-endian: magic "NPNW", u32 version=1, u32 config
// length + config JSON (pipeline config, geometry, sample rate, class count),
// u32 blob count, then per blob: u32 name length + name, u32 ndim,
// u64 dims[], f64 data. Parameters and batchnorm running buffers are all
// stored, so save -> load -> forward is bit-identical.
void save_checkpoint(Pipeline& pipe, const std::string& path);
Pipeline load_checkpoint(const std::string& path);

// Config JSON used inside the checkpoint (exposed for manifests).
std::string pipeline_config_json(const Pipeline& pipe);

}  // namespace neurophys
