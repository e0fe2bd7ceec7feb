#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace neurophys::cli {

// FNV-1a 64 of the file contents; throws DataError if unreadable.
std::uint64_t file_fnv1a(const std::string& path);

// Run manifest written next to every command output: the command, the fully
// resolved configuration (same key = value text the --config flag consumes),
// seed, input/output paths with content hashes, and wall time. Written
// atomically (tmp + rename) to `<primary_output>.manifest.json`.
class Manifest {
   public:
    Manifest(std::string command, std::uint64_t seed);

    void set_config_text(std::string config_ini);
    void add_input(const std::string& path);
    void add_output(const std::string& path);
    void write(const std::string& primary_output, double wall_time_sec) const;

   private:
    std::string command_;
    std::uint64_t seed_;
    std::string config_ini_;
    std::vector<std::string> inputs_, outputs_;
};

}  // namespace neurophys::cli
