#include "manifest.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "neurophys/errors.hpp"

namespace neurophys::cli {

std::uint64_t file_fnv1a(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::uint64_t h = 1469598103934665603ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
        if (!in) break;
    }
    return h;
}

Manifest::Manifest(std::string command, std::uint64_t seed)
    : command_(std::move(command)), seed_(seed) {}

void Manifest::set_config_text(std::string config_ini) { config_ini_ = std::move(config_ini); }
void Manifest::add_input(const std::string& path) { inputs_.push_back(path); }
void Manifest::add_output(const std::string& path) { outputs_.push_back(path); }

void Manifest::write(const std::string& primary_output, double wall_time_sec) const {
    nlohmann::json j;
    j["command"] = command_;
    j["seed"] = seed_;
    j["config"] = config_ini_;
    j["wall_time_sec"] = wall_time_sec;
    auto hashed = [](const std::vector<std::string>& paths) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& p : paths) {
            char hex[32];
            std::snprintf(hex, sizeof(hex), "%016llx",
                          static_cast<unsigned long long>(file_fnv1a(p)));
            arr.push_back({{"path", p}, {"fnv1a64", hex}});
        }
        return arr;
    };
    j["inputs"] = hashed(inputs_);
    j["outputs"] = hashed(outputs_);

    const std::string path = primary_output + ".manifest.json";
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw DataError("cannot open " + tmp + " for writing");
        out << j.dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw DataError("cannot move manifest into place at " + path);
}

}  // namespace neurophys::cli
