#include "neurophys/eegb.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "neurophys/errors.hpp"

namespace neurophys {

namespace {

constexpr char kMagic[4] = {'E', 'E', 'G', 'B'};
constexpr std::uint32_t kVersion = 1;

// All reads/writes are little-endian regardless of host order.
bool host_is_little_endian() {
    const std::uint16_t probe = 1;
    unsigned char byte0;
    std::memcpy(&byte0, &probe, 1);
    return byte0 == 1;
}

template <typename T>
void write_le(std::ostream& out, T value) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if (!host_is_little_endian()) std::reverse(buf, buf + sizeof(T));
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

class Reader {
   public:
    Reader(std::istream& in, const std::string& path) : in_(in), path_(path) {}

    template <typename T>
    T read(const char* what) {
        const std::size_t at = offset_;
        unsigned char buf[sizeof(T)];
        in_.read(reinterpret_cast<char*>(buf), sizeof(T));
        if (in_.gcount() != static_cast<std::streamsize>(sizeof(T)))
            throw FormatError(path_ + ": truncated while reading " + std::string(what), at);
        if (!host_is_little_endian()) std::reverse(buf, buf + sizeof(T));
        T value;
        std::memcpy(&value, buf, sizeof(T));
        offset_ += sizeof(T);
        return value;
    }

    std::size_t offset() const { return offset_; }

   private:
    std::istream& in_;
    std::string path_;
    std::size_t offset_ = 0;
};

}  // namespace

TrialSet load_eegb(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    Reader r(in, path);

    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.read<std::uint8_t>("magic"));
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path + ": bad magic", 0);
    const std::uint32_t version = r.read<std::uint32_t>("version");
    if (version != kVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version), 4);

    TrialSet ts;
    const std::uint32_t n_trials = r.read<std::uint32_t>("n_trials");
    const std::uint32_t n_channels = r.read<std::uint32_t>("n_channels");
    const std::uint32_t n_samples = r.read<std::uint32_t>("n_samples");
    ts.n_classes = r.read<std::uint32_t>("n_classes");
    const std::size_t rate_offset = r.offset();
    ts.sample_rate_hz = r.read<float>("sample_rate_hz");
    if (!(ts.sample_rate_hz > 0.0f))
        throw FormatError(path + ": sample rate must be positive", rate_offset);

    ts.trials.reserve(n_trials);
    ts.labels.reserve(n_trials);
    for (std::uint32_t t = 0; t < n_trials; ++t) {
        const std::size_t label_offset = r.offset();
        const std::uint8_t label = r.read<std::uint8_t>("label");
        if (label >= ts.n_classes)
            throw FormatError(path + ": trial " + std::to_string(t) + " label " +
                                  std::to_string(label) + " >= n_classes " +
                                  std::to_string(ts.n_classes),
                              label_offset);
        Tensor trial({n_channels, n_samples});
        for (std::size_t i = 0; i < trial.size(); ++i)
            trial[i] = static_cast<double>(r.read<float>("sample"));
        ts.labels.push_back(label);
        ts.trials.push_back(std::move(trial));
    }
    return ts;
}

void save_eegb(const TrialSet& data, const std::string& path) {
    data.validate();
    if (data.size() > UINT32_MAX || data.n_classes > 255)
        throw DataError("trial set too large for EEGB container");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out.write(kMagic, 4);
    write_le<std::uint32_t>(out, kVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.channels()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.samples()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.n_classes));
    write_le<float>(out, static_cast<float>(data.sample_rate_hz));
    for (std::size_t t = 0; t < data.size(); ++t) {
        write_le<std::uint8_t>(out, static_cast<std::uint8_t>(data.labels[t]));
        const Tensor& trial = data.trials[t];
        for (std::size_t i = 0; i < trial.size(); ++i)
            write_le<float>(out, static_cast<float>(trial[i]));
    }
    if (!out) throw DataError("write failed for " + path);
}

}  // namespace neurophys
