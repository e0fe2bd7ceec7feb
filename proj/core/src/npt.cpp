#include "neurophys/npt.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "neurophys/errors.hpp"

namespace neurophys {

namespace {

constexpr char kMagic[4] = {'N', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

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

template <typename T>
T read_le(std::istream& in, std::size_t& offset, const std::string& path, const char* what) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(T)))
        throw FormatError(path + ": truncated while reading " + std::string(what), offset);
    if (!host_is_little_endian()) std::reverse(buf, buf + sizeof(T));
    T value;
    std::memcpy(&value, buf, sizeof(T));
    offset += sizeof(T);
    return value;
}

}  // namespace

PreprocessedSet PreprocessedSet::subset(const std::vector<std::size_t>& indices) const {
    if (labels.empty()) throw UsageError("subset of an empty set");
    const std::size_t row = x.size() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = indices.size();
    PreprocessedSet out;
    out.x = Tensor(shape);
    out.sample_rate_hz = sample_rate_hz;
    out.n_classes = n_classes;
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        if (src >= labels.size()) throw UsageError("subset index out of range");
        std::memcpy(out.x.data() + i * row, x.data() + src * row, row * sizeof(double));
        out.labels.push_back(labels[src]);
    }
    return out;
}

PreprocessedSet load_npt(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::size_t offset = 0;

    char magic[4];
    for (char& c : magic)
        c = static_cast<char>(read_le<std::uint8_t>(in, offset, path, "magic"));
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path + ": bad magic", 0);
    const std::uint32_t version = read_le<std::uint32_t>(in, offset, path, "version");
    if (version != kVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version), 4);

    const std::uint32_t ndim = read_le<std::uint32_t>(in, offset, path, "ndim");
    if (ndim == 0 || ndim > 8) throw FormatError(path + ": implausible rank", offset - 4);
    Shape shape(ndim);
    for (auto& d : shape)
        d = static_cast<std::size_t>(read_le<std::uint64_t>(in, offset, path, "dim"));

    PreprocessedSet set;
    set.n_classes = read_le<std::uint32_t>(in, offset, path, "n_classes");
    set.sample_rate_hz = read_le<double>(in, offset, path, "sample_rate_hz");
    const std::uint32_t n_labels = read_le<std::uint32_t>(in, offset, path, "n_labels");
    if (n_labels != shape[0])
        throw FormatError(path + ": label count does not match leading dim", offset - 4);
    set.labels.reserve(n_labels);
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        const std::size_t at = offset;
        const std::uint8_t label = read_le<std::uint8_t>(in, offset, path, "label");
        if (label >= set.n_classes)
            throw FormatError(path + ": label " + std::to_string(label) + " >= n_classes " +
                                  std::to_string(set.n_classes),
                              at);
        set.labels.push_back(label);
    }
    set.x = Tensor(shape);
    for (std::size_t i = 0; i < set.x.size(); ++i)
        set.x[i] = read_le<double>(in, offset, path, "payload");
    return set;
}

void save_npt(const PreprocessedSet& set, const std::string& path) {
    if (set.labels.size() != (set.x.ndim() ? set.x.dim(0) : 0))
        throw DataError("npt: label count does not match leading dim");
    if (set.n_classes > 255) throw DataError("npt: class count exceeds container limit");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out.write(kMagic, 4);
    write_le<std::uint32_t>(out, kVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.x.ndim()));
    for (std::size_t d = 0; d < set.x.ndim(); ++d)
        write_le<std::uint64_t>(out, static_cast<std::uint64_t>(set.x.dim(d)));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.n_classes));
    write_le<double>(out, set.sample_rate_hz);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.labels.size()));
    for (std::size_t label : set.labels) write_le<std::uint8_t>(out, static_cast<std::uint8_t>(label));
    for (std::size_t i = 0; i < set.x.size(); ++i) write_le<double>(out, set.x[i]);
    if (!out) throw DataError("write failed for " + path);
}

}  // namespace neurophys
