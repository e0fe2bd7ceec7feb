#include "neurophys/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "neurophys/errors.hpp"

namespace neurophys {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'N', 'P', 'N', 'W'};
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

json config_to_json(const Pipeline& pipe) {
    const PipelineConfig& c = pipe.cfg;
    json bands = json::array();
    for (const auto& [lo, hi] : c.filter_bank.bands) bands.push_back({lo, hi});
    return json{
        {"version", kVersion},
        {"window_sec", c.window_sec},
        {"stride_sec", c.stride_sec},
        {"filter_bank",
         {{"bands", bands},
          {"order", c.filter_bank.order},
          {"stopband_atten_db", c.filter_bank.stopband_atten_db},
          {"transition_hz", c.filter_bank.transition_hz}}},
        {"pinn",
         {{"f1", c.pinn.f1},
          {"f2", c.pinn.f2},
          {"k1", {c.pinn.k1[0], c.pinn.k1[1]}},
          {"k2", {c.pinn.k2[0], c.pinn.k2[1]}},
          {"p1", {c.pinn.p1[0], c.pinn.p1[1]}},
          {"p2", {c.pinn.p2[0], c.pinn.p2[1]}},
          {"pool_kernel", c.pinn.pool_kernel},
          {"pool_stride", c.pinn.pool_stride},
          {"hidden_dim", c.pinn.hidden_dim},
          {"layers", c.pinn.layers},
          {"heads", c.pinn.heads},
          {"dropout", c.pinn.dropout},
          {"num_nodes", pipe.pinn.config().num_nodes},
          {"data_points", pipe.pinn.config().data_points}}},
        {"featx",
         {{"f1", c.featx.f1},
          {"f2", c.featx.f2},
          {"kernel", c.featx.kernel},
          {"pad", c.featx.pad},
          {"pool_kernel", c.featx.pool_kernel},
          {"pool_stride", c.featx.pool_stride},
          {"latent_dim", c.featx.latent_dim}}},
        {"fhn",
         {{"epsilon", c.fhn.epsilon},
          {"a", c.fhn.a},
          {"b", c.fhn.b},
          {"stimulus", c.fhn.stimulus},
          {"residual_dt", pipe.fhn.dt}}},
        {"coupling_strength", c.coupling_strength},
        {"geometry",
         {{"windows", pipe.geom.windows},
          {"bands", pipe.geom.bands},
          {"channels", pipe.geom.channels},
          {"window_len", pipe.geom.window_len}}},
        {"sample_rate_hz", pipe.sample_rate_hz},
        {"n_classes", pipe.n_classes},
    };
}

Pipeline pipeline_from_json(const json& j) {
    PipelineConfig c;
    c.window_sec = j.at("window_sec").get<double>();
    c.stride_sec = j.at("stride_sec").get<double>();
    c.filter_bank.bands.clear();
    for (const auto& band : j.at("filter_bank").at("bands"))
        c.filter_bank.bands.emplace_back(band.at(0).get<double>(), band.at(1).get<double>());
    c.filter_bank.order = j.at("filter_bank").at("order").get<int>();
    c.filter_bank.stopband_atten_db = j.at("filter_bank").at("stopband_atten_db").get<double>();
    c.filter_bank.transition_hz = j.at("filter_bank").at("transition_hz").get<double>();
    const json& p = j.at("pinn");
    c.pinn.f1 = p.at("f1").get<std::size_t>();
    c.pinn.f2 = p.at("f2").get<std::size_t>();
    c.pinn.k1 = {p.at("k1").at(0).get<std::size_t>(), p.at("k1").at(1).get<std::size_t>()};
    c.pinn.k2 = {p.at("k2").at(0).get<std::size_t>(), p.at("k2").at(1).get<std::size_t>()};
    c.pinn.p1 = {p.at("p1").at(0).get<std::size_t>(), p.at("p1").at(1).get<std::size_t>()};
    c.pinn.p2 = {p.at("p2").at(0).get<std::size_t>(), p.at("p2").at(1).get<std::size_t>()};
    c.pinn.pool_kernel = p.at("pool_kernel").get<std::size_t>();
    c.pinn.pool_stride = p.at("pool_stride").get<std::size_t>();
    c.pinn.hidden_dim = p.at("hidden_dim").get<std::size_t>();
    c.pinn.layers = p.at("layers").get<std::size_t>();
    c.pinn.heads = p.at("heads").get<std::size_t>();
    c.pinn.dropout = p.at("dropout").get<double>();
    c.pinn.num_nodes = p.at("num_nodes").get<std::size_t>();
    c.pinn.data_points = p.at("data_points").get<std::size_t>();
    const json& f = j.at("featx");
    c.featx.f1 = f.at("f1").get<std::size_t>();
    c.featx.f2 = f.at("f2").get<std::size_t>();
    c.featx.kernel = f.at("kernel").get<std::size_t>();
    c.featx.pad = f.at("pad").get<std::size_t>();
    c.featx.pool_kernel = f.at("pool_kernel").get<std::size_t>();
    c.featx.pool_stride = f.at("pool_stride").get<std::size_t>();
    c.featx.latent_dim = f.at("latent_dim").get<std::size_t>();
    c.fhn.epsilon = j.at("fhn").at("epsilon").get<double>();
    c.fhn.a = j.at("fhn").at("a").get<double>();
    c.fhn.b = j.at("fhn").at("b").get<double>();
    c.fhn.stimulus = j.at("fhn").at("stimulus").get<double>();
    c.residual_dt = j.at("fhn").at("residual_dt").get<double>();
    c.coupling_strength = j.at("coupling_strength").get<double>();
    InputGeometry geom;
    geom.windows = j.at("geometry").at("windows").get<std::size_t>();
    geom.bands = j.at("geometry").at("bands").get<std::size_t>();
    geom.channels = j.at("geometry").at("channels").get<std::size_t>();
    geom.window_len = j.at("geometry").at("window_len").get<std::size_t>();
    return build_pipeline(c, geom, j.at("sample_rate_hz").get<double>(),
                          j.at("n_classes").get<std::size_t>(), 0);
}

}  // namespace

std::string pipeline_config_json(const Pipeline& pipe) { return config_to_json(pipe).dump(); }

void save_checkpoint(Pipeline& pipe, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out.write(kMagic, 4);
    write_le<std::uint32_t>(out, kVersion);
    const std::string cfg = config_to_json(pipe).dump();
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

    auto params = pipe.named_parameters();
    auto buffers = pipe.named_buffers();
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size() + buffers.size()));
    auto write_blob = [&out](const std::string& name, const Tensor& t) {
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
        for (std::size_t d = 0; d < t.ndim(); ++d)
            write_le<std::uint64_t>(out, static_cast<std::uint64_t>(t.dim(d)));
        for (std::size_t i = 0; i < t.size(); ++i) write_le<double>(out, t[i]);
    };
    for (auto& [name, p] : params) write_blob(name, p->value);
    for (auto& [name, b] : buffers) write_blob(name, *b);
    if (!out) throw DataError("write failed for " + path);
}

Pipeline load_checkpoint(const std::string& path) {
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

    const std::uint32_t cfg_len = read_le<std::uint32_t>(in, offset, path, "config length");
    std::string cfg(cfg_len, '\0');
    in.read(cfg.data(), cfg_len);
    if (in.gcount() != static_cast<std::streamsize>(cfg_len))
        throw FormatError(path + ": truncated config record", offset);
    offset += cfg_len;

    Pipeline pipe;
    try {
        pipe = pipeline_from_json(json::parse(cfg));
    } catch (const json::exception& e) {
        throw FormatError(path + ": bad config record: " + e.what(), 12);
    }

    auto params = pipe.named_parameters();
    auto buffers = pipe.named_buffers();
    auto find_target = [&](const std::string& name) -> Tensor* {
        for (auto& [n, p] : params)
            if (n == name) return &p->value;
        for (auto& [n, b] : buffers)
            if (n == name) return b;
        return nullptr;
    };

    const std::uint32_t blobs = read_le<std::uint32_t>(in, offset, path, "blob count");
    if (blobs != params.size() + buffers.size())
        throw FormatError(path + ": blob count " + std::to_string(blobs) + " != expected " +
                              std::to_string(params.size() + buffers.size()),
                          offset - 4);
    for (std::uint32_t b = 0; b < blobs; ++b) {
        const std::size_t name_at = offset;
        const std::uint32_t name_len = read_le<std::uint32_t>(in, offset, path, "name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len))
            throw FormatError(path + ": truncated blob name", offset);
        offset += name_len;
        const std::uint32_t ndim = read_le<std::uint32_t>(in, offset, path, "blob rank");
        Shape shape(ndim);
        for (auto& d : shape)
            d = static_cast<std::size_t>(read_le<std::uint64_t>(in, offset, path, "blob dim"));
        Tensor* target = find_target(name);
        if (!target) throw FormatError(path + ": unknown blob '" + name + "'", name_at);
        if (target->shape() != shape)
            throw FormatError(path + ": blob '" + name + "' has shape " + shape_str(shape) +
                                  ", model expects " + shape_str(target->shape()),
                              name_at);
        for (std::size_t i = 0; i < target->size(); ++i)
            (*target)[i] = read_le<double>(in, offset, path, "blob data");
    }
    return pipe;
}

}  // namespace neurophys
