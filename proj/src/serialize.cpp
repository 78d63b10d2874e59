#include "fedbayes/serialize.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fedbayes/errors.hpp"

namespace fedbayes::bnn {

namespace {

constexpr std::uint32_t kMagic = 0x46424E54; // "FBNT"
constexpr std::uint8_t kVersion = 1;

enum Tag : std::uint8_t { tag_muW = 0, tag_rhoW = 1, tag_mub = 2, tag_rhob = 3 };
const char* const kTagNames[4] = {"muW", "rhoW", "mub", "rhob"};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v & 0xFF),
                            static_cast<unsigned char>((v >> 8) & 0xFF),
                            static_cast<unsigned char>((v >> 16) & 0xFF),
                            static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char buf[4];
    if (!is.read(reinterpret_cast<char*>(buf), 4))
        throw FormatError("net container truncated while reading u32");
    return static_cast<std::uint32_t>(buf[0]) |
           (static_cast<std::uint32_t>(buf[1]) << 8) |
           (static_cast<std::uint32_t>(buf[2]) << 16) |
           (static_cast<std::uint32_t>(buf[3]) << 24);
}

void put_f64(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

double get_f64(std::istream& is) {
    unsigned char buf[8];
    if (!is.read(reinterpret_cast<char*>(buf), 8))
        throw FormatError("net container truncated while reading f64");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

struct Entry {
    std::uint32_t layer;
    std::uint8_t tag;
    std::uint32_t rows;
    std::uint32_t cols; // 1 for vectors
    const std::vector<double>* values;
};

std::vector<Entry> flatten(const VariationalNet& net) {
    std::vector<Entry> entries;
    for (std::uint32_t l = 0; l < net.layers.size(); ++l) {
        const auto& vl = net.layers[l];
        entries.push_back({l, tag_muW, static_cast<std::uint32_t>(vl.mu_W.rows),
                           static_cast<std::uint32_t>(vl.mu_W.cols), &vl.mu_W.v});
        entries.push_back({l, tag_rhoW, static_cast<std::uint32_t>(vl.rho_W.rows),
                           static_cast<std::uint32_t>(vl.rho_W.cols), &vl.rho_W.v});
        entries.push_back({l, tag_mub, static_cast<std::uint32_t>(vl.mu_b.len()), 1,
                           &vl.mu_b.v});
        entries.push_back({l, tag_rhob, static_cast<std::uint32_t>(vl.rho_b.len()), 1,
                           &vl.rho_b.v});
    }
    return entries;
}

// Rebuilds a net from flat entries; every layer must carry all four tensors.
VariationalNet assemble(Mode mode, std::uint32_t n_layers,
                        const std::vector<std::tuple<std::uint32_t, std::uint8_t,
                                                     std::uint32_t, std::uint32_t,
                                                     std::vector<double>>>& entries) {
    VariationalNet net;
    net.mode = mode;
    net.layers.resize(n_layers);
    std::vector<int> seen(n_layers, 0);
    for (const auto& [layer, tag, rows, cols, values] : entries) {
        if (layer >= n_layers)
            throw FormatError("net container entry names layer " + std::to_string(layer) +
                              " beyond layer count " + std::to_string(n_layers));
        auto& vl = net.layers[layer];
        switch (tag) {
        case tag_muW:
            vl.mu_W.rows = rows; vl.mu_W.cols = cols; vl.mu_W.v = values; break;
        case tag_rhoW:
            vl.rho_W.rows = rows; vl.rho_W.cols = cols; vl.rho_W.v = values; break;
        case tag_mub: vl.mu_b.v = values; break;
        case tag_rhob: vl.rho_b.v = values; break;
        default:
            throw FormatError("net container has unknown tensor tag " + std::to_string(tag));
        }
        seen[layer] |= 1 << tag;
    }
    for (std::uint32_t l = 0; l < n_layers; ++l)
        if (seen[l] != 0xF)
            throw FormatError("net container layer " + std::to_string(l) +
                              " is missing tensors");
    return net;
}

} // namespace

void save_net(const VariationalNet& net, std::ostream& os) {
    put_u32(os, kMagic);
    os.put(static_cast<char>(kVersion));
    os.put(net.mode == Mode::bayesian ? 'B' : 'D');
    put_u32(os, static_cast<std::uint32_t>(net.layers.size()));
    const auto entries = flatten(net);
    put_u32(os, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put_u32(os, e.layer);
        os.put(static_cast<char>(e.tag));
        put_u32(os, e.rows);
        put_u32(os, e.cols);
        for (double d : *e.values) put_f64(os, d);
    }
    if (!os) throw IoError("failed writing net container");
}

VariationalNet load_net(std::istream& is) {
    const std::uint32_t magic = get_u32(is);
    if (magic != kMagic) {
        std::ostringstream oss;
        oss << "bad net container magic 0x" << std::hex << magic << ", expected 0x"
            << kMagic;
        throw FormatError(oss.str());
    }
    const int version = is.get();
    if (version != kVersion)
        throw FormatError("unsupported net container version " + std::to_string(version));
    const int mode_ch = is.get();
    if (mode_ch != 'B' && mode_ch != 'D')
        throw FormatError("net container has unknown mode byte");
    const std::uint32_t n_layers = get_u32(is);
    const std::uint32_t n_entries = get_u32(is);
    std::vector<std::tuple<std::uint32_t, std::uint8_t, std::uint32_t, std::uint32_t,
                           std::vector<double>>> entries;
    entries.reserve(n_entries);
    for (std::uint32_t i = 0; i < n_entries; ++i) {
        const std::uint32_t layer = get_u32(is);
        const int tag = is.get();
        if (tag < 0) throw FormatError("net container truncated at entry header");
        const std::uint32_t rows = get_u32(is);
        const std::uint32_t cols = get_u32(is);
        std::vector<double> values(static_cast<std::size_t>(rows) * cols);
        for (double& d : values) d = get_f64(is);
        entries.emplace_back(layer, static_cast<std::uint8_t>(tag), rows, cols,
                             std::move(values));
    }
    return assemble(mode_ch == 'B' ? Mode::bayesian : Mode::deterministic, n_layers,
                    entries);
}

void save_net_text(const VariationalNet& net, std::ostream& os) {
    char buf[64];
    os << "fbnt " << static_cast<int>(kVersion) << " "
       << (net.mode == Mode::bayesian ? "bayesian" : "deterministic") << " "
       << net.layers.size() << "\n";
    for (const auto& e : flatten(net)) {
        os << e.layer << " " << kTagNames[e.tag] << " " << e.rows << " " << e.cols;
        for (double d : *e.values) {
            std::snprintf(buf, sizeof buf, " %.17g", d);
            os << buf;
        }
        os << "\n";
    }
    if (!os) throw IoError("failed writing textual net container");
}

VariationalNet load_net_text(std::istream& is) {
    std::string magic, mode_str;
    int version = 0;
    std::size_t n_layers = 0;
    if (!(is >> magic >> version >> mode_str >> n_layers) || magic != "fbnt")
        throw FormatError("bad textual net header, expected 'fbnt <version> <mode> <layers>'");
    if (version != kVersion)
        throw FormatError("unsupported textual net version " + std::to_string(version));
    if (mode_str != "bayesian" && mode_str != "deterministic")
        throw FormatError("unknown textual net mode '" + mode_str + "'");
    std::vector<std::tuple<std::uint32_t, std::uint8_t, std::uint32_t, std::uint32_t,
                           std::vector<double>>> entries;
    std::uint32_t layer, rows, cols;
    std::string tag_name;
    while (is >> layer >> tag_name >> rows >> cols) {
        int tag = -1;
        for (int t = 0; t < 4; ++t)
            if (tag_name == kTagNames[t]) tag = t;
        if (tag < 0) throw FormatError("unknown tensor tag '" + tag_name + "'");
        std::vector<double> values(static_cast<std::size_t>(rows) * cols);
        for (double& d : values)
            if (!(is >> d)) throw FormatError("textual net truncated inside values");
        entries.emplace_back(layer, static_cast<std::uint8_t>(tag), rows, cols,
                             std::move(values));
    }
    return assemble(mode_str == "bayesian" ? Mode::bayesian : Mode::deterministic,
                    static_cast<std::uint32_t>(n_layers), entries);
}

void save_net_file(const VariationalNet& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    save_net(net, os);
}

VariationalNet load_net_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    return load_net(is);
}

} // namespace fedbayes::bnn
