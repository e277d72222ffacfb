#include "fr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace fr {

namespace {

constexpr char kMagic[4] = {'F', 'R', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf[i]) << (8 * i);
    return v;
}

void put_f32(std::ostream& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

float get_f32(std::istream& in) {
    const std::uint32_t bits = get_u32(in);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    const std::uint32_t n = get_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    return s;
}

// tensor = shape header (ndim, dims...) + f32 payload
void put_tensor(std::ostream& out, const std::vector<std::uint32_t>& dims,
                const double* data, std::size_t n) {
    put_u32(out, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) put_u32(out, d);
    for (std::size_t i = 0; i < n; ++i) put_f32(out, static_cast<float>(data[i]));
}

std::vector<std::uint32_t> get_tensor_header(std::istream& in) {
    const std::uint32_t ndim = get_u32(in);
    std::vector<std::uint32_t> dims(ndim);
    for (auto& d : dims) d = get_u32(in);
    return dims;
}

void get_tensor_payload(std::istream& in, double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<double>(get_f32(in));
}

}  // namespace

void save_checkpoint(const Net& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_string(out, net.arch);
    put_u32(out, static_cast<std::uint32_t>(net.input.c));
    put_u32(out, static_cast<std::uint32_t>(net.input.h));
    put_u32(out, static_cast<std::uint32_t>(net.input.w));

    put_u32(out, static_cast<std::uint32_t>(net.conv.size()));
    for (std::size_t i = 0; i < net.conv.size(); ++i) {
        const ConvLayer& c = net.conv[i];
        put_u32(out, static_cast<std::uint32_t>(c.stride));
        put_u32(out, static_cast<std::uint32_t>(c.pad));
        put_u32(out, static_cast<std::uint32_t>(net.pools[i].size));
        put_u32(out, static_cast<std::uint32_t>(net.pools[i].stride));
        put_tensor(out,
                   {static_cast<std::uint32_t>(c.out_ch),
                    static_cast<std::uint32_t>(c.in_ch),
                    static_cast<std::uint32_t>(c.ksize),
                    static_cast<std::uint32_t>(c.ksize)},
                   c.kernels.data(), c.kernels.size());
        put_tensor(out, {static_cast<std::uint32_t>(c.out_ch)}, c.bias.data(),
                   c.bias.size());
    }

    put_u32(out, static_cast<std::uint32_t>(net.dense.size()));
    for (const DenseLayer& l : net.dense) {
        put_u32(out, l.activation == Activation::relu ? 1u : 0u);
        put_f32(out, static_cast<float>(l.dropout_rate));
        put_tensor(out,
                   {static_cast<std::uint32_t>(l.weights.rows()),
                    static_cast<std::uint32_t>(l.weights.cols())},
                   l.weights.data().data(), l.weights.size());
    }
    if (!out) throw IoError("short write to checkpoint " + path);
}

Net load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("bad checkpoint magic in " + path);
    if (get_u32(in) != kVersion)
        throw IoError("unsupported checkpoint version in " + path);

    Net net;
    net.arch = get_string(in);
    net.input.c = get_u32(in);
    net.input.h = get_u32(in);
    net.input.w = get_u32(in);

    const std::uint32_t n_conv = get_u32(in);
    for (std::uint32_t i = 0; i < n_conv; ++i) {
        ConvLayer c;
        c.stride = get_u32(in);
        c.pad = get_u32(in);
        PoolLayer p;
        p.size = get_u32(in);
        p.stride = get_u32(in);
        auto kdims = get_tensor_header(in);
        if (kdims.size() != 4) throw IoError("malformed kernel tensor in " + path);
        c.out_ch = kdims[0];
        c.in_ch = kdims[1];
        c.ksize = kdims[2];
        c.kernels.resize(c.kernel_count());
        get_tensor_payload(in, c.kernels.data(), c.kernels.size());
        auto bdims = get_tensor_header(in);
        if (bdims.size() != 1 || bdims[0] != c.out_ch)
            throw IoError("malformed bias tensor in " + path);
        c.bias.resize(c.out_ch);
        get_tensor_payload(in, c.bias.data(), c.bias.size());
        net.conv.push_back(std::move(c));
        net.pools.push_back(p);
    }

    const std::uint32_t n_dense = get_u32(in);
    for (std::uint32_t i = 0; i < n_dense; ++i) {
        DenseLayer l;
        l.activation = get_u32(in) == 1 ? Activation::relu : Activation::linear;
        l.dropout_rate = static_cast<double>(get_f32(in));
        auto dims = get_tensor_header(in);
        if (dims.size() != 2) throw IoError("malformed dense tensor in " + path);
        l.weights = Mat(dims[0], dims[1]);
        get_tensor_payload(in, l.weights.data().data(), l.weights.size());
        net.dense.push_back(std::move(l));
    }
    if (!in) throw IoError("truncated checkpoint " + path);
    return net;
}

}  // namespace fr
