#include "metainv/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace metainv {

namespace {

static_assert(std::endian::native == std::endian::little, "container format is little-endian");

constexpr char kTensorMagic[8] = {'M', 'I', 'N', 'V', 'T', 'N', 'S', '\n'};
constexpr char kWeightMagic[8] = {'M', 'I', 'N', 'V', 'W', 'G', 'T', '\n'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FileError(std::string("unexpected end of file while reading ") + what);
    return v;
}

void write_tensor_body(std::ostream& os, const Tensor& t) {
    write_pod(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) write_pod(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Tensor read_tensor_body(std::istream& is, bool validate_finite) {
    const auto rank = read_pod<std::uint32_t>(is, "tensor rank");
    if (rank > 8) throw FileError("tensor rank " + std::to_string(rank) + " is implausible");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(is, "tensor dims"));
    const std::size_t count = shape_numel(shape);
    std::vector<double> data(count);
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) throw FileError("unexpected end of file while reading tensor payload");
    return validate_finite ? Tensor::from_external(std::move(shape), std::move(data))
                           : Tensor(std::move(shape), std::move(data));
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FileError("cannot open " + path.string() + " for writing");
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FileError("cannot open " + path.string() + " for reading");
    return is;
}

void check_magic(std::istream& is, const char (&magic)[8], const char* kind) {
    char buf[8];
    is.read(buf, 8);
    if (!is || std::memcmp(buf, magic, 8) != 0)
        throw FileError(std::string("not a ") + kind + " file (bad magic)");
    const auto version = read_pod<std::uint32_t>(is, "format version");
    if (version != kFormatVersion)
        throw FileError(std::string(kind) + " format version " + std::to_string(version) + " unsupported");
}

} // namespace

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os = open_out(path);
    os.write(kTensorMagic, 8);
    write_pod(os, kFormatVersion);
    write_tensor_body(os, t);
    if (!os) throw FileError("write failed for " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream is = open_in(path);
    check_magic(is, kTensorMagic, "tensor");
    return read_tensor_body(is, /*validate_finite=*/true);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream os = open_out(path);
    os.write(kWeightMagic, 8);
    write_pod(os, kFormatVersion);
    const MetaInvConfig& c = ckpt.config;
    write_pod(os, static_cast<std::uint32_t>(c.hqs.K));
    write_pod(os, static_cast<std::uint32_t>(ckpt.weights.depth_s));
    write_pod(os, static_cast<std::uint32_t>(ckpt.weights.width));
    write_pod(os, static_cast<std::uint8_t>(ckpt.weights.shared ? 1 : 0));
    write_pod(os, c.hqs.lambda0);
    write_pod(os, c.hqs.d_lambda);
    write_pod(os, c.hqs.gamma0);
    write_pod(os, c.hqs.d_gamma);
    write_pod(os, c.hqs.gamma_floor);
    write_pod(os, c.hqs.lambda_floor);
    write_pod(os, static_cast<std::uint32_t>(c.hqs.L));
    write_pod(os, static_cast<std::uint8_t>(c.hqs.threshold_mode == HqsParams::ThresholdMode::Direct ? 1 : 0));
    write_pod(os, c.mu1);
    write_pod(os, c.mu2);

    const auto params = ckpt.weights.params();
    write_pod(os, static_cast<std::uint32_t>(params.size()));
    for (const Tensor* t : params) write_tensor_body(os, *t);
    if (!os) throw FileError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is = open_in(path);
    check_magic(is, kWeightMagic, "weight checkpoint");
    Checkpoint ckpt;
    MetaInvConfig& c = ckpt.config;
    c.hqs.K = read_pod<std::uint32_t>(is, "K");
    const auto depth_s = read_pod<std::uint32_t>(is, "S");
    const auto width = read_pod<std::uint32_t>(is, "width");
    const bool shared = read_pod<std::uint8_t>(is, "shared flag") != 0;
    c.hqs.lambda0 = read_pod<double>(is, "lambda0");
    c.hqs.d_lambda = read_pod<double>(is, "d_lambda");
    c.hqs.gamma0 = read_pod<double>(is, "gamma0");
    c.hqs.d_gamma = read_pod<double>(is, "d_gamma");
    c.hqs.gamma_floor = read_pod<double>(is, "gamma_floor");
    c.hqs.lambda_floor = read_pod<double>(is, "lambda_floor");
    c.hqs.L = read_pod<std::uint32_t>(is, "L");
    c.hqs.threshold_mode = read_pod<std::uint8_t>(is, "threshold mode") != 0 ? HqsParams::ThresholdMode::Direct
                                                                             : HqsParams::ThresholdMode::Ratio;
    c.mu1 = read_pod<double>(is, "mu1");
    c.mu2 = read_pod<double>(is, "mu2");
    c.depth_s = depth_s;
    c.width = width;
    c.shared = shared;

    ckpt.weights = InitializerWeights::zeros(c.hqs.K, depth_s, width, shared);
    auto params = ckpt.weights.params();
    const auto count = read_pod<std::uint32_t>(is, "tensor count");
    if (count != params.size())
        throw FileError("checkpoint tensor count " + std::to_string(count) + " does not match architecture (" +
                        std::to_string(params.size()) + ")");
    for (Tensor* t : params) {
        Tensor loaded = read_tensor_body(is, /*validate_finite=*/false);
        if (!shape_equal(loaded.shape(), t->shape()))
            throw FileError("checkpoint tensor shape " + shape_str(loaded.shape()) + " does not match expected " +
                            shape_str(t->shape()));
        *t = std::move(loaded);
    }
    return ckpt;
}

void save_pgm16(const std::filesystem::path& path, const Tensor& image) {
    if (image.rank() != 2) throw std::invalid_argument("save_pgm16: 2-D image required");
    double lo = image[0], hi = image[0];
    for (double v : image.span()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double range = hi > lo ? hi - lo : 1.0;
    std::ofstream os = open_out(path);
    os << "P5\n" << image.dim(1) << " " << image.dim(0) << "\n65535\n";
    for (double v : image.span()) {
        const auto q = static_cast<std::uint16_t>(std::clamp((v - lo) / range, 0.0, 1.0) * 65535.0 + 0.5);
        const unsigned char bytes[2] = {static_cast<unsigned char>(q >> 8), static_cast<unsigned char>(q & 0xFF)};
        os.write(reinterpret_cast<const char*>(bytes), 2);
    }
    if (!os) throw FileError("write failed for " + path.string());
}

} // namespace metainv
