#include "couplegen/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

namespace couplegen {

namespace {

constexpr std::array<char, 4> kMagic = {'F', '3', '2', 'T'};

void put_u32(std::ostream& os, std::uint32_t v)
{
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::filesystem::path& path)
{
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError("f32t: truncated file " + path.string());
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::size_t element_count(const std::vector<std::uint32_t>& dims)
{
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

} // namespace

void write_f32t(const std::filesystem::path& path, const Tensor& tensor)
{
    if (element_count(tensor.dims) != tensor.values.size()) {
        throw ShapeError("write_f32t: dims do not match value count");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("write_f32t: cannot open " + path.string());
    }
    os.write(kMagic.data(), kMagic.size());
    put_u32(os, static_cast<std::uint32_t>(tensor.dims.size()));
    for (auto d : tensor.dims) {
        put_u32(os, d);
    }
    for (float v : tensor.values) {
        put_u32(os, std::bit_cast<std::uint32_t>(v));
    }
    if (!os) {
        throw std::runtime_error("write_f32t: write failed for " + path.string());
    }
}

Tensor read_f32t(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("read_f32t: cannot open " + path.string());
    }
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
        throw FormatError("f32t: bad magic in " + path.string());
    }
    Tensor t;
    const auto ndim = get_u32(is, path);
    for (std::uint32_t i = 0; i < ndim; ++i) {
        t.dims.push_back(get_u32(is, path));
    }
    const std::size_t n = element_count(t.dims);
    t.values.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        t.values.push_back(std::bit_cast<float>(get_u32(is, path)));
    }
    if (is.peek() != std::char_traits<char>::eof()) {
        throw FormatError("f32t: trailing bytes in " + path.string());
    }
    return t;
}

Tensor to_tensor(const Matrix& m)
{
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    t.values.reserve(m.size());
    for (double v : m.data()) {
        t.values.push_back(static_cast<float>(v));
    }
    return t;
}

Matrix to_matrix(const Tensor& t)
{
    if (t.dims.size() != 2) {
        throw ShapeError("to_matrix: expected a 2-D tensor, got " + std::to_string(t.dims.size()) +
                         " dims");
    }
    return Matrix(t.dims[0], t.dims[1], std::vector<double>(t.values.begin(), t.values.end()));
}

} // namespace couplegen
