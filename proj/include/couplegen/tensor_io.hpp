#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "couplegen/numerics.hpp"

namespace couplegen {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// In-memory form of a `.f32t` file: "F32T", u32 ndim, ndim u32 dims, then
/// row-major f32 values, all little-endian.
struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;
};

void write_f32t(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_f32t(const std::filesystem::path& path);

/// Narrows to 32-bit storage as a 2-D tensor.
Tensor to_tensor(const Matrix& m);
Matrix to_matrix(const Tensor& t);

} // namespace couplegen
