#include "couplegen/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "couplegen/tensor_io.hpp"

namespace couplegen {

namespace {

struct Netpbm {
    char kind; // '5' or '6'
    std::size_t width;
    std::size_t height;
    std::vector<unsigned char> bytes;
};

std::size_t read_header_number(std::istream& is, const std::filesystem::path& path)
{
    int c = is.peek();
    while (c != EOF) {
        if (std::isspace(c)) {
            is.get();
        } else if (c == '#') {
            std::string skip;
            std::getline(is, skip);
        } else {
            break;
        }
        c = is.peek();
    }
    std::size_t value = 0;
    if (!(is >> value)) {
        throw FormatError(path.string() + ": malformed netpbm header");
    }
    return value;
}

Netpbm read_netpbm(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open image " + path.string());
    }
    char magic[2] = {};
    if (!is.read(magic, 2) || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
        throw FormatError(path.string() + ": expected binary PGM (P5) or PPM (P6)");
    }
    Netpbm img{magic[1], 0, 0, {}};
    img.width = read_header_number(is, path);
    img.height = read_header_number(is, path);
    const std::size_t maxval = read_header_number(is, path);
    if (maxval != 255) {
        throw FormatError(path.string() + ": only 8-bit images (maxval 255) are supported");
    }
    if (!std::isspace(is.get())) {
        throw FormatError(path.string() + ": malformed netpbm header");
    }
    const std::size_t channels = img.kind == '5' ? 1 : 3;
    img.bytes.resize(img.width * img.height * channels);
    if (!is.read(reinterpret_cast<char*>(img.bytes.data()),
                 static_cast<std::streamsize>(img.bytes.size()))) {
        throw FormatError(path.string() + ": truncated pixel data");
    }
    return img;
}

void write_netpbm(const std::filesystem::path& path, char kind, std::size_t width,
                  std::size_t height, const std::vector<unsigned char>& bytes)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot write image " + path.string());
    }
    os << 'P' << kind << '\n' << width << ' ' << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

unsigned char to_byte(double v)
{
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

} // namespace

ImageGrid read_image(const std::filesystem::path& path)
{
    const Netpbm raw = read_netpbm(path);
    ImageGrid img(raw.height, raw.width, raw.kind == '5' ? 1 : 3);
    for (std::size_t i = 0; i < raw.bytes.size(); ++i) {
        img.pixels[i] = raw.bytes[i] / 255.0;
    }
    return img;
}

void write_image(const std::filesystem::path& path, const ImageGrid& image)
{
    image.check();
    if (image.channels != 1 && image.channels != 3) {
        throw ShapeError("write_image: only 1- or 3-channel images can be written");
    }
    std::vector<unsigned char> bytes(image.pixels.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = to_byte(image.pixels[i]);
    }
    write_netpbm(path, image.channels == 1 ? '5' : '6', image.width, image.height, bytes);
}

ImageGrid quantize_8bit(const ImageGrid& image)
{
    ImageGrid out = image;
    for (double& v : out.pixels) {
        v = to_byte(v) / 255.0;
    }
    return out;
}

MaskGrid read_mask(const std::filesystem::path& path)
{
    const Netpbm raw = read_netpbm(path);
    if (raw.kind != '5') {
        throw FormatError(path.string() + ": masks must be single-channel PGM (P5)");
    }
    MaskGrid mask(raw.height, raw.width);
    for (std::size_t i = 0; i < raw.bytes.size(); ++i) {
        if (raw.bytes[i] != 0 && raw.bytes[i] != 255) {
            throw FormatError(path.string() + ": mask byte " + std::to_string(raw.bytes[i]) +
                              " at pixel " + std::to_string(i) + " is neither 0 nor 255");
        }
        mask.bits[i] = raw.bytes[i] ? 1 : 0;
    }
    return mask;
}

void write_mask(const std::filesystem::path& path, const MaskGrid& mask)
{
    std::vector<unsigned char> bytes(mask.bits.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = mask.bits[i] ? 255 : 0;
    }
    write_netpbm(path, '5', mask.width, mask.height, bytes);
}

} // namespace couplegen
