#include "paracap/image.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "paracap/errors.hpp"

namespace paracap {

namespace {

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Reads one whitespace-delimited header field, skipping '#' comments.
std::string next_field(const std::string& bytes, std::size_t& pos) {
    for (;;) {
        while (pos < bytes.size() && is_ws(bytes[pos])) ++pos;
        if (pos < bytes.size() && bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !is_ws(bytes[pos]) && bytes[pos] != '#') ++pos;
    return bytes.substr(start, pos - start);
}

int parse_dim(const std::string& field, const char* what) {
    if (field.empty() || field.find_first_not_of("0123456789") != std::string::npos || field.size() > 9)
        throw ValidationError(std::string("ppm: malformed ") + what + " '" + field + "'");
    return std::stoi(field);
}

}  // namespace

RgbImage decode_ppm(const std::string& bytes) {
    std::size_t pos = 0;
    if (next_field(bytes, pos) != "P6") throw ValidationError("ppm: missing P6 magic");
    const int w = parse_dim(next_field(bytes, pos), "width");
    const int h = parse_dim(next_field(bytes, pos), "height");
    const int maxval = parse_dim(next_field(bytes, pos), "maxval");
    if (maxval != 255) throw ValidationError("ppm: maxval " + std::to_string(maxval) + " unsupported (need 255)");
    if (w < 1 || h < 1) throw ValidationError("ppm: empty raster");
    if (pos >= bytes.size() || !is_ws(bytes[pos])) throw ValidationError("ppm: truncated header");
    ++pos;
    RgbImage img(w, h);
    if (bytes.size() - pos < img.data.size()) throw ValidationError("ppm: truncated pixel data");
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
              bytes.begin() + static_cast<std::ptrdiff_t>(pos + img.data.size()), img.data.begin());
    return img;
}

std::string encode_ppm(const RgbImage& image) {
    std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(image.data.data()), image.data.size());
    return out;
}

RgbImage read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_ppm(bytes);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    const auto bytes = encode_ppm(image);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace paracap
