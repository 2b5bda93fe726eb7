#include "onsd/pnm.hpp"

#include <cctype>
#include <fstream>
#include <istream>
#include <iterator>

namespace onsd {
namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            if (!tok.empty()) break;
        } else {
            tok.push_back(static_cast<char>(c));
        }
        c = in.get();
    }
    return tok;
}

int parse_header_int(std::istream& in, const std::filesystem::path& path, const char* field) {
    const std::string tok = next_token(in);
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw IoError(path, std::string("bad PNM header field '") + field + "': '" + tok + "'");
    }
}

}  // namespace

Raster8 read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open for reading");

    const std::string magic = next_token(in);
    if (magic != "P5" && magic != "P4") {
        throw IoError(path, "unsupported PNM type '" + magic + "' (expected P5 or P4)");
    }
    Raster8 r;
    r.width = parse_header_int(in, path, "width");
    r.height = parse_header_int(in, path, "height");
    const std::size_t n = static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height);
    r.values.resize(n);

    if (magic == "P5") {
        const int maxval = parse_header_int(in, path, "maxval");
        if (maxval > 255) throw IoError(path, "16-bit PGM not supported");
        in.read(reinterpret_cast<char*>(r.values.data()), static_cast<std::streamsize>(n));
        if (in.gcount() != static_cast<std::streamsize>(n)) throw IoError(path, "truncated pixel data");
        if (maxval != 255) {
            for (auto& v : r.values) v = static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
        }
    } else {
        const std::size_t row_bytes = (static_cast<std::size_t>(r.width) + 7) / 8;
        std::vector<std::uint8_t> packed(row_bytes * r.height);
        in.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
        if (in.gcount() != static_cast<std::streamsize>(packed.size())) {
            throw IoError(path, "truncated bitmap data");
        }
        for (int y = 0; y < r.height; ++y) {
            for (int x = 0; x < r.width; ++x) {
                const std::uint8_t byte = packed[y * row_bytes + x / 8];
                const bool bit = (byte >> (7 - x % 8)) & 1u;
                r.values[static_cast<std::size_t>(y) * r.width + x] = bit ? 255 : 0;
            }
        }
    }
    return r;
}

Frame read_pgm_frame(const std::filesystem::path& path, double pixels_per_mm) {
    const Raster8 r = read_pnm(path);
    Frame f(r.width, r.height, pixels_per_mm);
    for (std::size_t i = 0; i < r.values.size(); ++i) f.pixels[i] = r.values[i] / 255.0f;
    return f;
}

void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& values) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out << "P5\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size()));
    if (!out) throw IoError(path, "write failed");
}

void write_pgm(const std::filesystem::path& path, const Frame& frame) {
    std::vector<std::uint8_t> bytes(frame.pixels.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(frame.pixels[i]);
    write_pgm(path, frame.width, frame.height, bytes);
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.data.data()), static_cast<std::streamsize>(image.data.size()));
    if (!out) throw IoError(path, "write failed");
}

}  // namespace onsd
