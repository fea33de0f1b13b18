#include "esrkit/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

namespace esrkit {

namespace {

constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::uint32_t be32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) << 24 | std::uint32_t(p[1]) << 16 | std::uint32_t(p[2]) << 8 |
           std::uint32_t(p[3]);
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

std::vector<std::uint8_t> zlib_inflate(const std::uint8_t* data, std::size_t size,
                                       std::size_t expected) {
    std::vector<std::uint8_t> out(expected);
    uLongf out_len = uLongf(expected);
    const int rc = uncompress(out.data(), &out_len, data, uLong(size));
    require(rc == Z_OK, "png: zlib inflate failed (code " + std::to_string(rc) + ")");
    require(out_len == expected, "png: decompressed size mismatch");
    return out;
}

std::vector<std::uint8_t> zlib_deflate(const std::uint8_t* data, std::size_t size) {
    uLongf bound = compressBound(uLong(size));
    std::vector<std::uint8_t> out(bound);
    const int rc = compress2(out.data(), &bound, data, uLong(size), Z_BEST_COMPRESSION);
    require(rc == Z_OK, "png: zlib deflate failed (code " + std::to_string(rc) + ")");
    out.resize(bound);
    return out;
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

// Undoes the per-row PNG filters in place over the raw scanline stream
// (each row: 1 filter byte + w*bpp data bytes).
void unfilter(std::vector<std::uint8_t>& raw, int h, int row_bytes, int bpp) {
    std::vector<std::uint8_t> prev(std::size_t(row_bytes), 0);
    for (int y = 0; y < h; ++y) {
        std::uint8_t* row = raw.data() + std::size_t(y) * (row_bytes + 1);
        const int filter = row[0];
        std::uint8_t* cur = row + 1;
        switch (filter) {
            case 0: break;
            case 1:
                for (int i = bpp; i < row_bytes; ++i) cur[i] = std::uint8_t(cur[i] + cur[i - bpp]);
                break;
            case 2:
                for (int i = 0; i < row_bytes; ++i) cur[i] = std::uint8_t(cur[i] + prev[i]);
                break;
            case 3:
                for (int i = 0; i < row_bytes; ++i) {
                    const int left = i >= bpp ? cur[i - bpp] : 0;
                    cur[i] = std::uint8_t(cur[i] + (left + prev[i]) / 2);
                }
                break;
            case 4:
                for (int i = 0; i < row_bytes; ++i) {
                    const int left = i >= bpp ? cur[i - bpp] : 0;
                    const int upleft = i >= bpp ? prev[i - bpp] : 0;
                    cur[i] = std::uint8_t(cur[i] + paeth(left, prev[i], upleft));
                }
                break;
            default: fail("png: unknown filter type " + std::to_string(filter));
        }
        std::memcpy(prev.data(), cur, std::size_t(row_bytes));
    }
}

}  // namespace

Image8 decode_png(const std::vector<std::uint8_t>& bytes) {
    require(bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0,
            "png: bad signature, not a PNG file");
    std::size_t pos = 8;
    int w = 0, h = 0, depth = 0, color = 0;
    bool seen_ihdr = false, seen_iend = false;
    std::vector<std::uint8_t> idat;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = be32(bytes.data() + pos);
        require(pos + 12 + len <= bytes.size(), "png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* payload = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            require(len == 13, "png: bad IHDR length");
            w = int(be32(payload));
            h = int(be32(payload + 4));
            depth = payload[8];
            color = payload[9];
            require(w >= 1 && h >= 1, "png: bad dimensions");
            require(depth == 8, "png: only 8-bit depth supported, got " + std::to_string(depth));
            require(color == 0 || color == 2 || color == 6,
                    "png: unsupported colour type " + std::to_string(color) +
                        " (greyscale, RGB or RGBA required)");
            require(payload[10] == 0 && payload[11] == 0, "png: nonzero compression/filter method");
            require(payload[12] == 0, "png: interlaced images not supported");
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            require(seen_ihdr, "png: IDAT before IHDR");
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            seen_iend = true;
            break;
        }
        // Ancillary chunks are skipped.
        pos += 12 + len;
    }
    require(seen_ihdr && seen_iend && !idat.empty(), "png: missing critical chunks");
    const int bpp = color == 0 ? 1 : color == 2 ? 3 : 4;
    const int row_bytes = w * bpp;
    const std::size_t raw_size = std::size_t(h) * (row_bytes + 1);
    auto raw = zlib_inflate(idat.data(), idat.size(), raw_size);
    unfilter(raw, h, row_bytes, bpp);
    Image8 img(w, h);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* row = raw.data() + std::size_t(y) * (row_bytes + 1) + 1;
        for (int x = 0; x < w; ++x) {
            const std::uint8_t* px = row + std::size_t(x) * bpp;
            if (color == 0) {
                img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = px[0];
            } else {
                img.at(y, x, 0) = px[0];
                img.at(y, x, 1) = px[1];
                img.at(y, x, 2) = px[2];
            }
        }
    }
    return img;
}

namespace {

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
    put_be32(out, std::uint32_t(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uLong crc = crc32(0, out.data() + crc_start, uInt(out.size() - crc_start));
    put_be32(out, std::uint32_t(crc));
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image8& img) {
    require(img.w >= 1 && img.h >= 1 && img.rgb.size() == std::size_t(img.w) * img.h * 3,
            "png: image buffer does not match its dimensions");
    std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);
    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, std::uint32_t(img.w));
    put_be32(ihdr, std::uint32_t(img.h));
    ihdr.push_back(8);  // depth
    ihdr.push_back(2);  // truecolour
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    append_chunk(out, "IHDR", ihdr);
    const int row_bytes = img.w * 3;
    std::vector<std::uint8_t> raw;
    raw.reserve(std::size_t(img.h) * (row_bytes + 1));
    for (int y = 0; y < img.h; ++y) {
        raw.push_back(0);  // filter: none
        const std::uint8_t* row = img.rgb.data() + std::size_t(y) * row_bytes;
        raw.insert(raw.end(), row, row + row_bytes);
    }
    append_chunk(out, "IDAT", zlib_deflate(raw.data(), raw.size()));
    append_chunk(out, "IEND", {});
    return out;
}

namespace {

// Skips PPM whitespace and '#' comments, then parses a decimal integer.
int ppm_int(const std::vector<std::uint8_t>& b, std::size_t& pos) {
    while (pos < b.size()) {
        if (b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
        } else if (std::isspace(b[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    require(pos < b.size() && b[pos] >= '0' && b[pos] <= '9', "ppm: expected an integer");
    long v = 0;
    while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
        v = v * 10 + (b[pos] - '0');
        require(v <= 1 << 30, "ppm: integer overflow in header");
        ++pos;
    }
    return int(v);
}

}  // namespace

Image8 decode_ppm(const std::vector<std::uint8_t>& bytes) {
    require(bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6',
            "ppm: bad signature, binary PPM (P6) required");
    std::size_t pos = 2;
    const int w = ppm_int(bytes, pos);
    const int h = ppm_int(bytes, pos);
    const int maxval = ppm_int(bytes, pos);
    require(w >= 1 && h >= 1, "ppm: bad dimensions");
    require(maxval == 255, "ppm: only maxval 255 supported, got " + std::to_string(maxval));
    require(pos < bytes.size() && std::isspace(bytes[pos]), "ppm: missing header terminator");
    ++pos;
    const std::size_t need = std::size_t(w) * h * 3;
    require(bytes.size() - pos >= need, "ppm: truncated pixel data");
    Image8 img(w, h);
    std::memcpy(img.rgb.data(), bytes.data() + pos, need);
    return img;
}

std::vector<std::uint8_t> encode_ppm(const Image8& img) {
    require(img.w >= 1 && img.h >= 1 && img.rgb.size() == std::size_t(img.w) * img.h * 3,
            "ppm: image buffer does not match its dimensions");
    const std::string header =
        "P6\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.rgb.begin(), img.rgb.end());
    return out;
}

namespace {

std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot);
    for (char& c : ext) c = char(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

}  // namespace

std::vector<std::uint8_t> read_binary_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), "cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_binary_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    require(bool(out), "cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    require(bool(out), "write failed: " + path);
}

Image8 load_image(const std::string& path) {
    const std::string ext = lower_ext(path);
    const auto bytes = read_binary_file(path);
    if (ext == ".png") return decode_png(bytes);
    if (ext == ".ppm") return decode_ppm(bytes);
    fail("unsupported image format '" + ext + "' (use .png or .ppm): " + path);
}

void save_image(const std::string& path, const Image8& img) {
    const std::string ext = lower_ext(path);
    if (ext == ".png")
        write_binary_file(path, encode_png(img));
    else if (ext == ".ppm")
        write_binary_file(path, encode_ppm(img));
    else
        fail("unsupported image format '" + ext + "' (use .png or .ppm): " + path);
}

Tensor to_tensor(const Image8& img) {
    Tensor t(1, 3, img.h, img.w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) t.at(0, c, y, x) = float(img.at(y, x, c)) / 255.0f;
    return t;
}

Image8 to_image(const Tensor& t) {
    require(t.shape.n == 1 && t.shape.c == 3,
            "to_image: expected a (1, 3, h, w) tensor, got " + t.shape.str());
    Image8 img(t.shape.w, t.shape.h);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < t.shape.h; ++y)
            for (int x = 0; x < t.shape.w; ++x) {
                const double v = std::round(double(t.at(0, c, y, x)) * 255.0);
                img.at(y, x, c) = std::uint8_t(std::clamp(v, 0.0, 255.0));
            }
    return img;
}

}  // namespace esrkit
