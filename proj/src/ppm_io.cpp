#include "gsmforge/ppm_io.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

namespace gsmforge {

namespace {

class ByteReader {
public:
    explicit ByteReader(const std::string& path)
        : path_(path), f_(std::fopen(path.c_str(), "rb")) {
        if (!f_) throw std::runtime_error("cannot open " + path);
    }
    ~ByteReader() {
        if (f_) std::fclose(f_);
    }
    int get() {
        int c = std::fgetc(f_);
        if (c != EOF) ++offset_;
        return c;
    }
    void read(unsigned char* dst, std::size_t n) {
        std::size_t got = std::fread(dst, 1, n, f_);
        offset_ += got;
        if (got != n) fail("truncated pixel data");
    }
    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error(path_ + ": " + what + " at byte offset " +
                                 std::to_string(offset_));
    }
    std::size_t offset() const { return offset_; }

private:
    std::string path_;
    std::FILE* f_;
    std::size_t offset_ = 0;
};

bool is_ppm_space(int c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

// Skips whitespace and '#' comments, then parses a decimal integer.
int read_header_int(ByteReader& r) {
    int c = r.get();
    while (true) {
        if (c == '#') {
            while (c != '\n' && c != EOF) c = r.get();
        } else if (is_ppm_space(c)) {
            c = r.get();
        } else {
            break;
        }
    }
    if (c == EOF) r.fail("unexpected end of header");
    if (c < '0' || c > '9') r.fail("expected digit in header");
    long v = 0;
    while (c >= '0' && c <= '9') {
        v = v * 10 + (c - '0');
        if (v > 1 << 30) r.fail("header value out of range");
        c = r.get();
    }
    if (c != EOF && !is_ppm_space(c)) r.fail("malformed header token");
    return static_cast<int>(v);
}

}  // namespace

Image load_image(const std::string& path) {
    ByteReader r(path);
    int m0 = r.get(), m1 = r.get();
    if (m0 != 'P' || m1 != '6') r.fail("bad magic, expected P6");
    int width = read_header_int(r);
    int height = read_header_int(r);
    int maxval = read_header_int(r);
    if (maxval != 255)
        r.fail("unsupported maxval " + std::to_string(maxval) + " (only 255)");
    if (width <= 0 || height <= 0) r.fail("non-positive dimensions");
    // read_header_int consumed exactly one whitespace byte after maxval

    std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * 3);
    r.read(raw.data(), raw.size());

    Image img(height, width);
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    for (std::size_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c)
            img.t.data[plane * c + i] = raw[i * 3 + c] / 255.0;
    return img;
}

void save_image(const Image& img, const std::string& path) {
    img.validate();
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    std::fprintf(f, "P6\n%d %d\n255\n", img.width(), img.height());
    const std::size_t plane = static_cast<std::size_t>(img.height()) * img.width();
    std::vector<unsigned char> raw(plane * 3);
    for (std::size_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) {
            double v = std::round(img.t.data[plane * c + i] * 255.0);
            raw[i * 3 + c] = static_cast<unsigned char>(v < 0 ? 0 : (v > 255 ? 255 : v));
        }
    if (std::fwrite(raw.data(), 1, raw.size(), f) != raw.size()) {
        std::fclose(f);
        throw std::runtime_error("short write to " + path);
    }
    std::fclose(f);
}

}  // namespace gsmforge
