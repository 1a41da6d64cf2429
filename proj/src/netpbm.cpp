#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "fallmon/dataset.hpp"

namespace fallmon::data {

namespace {

class HeaderCursor {
public:
    explicit HeaderCursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }

    // Whitespace and '#' comments (to end of line) may separate header tokens.
    void skip_separators() {
        while (pos_ < bytes_.size()) {
            const auto c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
            } else if (std::isspace(c)) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    unsigned long number(const char* field) {
        skip_separators();
        const std::size_t start = pos_;
        unsigned long v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > 0xFFFFFFFFul) throw FormatError(std::string("NetPBM ") + field + " is too large", start);
            ++pos_;
        }
        if (pos_ == start) {
            throw FormatError(std::string("NetPBM header: expected ") + field +
                                  (pos_ >= bytes_.size() ? ", found end of data" : ""),
                              start);
        }
        return v;
    }

    // Exactly one whitespace byte ends the header before the raster.
    void raster_separator() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            throw FormatError("NetPBM header must end with a single whitespace byte", pos_);
        }
        ++pos_;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

Image load_netpbm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw FormatError("bad NetPBM magic (expected P5 or P6)", 0);
    }
    const bool rgb = bytes[1] == '6';
    HeaderCursor cur(bytes.subspan(2));
    const auto width = cur.number("width");
    const auto height = cur.number("height");
    const std::size_t maxval_at = cur.offset() + 2;
    const auto maxval = cur.number("maxval");
    cur.raster_separator();
    if (width == 0 || height == 0) throw FormatError("NetPBM dimensions must be positive", 2);
    if (maxval == 0 || maxval > 255) {
        throw FormatError("NetPBM maxval " + std::to_string(maxval) + " unsupported (must be 1..255)", maxval_at);
    }

    const std::size_t data_at = cur.offset() + 2;
    const std::size_t channels = rgb ? 3 : 1;
    const std::size_t needed = width * height * channels;
    if (bytes.size() - data_at < needed) {
        throw FormatError("truncated NetPBM raster: need " + std::to_string(needed) + " bytes, have " +
                              std::to_string(bytes.size() - data_at),
                          bytes.size());
    }

    Image img({height, width, 3});
    const float scale = 1.0f / static_cast<float>(maxval);
    const std::uint8_t* px = bytes.data() + data_at;
    for (std::size_t i = 0; i < width * height; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const std::uint8_t raw = px[i * channels + (rgb ? c : 0)];
            img[i * 3 + c] = std::min(1.0f, static_cast<float>(raw) * scale);
        }
    }
    return img;
}

Image load_netpbm_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return load_netpbm(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
}

std::vector<std::uint8_t> encode_p6(const Image& image) {
    if (image.rank() != 3 || image.dim(2) != 3) throw ShapeError("P6 export needs an H×W×3 image");
    const std::string header =
        "P6\n" + std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + image.size());
    for (float v : image.values()) {
        out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    }
    return out;
}

void save_p6(const Image& image, const std::filesystem::path& path) {
    const auto bytes = encode_p6(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

Image resize_bilinear(const Image& image, std::size_t out_h, std::size_t out_w) {
    if (image.rank() != 3) throw ShapeError("resize needs an H×W×C image");
    if (out_h == 0 || out_w == 0) throw InputError("resize target must be positive");
    const std::size_t in_h = image.dim(0), in_w = image.dim(1), ch = image.dim(2);
    Image out({out_h, out_w, ch});

    struct Tap {
        std::size_t lo, hi;
        float frac;
    };
    auto taps = [](std::size_t out_n, std::size_t in_n) {
        std::vector<Tap> t(out_n);
        const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
        for (std::size_t i = 0; i < out_n; ++i) {
            double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
            const auto lo = static_cast<std::size_t>(std::floor(src));
            t[i] = {lo, std::min(lo + 1, in_n - 1), static_cast<float>(src - static_cast<double>(lo))};
        }
        return t;
    };
    const auto ty = taps(out_h, in_h);
    const auto tx = taps(out_w, in_w);

    for (std::size_t y = 0; y < out_h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
            const auto [y0, y1, fy] = ty[y];
            const auto [x0, x1, fx] = tx[x];
            for (std::size_t c = 0; c < ch; ++c) {
                const float a = image.at(y0, x0, c), b = image.at(y0, x1, c);
                const float d = image.at(y1, x0, c), e = image.at(y1, x1, c);
                const float top = a + (b - a) * fx;
                const float bot = d + (e - d) * fx;
                // Rounding must not leave the range spanned by the four taps.
                out.at(y, x, c) = std::clamp(top + (bot - top) * fy, std::min({a, b, d, e}), std::max({a, b, d, e}));
            }
        }
    }
    return out;
}

Image load_model_input(const std::filesystem::path& path, std::size_t size) {
    Image img = load_netpbm_file(path);
    if (img.dim(0) == size && img.dim(1) == size) return img;
    return resize_bilinear(img, size, size);
}

}  // namespace fallmon::data
