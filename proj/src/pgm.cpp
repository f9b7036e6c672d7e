#include "lvseg/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace lvseg::pgm {

namespace {

class HeaderReader {
public:
    explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const auto ch = bytes_[pos_];
            if (ch == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
            } else if (std::isspace(ch)) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::uint64_t number() {
        skip_space_and_comments();
        if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
            throw Error("malformed PGM header");
        }
        std::uint64_t v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > 0xFFFFFFFFull) throw Error("PGM header value too large");
            ++pos_;
        }
        return v;
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }
    std::uint8_t peek() const { return bytes_.at(pos_); }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& path, const std::string& header,
          const std::vector<std::uint8_t>& body) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

RawImage parse_header(const std::vector<std::uint8_t>& bytes, HeaderReader& hdr) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw Error("not a binary PGM (P5)");
    hdr.advance(2);
    RawImage img;
    img.width = hdr.number();
    img.height = hdr.number();
    const auto maxval = hdr.number();
    if (img.width == 0 || img.height == 0) throw Error("PGM has zero size");
    if (maxval == 0 || maxval > 65535) throw Error("PGM maxval out of range");
    img.maxval = static_cast<std::uint32_t>(maxval);
    return img;
}

}  // namespace

RawImage parse(const std::vector<std::uint8_t>& bytes) {
    HeaderReader hdr(bytes);
    RawImage img = parse_header(bytes, hdr);
    // Exactly one whitespace byte separates the header from the raster.
    if (hdr.pos() >= bytes.size() || !std::isspace(hdr.peek())) throw Error("malformed PGM header");
    hdr.advance(1);

    const std::size_t n = img.width * img.height;
    const std::size_t bps = img.maxval > 255 ? 2 : 1;
    if (bytes.size() - hdr.pos() < n * bps) throw Error("PGM raster truncated");
    img.samples.resize(n);
    const std::uint8_t* p = bytes.data() + hdr.pos();
    for (std::size_t i = 0; i < n; ++i) {
        std::uint16_t v = bps == 2 ? static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]) : p[i];
        if (v > img.maxval) throw Error("PGM sample exceeds maxval");
        img.samples[i] = v;
    }
    return img;
}

RawImage read(const std::filesystem::path& path) {
    try {
        return parse(slurp(path));
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

RawImage probe(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> head(4096);
    in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
    head.resize(static_cast<std::size_t>(in.gcount()));
    try {
        HeaderReader hdr(head);
        return parse_header(head, hdr);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

void write(const std::filesystem::path& path, std::size_t height, std::size_t width,
           std::uint32_t maxval, const std::vector<std::uint16_t>& samples) {
    if (samples.size() != height * width) throw Error("PGM sample count mismatch");
    if (maxval == 0 || maxval > 65535) throw Error("PGM maxval out of range");
    const std::string header =
        "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n" + std::to_string(maxval) + "\n";
    std::vector<std::uint8_t> body;
    if (maxval > 255) {
        body.reserve(samples.size() * 2);
        for (auto v : samples) {
            body.push_back(static_cast<std::uint8_t>(v >> 8));
            body.push_back(static_cast<std::uint8_t>(v & 0xFF));
        }
    } else {
        body.reserve(samples.size());
        for (auto v : samples) body.push_back(static_cast<std::uint8_t>(v));
    }
    dump(path, header, body);
}

Image2D read_frame(const std::filesystem::path& path, double scale) {
    const RawImage raw = read(path);
    std::vector<double> data(raw.samples.size());
    std::transform(raw.samples.begin(), raw.samples.end(), data.begin(),
                   [scale](std::uint16_t v) { return static_cast<double>(v) * scale; });
    return {raw.height, raw.width, std::move(data)};
}

void write_frame(const std::filesystem::path& path, const Grid<double>& img, double scale) {
    std::vector<std::uint16_t> samples(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = std::round(img[i] / scale);
        samples[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
    }
    write(path, img.height(), img.width(), 65535, samples);
}

BinaryMask read_mask(const std::filesystem::path& path) {
    const RawImage raw = read(path);
    std::vector<std::uint8_t> data(raw.samples.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto v = raw.samples[i];
        if (v != 0 && v != raw.maxval) throw Error(path.string() + ": mask is not binary");
        data[i] = v == 0 ? 0 : 1;
    }
    return {raw.height, raw.width, std::move(data)};
}

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
    std::vector<std::uint16_t> samples(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) samples[i] = mask[i] ? 255 : 0;
    write(path, mask.height(), mask.width(), 255, samples);
}

void write_gray8(const std::filesystem::path& path, const Grid<double>& img) {
    std::vector<std::uint16_t> samples(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        samples[i] = static_cast<std::uint16_t>(std::clamp(std::round(img[i] * 255.0), 0.0, 255.0));
    }
    write(path, img.height(), img.width(), 255, samples);
}

void write_ppm(const std::filesystem::path& path, const Grid<Rgb>& img) {
    const std::string header =
        "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> body;
    body.reserve(img.size() * 3);
    for (const auto& px : img.pixels()) body.insert(body.end(), px.begin(), px.end());
    dump(path, header, body);
}

}  // namespace lvseg::pgm
