#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "lvseg/fcn/tensor.hpp"
#include "lvseg/imgcore.hpp"

namespace lvtest {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("lvseg_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

inline std::vector<char> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

/// Relative paths of every regular file below `root`, sorted.
inline std::vector<std::string> tree(const fs::path& root) {
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root).generic_string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Empty when the two trees hold the same files with the same bytes;
/// otherwise the first difference.
inline std::string compare_trees(const fs::path& a, const fs::path& b) {
    const auto ta = tree(a), tb = tree(b);
    if (ta != tb) return "file lists differ (" + std::to_string(ta.size()) + " vs " + std::to_string(tb.size()) + ")";
    for (const auto& rel : ta) {
        if (file_bytes(a / rel) != file_bytes(b / rel)) return "content differs: " + rel;
    }
    return {};
}

inline lvseg::fcn::Tensor random_tensor(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t d,
                                        double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    lvseg::fcn::Tensor t(h, w, d);
    for (auto& v : t.data) v = u(rng);
    return t;
}

inline lvseg::BinaryMask random_mask(std::mt19937_64& rng, std::size_t h, std::size_t w, double p = 0.5) {
    std::bernoulli_distribution b(p);
    lvseg::BinaryMask m(h, w);
    for (auto& v : m.pixels()) v = b(rng) ? 1 : 0;
    return m;
}

inline lvseg::Grid<double> random_map(std::mt19937_64& rng, std::size_t h, std::size_t w) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    lvseg::Grid<double> g(h, w);
    for (auto& v : g.pixels()) v = u(rng);
    return g;
}

/// Filled disk (r - cy)^2 + (c - cx)^2 <= radius^2.
inline lvseg::BinaryMask disk(std::size_t h, std::size_t w, double cy, double cx, double radius) {
    lvseg::BinaryMask m(h, w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
            m.at(r, c) = dy * dy + dx * dx <= radius * radius ? 1 : 0;
        }
    }
    return m;
}

inline lvseg::BinaryMask rect(std::size_t h, std::size_t w, std::size_t top, std::size_t left, std::size_t rh,
                              std::size_t rw) {
    lvseg::BinaryMask m(h, w);
    for (std::size_t r = top; r < top + rh; ++r) {
        for (std::size_t c = left; c < left + rw; ++c) m.at(r, c) = 1;
    }
    return m;
}

}  // namespace lvtest
