#include "director/common.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace director {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::unit() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
}

std::int64_t Rng::range(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw std::invalid_argument("Rng::range: empty range");
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = unit();
    while (u1 <= 0.0) u1 = unit();
    const double u2 = unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

std::string encode_ppm(const Image& img) {
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.reserve(out.size() + img.pixels.size());
    for (double v : img.pixels) {
        double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
    }
    return out;
}

namespace {

// Reads one whitespace-delimited token, skipping '#' comments per the PNM spec.
std::string ppm_token(const std::string& s, size_t& pos) {
    while (pos < s.size()) {
        if (std::isspace(static_cast<unsigned char>(s[pos]))) {
            ++pos;
        } else if (s[pos] == '#') {
            while (pos < s.size() && s[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    const size_t start = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return s.substr(start, pos - start);
}

}  // namespace

Image decode_ppm(const std::string& bytes) {
    size_t pos = 0;
    if (ppm_token(bytes, pos) != "P6") throw std::runtime_error("decode_ppm: not a P6 file");
    const int w = std::stoi(ppm_token(bytes, pos));
    const int h = std::stoi(ppm_token(bytes, pos));
    const int maxval = std::stoi(ppm_token(bytes, pos));
    if (maxval != 255) throw std::runtime_error("decode_ppm: expected maxval 255");
    ++pos;  // single whitespace byte after maxval
    const size_t need = static_cast<size_t>(w) * h * 3;
    if (bytes.size() - pos < need) throw std::runtime_error("decode_ppm: truncated pixel data");
    Image img(h, w);
    for (size_t i = 0; i < need; ++i) {
        img.pixels[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
    }
    return img;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for read: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    size_t start = 0;
    for (size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == '\n') {
            lines.emplace_back(text.substr(start, i - start));
            start = i + 1;
        }
    }
    // A trailing newline does not open a new empty line.
    if (!text.empty() && text.back() == '\n') lines.pop_back();
    return lines;
}

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

}  // namespace director
