#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace director {

// Deterministic seed mixing (splitmix64). Used to derive independent
// sub-seeds from a master seed, e.g. one stream per corpus sample.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Seeded random source. All randomness in the project goes through this
// class so that runs are reproducible bit-for-bit. Distributions are
// hand-rolled because the std:: ones are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0,1) with 53 random bits.
    double unit();

    // Uniform integer in [0, n). Requires n > 0.
    std::uint64_t below(std::uint64_t n);

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t range(std::int64_t lo, std::int64_t hi);

    // Standard normal via Box-Muller.
    double normal();

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Dense H x W x 3 image, channels interleaved, values in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;  // height*width*3, row-major, rgb

    Image() = default;
    Image(int h, int w) : height(h), width(w), pixels(static_cast<size_t>(h) * w * 3, 0.0) {}

    double& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
};

// Dense C x H x W latent grid, channel-major.
struct Latent {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Latent() = default;
    Latent(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<size_t>(c) * h * w, 0.0) {}

    double& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
    size_t size() const { return data.size(); }
};

// Binary PPM (P6, maxval 255). Values are clamped to [0,1] and quantized.
std::string encode_ppm(const Image& img);
Image decode_ppm(const std::string& bytes);

void write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

// String helpers shared by the parser and the config reader.
std::vector<std::string> split_lines(std::string_view text);
std::string trim(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);

}  // namespace director
