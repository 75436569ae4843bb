#include "qv/synthetic.hpp"

namespace qv {

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

Pattern pattern_from_name(const std::string& name) {
    if (name == "gradient") return Pattern::gradient;
    if (name == "noise") return Pattern::noise;
    if (name == "constant") return Pattern::constant;
    if (name == "checker") return Pattern::checker;
    throw Error("unknown pattern: " + name);
}

const char* pattern_name(Pattern p) {
    switch (p) {
        case Pattern::gradient: return "gradient";
        case Pattern::noise: return "noise";
        case Pattern::constant: return "constant";
        case Pattern::checker: return "checker";
    }
    return "?";
}

void fill_pattern(Pattern pattern, uint64_t seed, uint64_t index,
                  uint32_t width, uint32_t height, std::span<uint8_t> out) {
    const size_t plane = size_t{width} * height;
    switch (pattern) {
        case Pattern::gradient: {
            const uint64_t drift = index * 3 + seed;
            size_t o = 0;
            for (uint32_t c = 0; c < 3; ++c)
                for (uint32_t y = 0; y < height; ++y)
                    for (uint32_t x = 0; x < width; ++x)
                        out[o++] = uint8_t(x * 2 + y * 5 + drift + c * 85);
            break;
        }
        case Pattern::noise: {
            uint64_t state = seed * 0x9e3779b97f4a7c15ull + index + 1;
            size_t o = 0;
            const size_t total = 3 * plane;
            while (o + 8 <= total) {
                uint64_t v = splitmix64(state);
                for (int b = 0; b < 8; ++b) out[o++] = uint8_t(v >> (8 * b));
            }
            uint64_t v = splitmix64(state);
            for (int b = 0; o < total; ++b) out[o++] = uint8_t(v >> (8 * b));
            break;
        }
        case Pattern::constant: {
            uint64_t state = seed ^ index;
            const uint64_t v = splitmix64(state);
            for (uint32_t c = 0; c < 3; ++c) {
                const uint8_t color = uint8_t(v >> (8 * c));
                for (size_t i = 0; i < plane; ++i) out[c * plane + i] = color;
            }
            break;
        }
        case Pattern::checker: {
            const uint32_t cell = 8;
            const uint64_t phase = index + seed;
            size_t o = 0;
            for (uint32_t c = 0; c < 3; ++c)
                for (uint32_t y = 0; y < height; ++y)
                    for (uint32_t x = 0; x < width; ++x) {
                        const bool on = (((x + phase) / cell + y / cell) & 1) != 0;
                        out[o++] = on ? 255 : 0;
                    }
            break;
        }
    }
}

Frame make_frame(Pattern pattern, uint64_t seed, uint64_t index,
                 uint32_t width, uint32_t height, uint64_t pts) {
    Frame f;
    f.width = width;
    f.height = height;
    f.pts = pts;
    f.pixels.resize(size_t{3} * width * height);
    fill_pattern(pattern, seed, index, width, height, f.pixels);
    return f;
}

VideoFile synth_video(Pattern pattern, uint64_t seed, uint64_t frame_count,
                      uint32_t width, uint32_t height, const EncodeConfig& config) {
    return encode_stream(
        [=](uint64_t i, std::span<uint8_t> out) {
            fill_pattern(pattern, seed, i, width, height, out);
        },
        frame_count, width, height, config);
}

} // namespace qv
