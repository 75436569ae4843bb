#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "qv/container.hpp"

namespace qv {

/// Deterministic test-asset generators. Every pattern is a pure function of
/// (pattern, seed, frame index, pixel position), so encodes are reproducible
/// byte for byte across runs and machines.
enum class Pattern {
    gradient, // smooth spatial ramp drifting per frame; small constant deltas
    noise,    // per-pixel hash noise; incompressible payloads
    constant, // one flat color per frame; near-zero delta payloads
    checker,  // moving checkerboard; runs of two values
};

Pattern pattern_from_name(const std::string& name);
const char* pattern_name(Pattern p);

uint64_t splitmix64(uint64_t& state);

/// Fills `out` (3*h*w bytes, planar) with frame `index` of the pattern.
void fill_pattern(Pattern pattern, uint64_t seed, uint64_t index,
                  uint32_t width, uint32_t height, std::span<uint8_t> out);

Frame make_frame(Pattern pattern, uint64_t seed, uint64_t index,
                 uint32_t width, uint32_t height, uint64_t pts);

/// Encodes `frame_count` pattern frames without materializing them all.
VideoFile synth_video(Pattern pattern, uint64_t seed, uint64_t frame_count,
                      uint32_t width, uint32_t height, const EncodeConfig& config);

} // namespace qv
