#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "qv/container.hpp"
#include "qv/interval.hpp"

namespace qv {

/// Which frames to load: strictly increasing indices into [0, m).
struct SampleSpec {
    std::vector<uint64_t> indices;

    void validate(uint64_t frame_count) const;
};

/// The shared packed output tensor: slot j holds the frame at indices[j],
/// planar (3, h, w) per slot. Writes are disjoint by construction; the
/// per-slot fill counters exist to prove that in tests.
class FrameBuffer {
public:
    FrameBuffer() = default;
    FrameBuffer(size_t slots, uint32_t width, uint32_t height);

    size_t slots() const { return slots_; }
    uint32_t width() const { return width_; }
    uint32_t height() const { return height_; }
    size_t slot_bytes() const { return size_t{3} * width_ * height_; }

    std::span<uint8_t> slot(size_t j) { return {data_.data() + j * slot_bytes(), slot_bytes()}; }
    std::span<const uint8_t> slot(size_t j) const {
        return {data_.data() + j * slot_bytes(), slot_bytes()};
    }
    std::span<const uint8_t> bytes() const { return data_; }

    void write_slot(size_t j, std::span<const uint8_t> pixels);
    uint32_t fill_count(size_t j) const { return fill_[j].load(std::memory_order_relaxed); }
    bool all_filled_once() const;

    bool same_pixels(const FrameBuffer& other) const;

private:
    size_t slots_ = 0;
    uint32_t width_ = 0;
    uint32_t height_ = 0;
    std::vector<uint8_t> data_;
    std::unique_ptr<std::atomic<uint32_t>[]> fill_;
};

/// Frame index -> slot offset in the output buffer.
using OffsetMap = std::unordered_map<uint64_t, size_t>;

OffsetMap make_offset_map(const SampleSpec& spec);

/// Rescales a presentation timestamp to a frame index: half-up rounding of
/// (m-1)*(pts - pts_min)/(pts_max - pts_min). Ties round away from zero.
uint64_t frame_index(uint64_t pts, uint64_t pts_min, uint64_t pts_max, uint64_t frame_count);

/// Inverse estimate: the pts of frame i on the same scale.
uint64_t pts_for_index(uint64_t index, uint64_t pts_min, uint64_t pts_max,
                       uint64_t frame_count);

struct DecodeStats {
    uint64_t seeks = 0;
    double wall_ms = 0.0;
    size_t intervals = 0; // parallel mode only
};

struct DecodeResult {
    FrameBuffer buffer;
    DecodeStats stats;
};

/// Streaming single-pass reference: walks every packet once and keeps the
/// requested frames by stream position. Bounded memory at any video length.
FrameBuffer sequential_slice(const VideoFile& file, const SampleSpec& spec);

/// One seek per requested frame: seek to the preceding keyframe, decode
/// forward to the target, repeat. Wins for sparse sampling.
DecodeResult decode_seek_based(const VideoFile& file, const SampleSpec& spec);

/// Keyframe-interval parallel decoding over up to `cores` OpenMP workers.
/// One seek per interval; output is bit-identical to the serial reference.
DecodeResult decode_parallel(const VideoFile& file, const SampleSpec& spec, size_t cores);

/// Observation points for the overlap pipeline: on_start fires right before
/// an interval's first enqueue, on_done after its last frame is written.
/// Both may be called from any worker thread.
struct IntervalHooks {
    std::function<void(size_t)> on_start;
    std::function<void(size_t)> on_done;
};

/// As decode_parallel but over an explicit interval plan (the overlap
/// pipeline plans s >> cores fine-grained intervals).
DecodeResult decode_intervals(const VideoFile& file, const SampleSpec& spec,
                              const IntervalSet& plan, size_t cores,
                              const IntervalHooks* hooks = nullptr);

/// Deterministic bilinear resampling with half-pixel centers.
Frame resize_bilinear(const Frame& frame, uint32_t out_height, uint32_t out_width);

/// Frame indices for a regular sampling grid of `rate` frames per second
/// (stream ticks run at kTicksPerSecond).
std::vector<uint64_t> sample_indices_fps(const VideoFile& file, double rate);

/// Every `gap`-th frame index, starting at 0.
std::vector<uint64_t> sample_indices_gap(uint64_t frame_count, uint64_t gap);

} // namespace qv
