#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qv/error.hpp"

namespace qv {

// Stream tick rate shared by all QVS files: 24000 ticks per second, so
// common frame rates (24, 25, 30, 60 fps) map to integral ticks_per_frame.
inline constexpr uint64_t kTicksPerSecond = 24000;

/// One decoded RGB frame, planar (3, h, w), 8-bit.
struct Frame {
    uint32_t width = 0;
    uint32_t height = 0;
    uint64_t pts = 0;
    std::vector<uint8_t> pixels; // size 3*h*w, channel-major

    size_t pixel_bytes() const { return size_t{3} * width * height; }
    bool operator==(const Frame&) const = default;
};

enum class StreamKind : uint8_t { video = 0, audio = 1 };

/// A block of the container's bit stream. Video packets are not frame
/// aligned: one packet may carry the tail of one frame body and the start
/// of the next. pts is the timestamp of the frame owning the packet's
/// first payload byte; audio packets may have no pts at all.
struct Packet {
    StreamKind kind = StreamKind::video;
    std::optional<uint64_t> pts;
    bool keyframe = false;
    std::vector<uint8_t> payload;
};

struct EncodeConfig {
    uint32_t keyframe_period = 24;     // K: frame i is intra-coded iff i % K == 0
    uint32_t max_packet_bytes = 4096;
    uint32_t ticks_per_frame = 1000;
    uint32_t audio_interleave_period = 7; // one audio packet per N video packets, 0 = none
};

/// An opened QVS container: header fields plus the full packet list.
/// Immutable after encode/open; safe to share across decode threads.
struct VideoFile {
    uint16_t version = 1;
    uint32_t width = 0;
    uint32_t height = 0;
    uint64_t frame_count = 0;
    uint32_t ticks_per_frame = 0;
    uint32_t keyframe_period = 0;
    uint32_t max_packet_bytes = 0;
    std::vector<Packet> packets;

    // Indices into `packets` where an intra-coded frame body begins,
    // in pts order. Rebuilt by open(); filled by encode().
    std::vector<size_t> keyframe_packets;

    uint64_t duration_ticks() const {
        return frame_count == 0 ? 0 : (frame_count - 1) * uint64_t{ticks_per_frame};
    }
};

/// Pull-based frame source so desk-scale videos never need all raw frames
/// in memory at once. Writes frame `index` into `out` (3*h*w bytes).
using FrameSource = std::function<void(uint64_t index, std::span<uint8_t> out)>;

VideoFile encode(const std::vector<Frame>& frames, const EncodeConfig& config);
VideoFile encode_stream(const FrameSource& source, uint64_t frame_count,
                        uint32_t width, uint32_t height, const EncodeConfig& config);

void write_file(const VideoFile& file, const std::string& path);
std::vector<uint8_t> serialize(const VideoFile& file);

/// Parses header and packet metadata; payloads are kept but not decoded.
VideoFile open(const std::string& path);
VideoFile parse(std::span<const uint8_t> bytes);

/// The codec state machine. Enqueueing one packet may complete zero, one,
/// or several frame bodies; completed frames come out in pts order.
/// Single-owner: one decoder per thread.
class DecoderQueue {
public:
    DecoderQueue(uint32_t width, uint32_t height);

    /// Audio packets are ignored. Throws on corrupt frame bodies.
    void enqueue(const Packet& packet);

    /// Signals end of stream. Leftover partial body bytes are an error.
    void flush();

    /// Drops all codec state (partial bytes, previous frame, pending output).
    void reset();

    std::optional<Frame> dequeue();
    bool pending() const { return !ready_.empty(); }

private:
    void drain_bodies();
    void decode_body(std::span<const uint8_t> body);

    uint32_t width_;
    uint32_t height_;
    std::vector<uint8_t> acc_;
    size_t acc_pos_ = 0;
    std::vector<uint8_t> prev_; // previous reconstructed frame, empty before first keyframe
    std::deque<Frame> ready_;
    bool flushed_ = false;
};

/// Serial reference decoder: every frame, in pts order. This is the oracle
/// all parallel paths are tested against.
std::vector<Frame> decode_sequential(const VideoFile& file);

/// Index into file.packets of the latest keyframe packet whose pts is
/// <= the requested pts. Decoding from there yields every frame with
/// frame.pts >= requested pts.
size_t seek(const VideoFile& file, uint64_t pts);

// Codec internals shared with tests and the format doc.
uint32_t fnv1a32(std::span<const uint8_t> bytes);
uint64_t fnv1a64(std::span<const uint8_t> bytes);
std::vector<uint8_t> rle_compress(std::span<const uint8_t> bytes);
std::vector<uint8_t> rle_decompress(std::span<const uint8_t> bytes, size_t expected_size);

} // namespace qv
