#include "qv/container.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace qv {

namespace {

constexpr char kMagic[4] = {'Q', 'V', 'S', '1'};
constexpr uint16_t kVersion = 1;

// Frame body layout inside the packetized payload stream:
//   u32 body_len | u8 kind (0=key, 1=delta) | u64 pts | u32 pixel checksum | RLE bytes
constexpr size_t kBodyHeaderBytes = 1 + 8 + 4;

enum class FrameKind : uint8_t { key = 0, delta = 1 };

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v));
    out.push_back(uint8_t(v >> 8));
}
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}
void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

struct ByteReader {
    std::span<const uint8_t> bytes;
    size_t pos = 0;

    bool need(size_t n, const char* what) {
        if (pos + n > bytes.size()) throw Error(std::string("truncated ") + what);
        return true;
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return bytes[pos++];
    }
    uint16_t u16(const char* what) {
        need(2, what);
        uint16_t v = uint16_t(bytes[pos]) | uint16_t(bytes[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
};

// Accumulates the compressed body stream and chops it into packets of at
// most max_packet_bytes. A fresh packet starts at every keyframe body (so
// seek targets begin at packet offset 0) and at the final frame body (so
// the stream's pts_max is visible to a metadata-only scan).
class Packetizer {
public:
    Packetizer(std::vector<Packet>& out, std::vector<size_t>& keyframe_packets,
               const EncodeConfig& config)
        : out_(out), keyframe_packets_(keyframe_packets), config_(config) {}

    void add_body(FrameKind kind, uint64_t pts, std::span<const uint8_t> body, bool last_frame) {
        if (kind == FrameKind::key || last_frame) flush_packet();
        if (current_.empty()) {
            first_byte_pts_ = pts;
            starts_with_keyframe_ = (kind == FrameKind::key);
        }
        for (uint8_t b : body) {
            current_.push_back(b);
            current_owner_pts_ = pts;
            if (current_.size() == config_.max_packet_bytes) flush_packet();
        }
    }

    void finish() { flush_packet(); }

private:
    void flush_packet() {
        if (current_.empty()) return;
        if (starts_with_keyframe_) keyframe_packets_.push_back(out_.size());
        Packet p;
        p.kind = StreamKind::video;
        p.pts = first_byte_pts_;
        p.keyframe = starts_with_keyframe_;
        p.payload = std::move(current_);
        out_.push_back(std::move(p));
        current_.clear();
        first_byte_pts_ = current_owner_pts_;
        starts_with_keyframe_ = false;
        ++video_packets_since_audio_;
        maybe_emit_audio();
    }

    void maybe_emit_audio() {
        if (config_.audio_interleave_period == 0) return;
        if (video_packets_since_audio_ < config_.audio_interleave_period) return;
        video_packets_since_audio_ = 0;
        Packet a;
        a.kind = StreamKind::audio;
        // Half the audio packets carry no pts, exercising the scanner's
        // NULL-pts skip branch.
        if (audio_counter_++ % 2 == 0) {
            a.pts = current_owner_pts_ + config_.ticks_per_frame / 2;
        }
        a.keyframe = false;
        a.payload = {0xa0, 0xd1, 0x0a, 0xa0, 0xd1, 0x0a, 0x00, 0x00};
        out_.push_back(std::move(a));
    }

    std::vector<Packet>& out_;
    std::vector<size_t>& keyframe_packets_;
    const EncodeConfig& config_;
    std::vector<uint8_t> current_;
    uint64_t first_byte_pts_ = 0;
    uint64_t current_owner_pts_ = 0;
    bool starts_with_keyframe_ = false;
    uint32_t video_packets_since_audio_ = 0;
    uint64_t audio_counter_ = 0;
};

} // namespace

uint32_t fnv1a32(std::span<const uint8_t> bytes) {
    uint32_t h = 0x811c9dc5u;
    for (uint8_t b : bytes) {
        h ^= b;
        h *= 0x01000193u;
    }
    return h;
}

uint64_t fnv1a64(std::span<const uint8_t> bytes) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

// PackBits-style RLE. Control byte n: n <= 127 copies n+1 literal bytes;
// n >= 129 repeats the next byte 257-n times (runs of 2..128); 128 unused.
std::vector<uint8_t> rle_compress(std::span<const uint8_t> bytes) {
    std::vector<uint8_t> out;
    out.reserve(bytes.size() / 8 + 16);
    size_t i = 0;
    const size_t n = bytes.size();
    while (i < n) {
        // Measure the run at i.
        size_t run = 1;
        while (i + run < n && run < 128 && bytes[i + run] == bytes[i]) ++run;
        if (run >= 3 || (run == 2 && (i + run == n))) {
            out.push_back(uint8_t(257 - run));
            out.push_back(bytes[i]);
            i += run;
            continue;
        }
        // Literal run: scan until the next repeat of 3+ or 128 bytes.
        size_t start = i;
        size_t lit = 0;
        while (i < n && lit < 128) {
            size_t ahead = 1;
            while (i + ahead < n && ahead < 3 && bytes[i + ahead] == bytes[i]) ++ahead;
            if (ahead >= 3) break;
            ++i;
            ++lit;
        }
        out.push_back(uint8_t(lit - 1));
        out.insert(out.end(), bytes.begin() + start, bytes.begin() + start + lit);
    }
    return out;
}

std::vector<uint8_t> rle_decompress(std::span<const uint8_t> bytes, size_t expected_size) {
    std::vector<uint8_t> out;
    out.reserve(expected_size);
    size_t i = 0;
    while (i < bytes.size()) {
        uint8_t control = bytes[i++];
        if (control <= 127) {
            size_t count = size_t{control} + 1;
            if (i + count > bytes.size()) throw Error("corrupt payload: literal run overflows body");
            out.insert(out.end(), bytes.begin() + i, bytes.begin() + i + count);
            i += count;
        } else if (control >= 129) {
            if (i >= bytes.size()) throw Error("corrupt payload: repeat run overflows body");
            size_t count = 257 - size_t{control};
            out.insert(out.end(), count, bytes[i++]);
        } else {
            throw Error("corrupt payload: reserved RLE control byte");
        }
        if (out.size() > expected_size) throw Error("corrupt payload: decoded size mismatch");
    }
    if (out.size() != expected_size) throw Error("corrupt payload: decoded size mismatch");
    return out;
}

VideoFile encode_stream(const FrameSource& source, uint64_t frame_count,
                        uint32_t width, uint32_t height, const EncodeConfig& config) {
    if (frame_count == 0) throw Error("encode: empty frame list");
    if (width == 0 || height == 0) throw Error("encode: zero frame dimensions");
    if (config.keyframe_period == 0) throw Error("encode: keyframe_period must be >= 1");
    if (config.max_packet_bytes == 0) throw Error("encode: max_packet_bytes must be >= 1");
    if (config.ticks_per_frame == 0) throw Error("encode: ticks_per_frame must be >= 1");

    VideoFile file;
    file.version = kVersion;
    file.width = width;
    file.height = height;
    file.frame_count = frame_count;
    file.ticks_per_frame = config.ticks_per_frame;
    file.keyframe_period = config.keyframe_period;
    file.max_packet_bytes = config.max_packet_bytes;

    const size_t pixel_bytes = size_t{3} * width * height;
    std::vector<uint8_t> cur(pixel_bytes);
    std::vector<uint8_t> prev(pixel_bytes);
    std::vector<uint8_t> residual(pixel_bytes);

    Packetizer packetizer(file.packets, file.keyframe_packets, config);

    for (uint64_t i = 0; i < frame_count; ++i) {
        source(i, cur);
        const uint64_t pts = i * uint64_t{config.ticks_per_frame};
        const bool key = (i % config.keyframe_period == 0);

        std::vector<uint8_t> compressed;
        if (key) {
            compressed = rle_compress(cur);
        } else {
            for (size_t b = 0; b < pixel_bytes; ++b)
                residual[b] = uint8_t(cur[b] - prev[b]); // wrapping
            compressed = rle_compress(residual);
        }

        std::vector<uint8_t> body;
        body.reserve(4 + kBodyHeaderBytes + compressed.size());
        put_u32(body, uint32_t(kBodyHeaderBytes + compressed.size()));
        body.push_back(uint8_t(key ? FrameKind::key : FrameKind::delta));
        put_u64(body, pts);
        put_u32(body, fnv1a32(cur));
        body.insert(body.end(), compressed.begin(), compressed.end());

        packetizer.add_body(key ? FrameKind::key : FrameKind::delta, pts, body,
                            i + 1 == frame_count);
        std::swap(prev, cur);
    }
    packetizer.finish();
    return file;
}

VideoFile encode(const std::vector<Frame>& frames, const EncodeConfig& config) {
    if (frames.empty()) throw Error("encode: empty frame list");
    const uint32_t w = frames[0].width;
    const uint32_t h = frames[0].height;
    for (const Frame& f : frames) {
        if (f.width != w || f.height != h) throw Error("encode: mismatched frame shapes");
        if (f.pixels.size() != size_t{3} * w * h) throw Error("encode: pixel count != 3*h*w");
    }
    return encode_stream(
        [&](uint64_t i, std::span<uint8_t> out) {
            std::copy(frames[i].pixels.begin(), frames[i].pixels.end(), out.begin());
        },
        frames.size(), w, h, config);
}

std::vector<uint8_t> serialize(const VideoFile& file) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16(out, file.version);
    put_u32(out, file.width);
    put_u32(out, file.height);
    put_u64(out, file.frame_count);
    put_u32(out, file.ticks_per_frame);
    put_u32(out, file.keyframe_period);
    put_u32(out, file.max_packet_bytes);
    put_u64(out, file.packets.size());
    for (const Packet& p : file.packets) {
        out.push_back(uint8_t(p.kind));
        out.push_back(p.pts.has_value() ? 1 : 0);
        put_u64(out, p.pts.value_or(0));
        out.push_back(p.keyframe ? 1 : 0);
        put_u32(out, uint32_t(p.payload.size()));
        out.insert(out.end(), p.payload.begin(), p.payload.end());
    }
    return out;
}

void write_file(const VideoFile& file, const std::string& path) {
    std::vector<uint8_t> bytes = serialize(file);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error("write failed: " + path);
}

VideoFile parse(std::span<const uint8_t> bytes) {
    ByteReader r{bytes};
    r.need(4, "header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error("bad magic");
    r.pos = 4;

    VideoFile file;
    file.version = r.u16("header");
    if (file.version != kVersion) throw Error("version mismatch");
    file.width = r.u32("header");
    file.height = r.u32("header");
    file.frame_count = r.u64("header");
    file.ticks_per_frame = r.u32("header");
    file.keyframe_period = r.u32("header");
    file.max_packet_bytes = r.u32("header");
    const uint64_t packet_count = r.u64("header");

    file.packets.reserve(packet_count);
    bool has_video = false;
    for (uint64_t i = 0; i < packet_count; ++i) {
        Packet p;
        uint8_t kind = r.u8("packet");
        if (kind > 1) throw Error("truncated packet: bad stream kind");
        p.kind = StreamKind(kind);
        const bool pts_present = r.u8("packet") != 0;
        const uint64_t pts = r.u64("packet");
        if (pts_present) p.pts = pts;
        p.keyframe = r.u8("packet") != 0;
        const uint32_t len = r.u32("packet");
        r.need(len, "packet");
        p.payload.assign(bytes.begin() + r.pos, bytes.begin() + r.pos + len);
        r.pos += len;
        if (p.kind == StreamKind::video) {
            has_video = true;
            if (p.keyframe) file.keyframe_packets.push_back(file.packets.size());
        }
        file.packets.push_back(std::move(p));
    }
    if (r.pos != bytes.size()) throw Error("truncated packet: trailing bytes");
    if (!has_video) throw Error("no video stream");
    return file;
}

VideoFile open(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return parse(bytes);
}

DecoderQueue::DecoderQueue(uint32_t width, uint32_t height)
    : width_(width), height_(height) {
    if (width == 0 || height == 0) throw Error("decoder: zero frame dimensions");
}

void DecoderQueue::enqueue(const Packet& packet) {
    if (packet.kind != StreamKind::video) return;
    if (flushed_) throw Error("decoder: enqueue after flush");
    acc_.insert(acc_.end(), packet.payload.begin(), packet.payload.end());
    drain_bodies();
}

void DecoderQueue::drain_bodies() {
    for (;;) {
        const size_t avail = acc_.size() - acc_pos_;
        if (avail < 4) break;
        uint32_t body_len = 0;
        for (int i = 0; i < 4; ++i) body_len |= uint32_t(acc_[acc_pos_ + i]) << (8 * i);
        if (avail < 4 + size_t{body_len}) break;
        decode_body(std::span<const uint8_t>(acc_).subspan(acc_pos_ + 4, body_len));
        acc_pos_ += 4 + size_t{body_len};
    }
    // Compact consumed bytes so the accumulator stays bounded.
    if (acc_pos_ > 0 && acc_pos_ == acc_.size()) {
        acc_.clear();
        acc_pos_ = 0;
    } else if (acc_pos_ > (1u << 20)) {
        acc_.erase(acc_.begin(), acc_.begin() + std::ptrdiff_t(acc_pos_));
        acc_pos_ = 0;
    }
}

void DecoderQueue::decode_body(std::span<const uint8_t> body) {
    if (body.size() < kBodyHeaderBytes) throw Error("corrupt payload: body too short");
    ByteReader r{body};
    const uint8_t kind = r.u8("body");
    if (kind > 1) throw Error("corrupt payload: bad frame kind");
    const uint64_t pts = r.u64("body");
    const uint32_t want_checksum = r.u32("body");

    const size_t pixel_bytes = size_t{3} * width_ * height_;
    std::vector<uint8_t> pixels =
        rle_decompress(body.subspan(kBodyHeaderBytes), pixel_bytes);

    if (FrameKind(kind) == FrameKind::delta) {
        if (prev_.empty())
            throw Error("corrupt payload: delta frame with no reference");
        for (size_t i = 0; i < pixel_bytes; ++i)
            pixels[i] = uint8_t(pixels[i] + prev_[i]); // wrapping add of residual
    }
    if (fnv1a32(pixels) != want_checksum)
        throw Error("corrupt payload checksum");

    prev_ = pixels;
    Frame f;
    f.width = width_;
    f.height = height_;
    f.pts = pts;
    f.pixels = std::move(pixels);
    ready_.push_back(std::move(f));
}

void DecoderQueue::flush() {
    flushed_ = true;
    if (acc_.size() - acc_pos_ != 0)
        throw Error("truncated packet: partial frame body at end of stream");
}

void DecoderQueue::reset() {
    acc_.clear();
    acc_pos_ = 0;
    prev_.clear();
    ready_.clear();
    flushed_ = false;
}

std::optional<Frame> DecoderQueue::dequeue() {
    if (ready_.empty()) return std::nullopt;
    Frame f = std::move(ready_.front());
    ready_.pop_front();
    return f;
}

std::vector<Frame> decode_sequential(const VideoFile& file) {
    DecoderQueue dec(file.width, file.height);
    std::vector<Frame> frames;
    frames.reserve(file.frame_count);
    for (const Packet& p : file.packets) {
        dec.enqueue(p);
        while (auto f = dec.dequeue()) frames.push_back(std::move(*f));
    }
    dec.flush();
    while (auto f = dec.dequeue()) frames.push_back(std::move(*f));
    return frames;
}

size_t seek(const VideoFile& file, uint64_t pts) {
    if (file.keyframe_packets.empty()) throw Error("no video stream");
    const uint64_t first_pts = file.packets[file.keyframe_packets.front()].pts.value();
    if (pts < first_pts || pts > file.duration_ticks()) throw Error("pts out of range");
    // Latest keyframe packet with pts <= target.
    auto it = std::upper_bound(
        file.keyframe_packets.begin(), file.keyframe_packets.end(), pts,
        [&](uint64_t target, size_t idx) { return target < file.packets[idx].pts.value(); });
    return *std::prev(it);
}

} // namespace qv
