#include "qv/decode.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>

#include <omp.h>

namespace qv {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

} // namespace

void SampleSpec::validate(uint64_t frame_count) const {
    if (indices.empty()) throw Error("sample spec: no frame indices");
    uint64_t prev = 0;
    bool first = true;
    for (uint64_t i : indices) {
        if (!first && i <= prev) throw Error("sample spec: indices must be strictly increasing");
        if (i >= frame_count) throw Error("sample spec: index out of range");
        prev = i;
        first = false;
    }
}

FrameBuffer::FrameBuffer(size_t slots, uint32_t width, uint32_t height)
    : slots_(slots),
      width_(width),
      height_(height),
      data_(slots * size_t{3} * width * height),
      fill_(new std::atomic<uint32_t>[slots]) {
    for (size_t i = 0; i < slots; ++i) fill_[i].store(0, std::memory_order_relaxed);
}

void FrameBuffer::write_slot(size_t j, std::span<const uint8_t> pixels) {
    std::copy(pixels.begin(), pixels.end(), slot(j).begin());
    fill_[j].fetch_add(1, std::memory_order_relaxed);
}

bool FrameBuffer::all_filled_once() const {
    for (size_t i = 0; i < slots_; ++i)
        if (fill_count(i) != 1) return false;
    return true;
}

bool FrameBuffer::same_pixels(const FrameBuffer& other) const {
    return slots_ == other.slots_ && width_ == other.width_ && height_ == other.height_ &&
           data_ == other.data_;
}

OffsetMap make_offset_map(const SampleSpec& spec) {
    OffsetMap map;
    map.reserve(spec.indices.size());
    for (size_t k = 0; k < spec.indices.size(); ++k) map.emplace(spec.indices[k], k);
    return map;
}

uint64_t frame_index(uint64_t pts, uint64_t pts_min, uint64_t pts_max, uint64_t frame_count) {
    if (frame_count < 2) throw Error("frame_index: frame count must be >= 2");
    if (pts < pts_min || pts > pts_max) throw Error("pts out of range");
    const unsigned __int128 num =
        (unsigned __int128)(frame_count - 1) * (pts - pts_min);
    const unsigned __int128 den = pts_max - pts_min;
    // Round to nearest, halves away from zero: floor((2*num + den) / (2*den)).
    return uint64_t((2 * num + den) / (2 * den));
}

uint64_t pts_for_index(uint64_t index, uint64_t pts_min, uint64_t pts_max,
                       uint64_t frame_count) {
    if (frame_count < 2) return pts_min;
    const unsigned __int128 num = (unsigned __int128)index * (pts_max - pts_min);
    const unsigned __int128 den = frame_count - 1;
    return pts_min + uint64_t((2 * num + den) / (2 * den));
}

FrameBuffer sequential_slice(const VideoFile& file, const SampleSpec& spec) {
    spec.validate(file.frame_count);
    FrameBuffer buf(spec.indices.size(), file.width, file.height);
    DecoderQueue dec(file.width, file.height);
    size_t next_slot = 0;
    uint64_t position = 0;
    for (const Packet& p : file.packets) {
        dec.enqueue(p);
        while (auto f = dec.dequeue()) {
            if (next_slot < spec.indices.size() && position == spec.indices[next_slot]) {
                buf.write_slot(next_slot, f->pixels);
                ++next_slot;
            }
            ++position;
        }
        if (next_slot == spec.indices.size()) return buf;
    }
    dec.flush();
    if (next_slot != spec.indices.size())
        throw Error("stream ended before all requested frames were decoded");
    return buf;
}

DecodeResult decode_seek_based(const VideoFile& file, const SampleSpec& spec) {
    spec.validate(file.frame_count);
    const auto t0 = Clock::now();
    const ScanResult scan = scan_packets(file);
    const uint64_t m = file.frame_count;

    DecodeResult result;
    result.buffer = FrameBuffer(spec.indices.size(), file.width, file.height);

    DecoderQueue dec(file.width, file.height);
    for (size_t k = 0; k < spec.indices.size(); ++k) {
        const uint64_t target = spec.indices[k];
        const uint64_t pts_estimate =
            pts_for_index(target, scan.pts_min, scan.pts_max, m);
        const size_t start = seek(file, pts_estimate);
        dec.reset(); // seek flushes decoder buffers and reinitializes state
        ++result.stats.seeks;

        bool found = false;
        for (size_t i = start; i < file.packets.size() && !found; ++i) {
            dec.enqueue(file.packets[i]);
            while (auto f = dec.dequeue()) {
                const uint64_t idx =
                    m == 1 ? 0 : frame_index(f->pts, scan.pts_min, scan.pts_max, m);
                if (idx == target) {
                    result.buffer.write_slot(k, f->pixels);
                    found = true;
                    break;
                }
                if (idx > target)
                    throw Error("seek decode overshot the target frame");
            }
        }
        if (!found) throw Error("stream ended before the target frame was decoded");
    }
    result.stats.wall_ms = ms_since(t0);
    return result;
}

namespace detail {

void decode_one_interval(const VideoFile& file, const ScanResult& scan,
                         const OffsetMap& offsets, uint64_t interval_start,
                         uint64_t interval_end, bool last_interval,
                         FrameBuffer& out, const IntervalHooks* hooks, size_t index) {
    const uint64_t m = file.frame_count;
    const size_t start_packet = seek(file, interval_start);
    DecoderQueue dec(file.width, file.height);
    if (hooks && hooks->on_start) hooks->on_start(index);

    bool past_end = false;
    for (size_t i = start_packet; i < file.packets.size() && !past_end; ++i) {
        dec.enqueue(file.packets[i]);
        while (auto f = dec.dequeue()) {
            // A dequeued frame at or past the interval end stops the worker;
            // the next interval's worker decodes it again from its keyframe.
            if (last_interval ? f->pts > interval_end : f->pts >= interval_end) {
                past_end = true;
                break;
            }
            const uint64_t idx =
                m == 1 ? 0 : frame_index(f->pts, scan.pts_min, scan.pts_max, m);
            auto it = offsets.find(idx);
            if (it != offsets.end()) out.write_slot(it->second, f->pixels);
        }
    }
    if (hooks && hooks->on_done) hooks->on_done(index);
}

} // namespace detail

DecodeResult decode_intervals(const VideoFile& file, const SampleSpec& spec,
                              const IntervalSet& plan, size_t cores,
                              const IntervalHooks* hooks) {
    spec.validate(file.frame_count);
    if (cores == 0) throw Error("decode: cores must be >= 1");
    if (plan.interval_count() == 0) throw Error("decode: empty interval plan");

    const auto t0 = Clock::now();
    const ScanResult scan = scan_packets(file);
    const OffsetMap offsets = make_offset_map(spec);

    DecodeResult result;
    result.buffer = FrameBuffer(spec.indices.size(), file.width, file.height);
    result.stats.intervals = plan.interval_count();
    result.stats.seeks = plan.interval_count();

    const size_t n = plan.interval_count();
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mu;

    // Workers pull the lowest-start unclaimed interval; boundaries are
    // sorted, so claim order is earliest-first.
    #pragma omp parallel num_threads(int(std::min(cores, n)))
    {
        for (;;) {
            if (failed.load(std::memory_order_relaxed)) break;
            const size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) break;
            try {
                auto [start, end] = plan.interval(i);
                detail::decode_one_interval(file, scan, offsets, start, end,
                                            plan.is_last(i), result.buffer, hooks, i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!error) error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
            }
        }
    }
    if (error) std::rethrow_exception(error);

    result.stats.wall_ms = ms_since(t0);
    return result;
}

DecodeResult decode_parallel(const VideoFile& file, const SampleSpec& spec, size_t cores) {
    if (cores == 0) throw Error("decode: cores must be >= 1");
    const auto t0 = Clock::now();
    IntervalSet plan = keyframe_intervals(file, cores);
    DecodeResult result = decode_intervals(file, spec, plan, cores);
    result.stats.wall_ms = ms_since(t0);
    return result;
}

Frame resize_bilinear(const Frame& frame, uint32_t out_height, uint32_t out_width) {
    if (out_height == 0 || out_width == 0) throw Error("resize: zero target dimensions");
    Frame out;
    out.width = out_width;
    out.height = out_height;
    out.pts = frame.pts;
    out.pixels.resize(size_t{3} * out_width * out_height);

    const double scale_y = double(frame.height) / out_height;
    const double scale_x = double(frame.width) / out_width;
    const size_t in_plane = size_t{frame.width} * frame.height;
    const size_t out_plane = size_t{out_width} * out_height;

    for (uint32_t y = 0; y < out_height; ++y) {
        double sy = (y + 0.5) * scale_y - 0.5;
        sy = std::clamp(sy, 0.0, double(frame.height - 1));
        const uint32_t y0 = uint32_t(sy);
        const uint32_t y1 = std::min(y0 + 1, frame.height - 1);
        const double fy = sy - y0;
        for (uint32_t x = 0; x < out_width; ++x) {
            double sx = (x + 0.5) * scale_x - 0.5;
            sx = std::clamp(sx, 0.0, double(frame.width - 1));
            const uint32_t x0 = uint32_t(sx);
            const uint32_t x1 = std::min(x0 + 1, frame.width - 1);
            const double fx = sx - x0;
            for (uint32_t c = 0; c < 3; ++c) {
                const uint8_t* in = frame.pixels.data() + c * in_plane;
                const double v00 = in[size_t{y0} * frame.width + x0];
                const double v01 = in[size_t{y0} * frame.width + x1];
                const double v10 = in[size_t{y1} * frame.width + x0];
                const double v11 = in[size_t{y1} * frame.width + x1];
                const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                 fy * ((1 - fx) * v10 + fx * v11);
                out.pixels[c * out_plane + size_t{y} * out_width + x] =
                    uint8_t(std::lround(v));
            }
        }
    }
    return out;
}

std::vector<uint64_t> sample_indices_fps(const VideoFile& file, double rate) {
    if (rate <= 0) throw Error("sample rate must be positive");
    const uint64_t duration = file.duration_ticks();
    std::vector<uint64_t> indices;
    if (file.frame_count == 1 || duration == 0) return {0};
    const double step = double(kTicksPerSecond) / rate;
    for (double t = 0; t <= double(duration); t += step) {
        const uint64_t idx =
            frame_index(uint64_t(std::llround(t)), 0, duration, file.frame_count);
        if (indices.empty() || idx > indices.back()) indices.push_back(idx);
    }
    return indices;
}

std::vector<uint64_t> sample_indices_gap(uint64_t frame_count, uint64_t gap) {
    if (gap == 0) throw Error("sample gap must be >= 1");
    std::vector<uint64_t> indices;
    for (uint64_t i = 0; i < frame_count; i += gap) indices.push_back(i);
    return indices;
}

} // namespace qv
