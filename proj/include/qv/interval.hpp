#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "qv/container.hpp"

namespace qv {

/// Packet-metadata scan summary: keyframe timestamps and the stream's pts
/// bounds, taken from video packets with a pts only.
struct ScanResult {
    std::vector<uint64_t> keyframe_pts; // strictly increasing
    uint64_t pts_min = 0;
    uint64_t pts_max = 0;
};

/// c+1 interval boundaries covering [pts_min, pts_max]; every interior
/// boundary sits on a keyframe. Interval i is [boundary(i), boundary(i+1)),
/// except the last one which is closed at pts_max.
struct IntervalSet {
    std::vector<uint64_t> boundaries;

    size_t interval_count() const {
        return boundaries.size() < 2 ? 0 : boundaries.size() - 1;
    }
    std::pair<uint64_t, uint64_t> interval(size_t i) const {
        return {boundaries[i], boundaries[i + 1]};
    }
    bool is_last(size_t i) const { return i + 2 == boundaries.size(); }
};

ScanResult scan_packets(const VideoFile& file);

/// Splits the stream into c approximately equal, keyframe-aligned intervals.
/// When c exceeds the keyframe count, duplicate boundaries collapse and
/// fewer intervals come back.
IntervalSet keyframe_intervals(const VideoFile& file, size_t c);
IntervalSet keyframe_intervals(const ScanResult& scan, size_t c);

} // namespace qv
