#include "qv/interval.hpp"

#include <algorithm>
#include <limits>

namespace qv {

ScanResult scan_packets(const VideoFile& file) {
    ScanResult scan;
    // The paper's pseudocode initializes min to -1 and max to +inf, which
    // never updates; the evident intent is the swapped initialization.
    scan.pts_min = std::numeric_limits<uint64_t>::max();
    scan.pts_max = 0;
    bool any = false;
    for (const Packet& p : file.packets) {
        if (p.kind != StreamKind::video) continue;
        if (!p.pts.has_value()) continue;
        any = true;
        scan.pts_min = std::min(scan.pts_min, *p.pts);
        scan.pts_max = std::max(scan.pts_max, *p.pts);
        if (p.keyframe) scan.keyframe_pts.push_back(*p.pts);
    }
    if (!any) throw Error("no video packets with pts");
    std::sort(scan.keyframe_pts.begin(), scan.keyframe_pts.end());
    scan.keyframe_pts.erase(
        std::unique(scan.keyframe_pts.begin(), scan.keyframe_pts.end()),
        scan.keyframe_pts.end());
    return scan;
}

IntervalSet keyframe_intervals(const ScanResult& scan, size_t c) {
    if (c == 0) throw Error("keyframe_intervals: c must be >= 1");
    const std::vector<uint64_t>& kf = scan.keyframe_pts;
    std::vector<uint64_t> bounds;
    bounds.push_back(scan.pts_min);
    const uint64_t span = scan.pts_max - scan.pts_min;
    for (size_t i = 1; i < c && !kf.empty(); ++i) {
        // i/c of the way through the stream. (The paper's line 6 multiplies
        // by c instead of the loop index; evident typo.)
        const uint64_t estimate = scan.pts_min + (uint64_t{i} * span) / c;
        auto it = std::lower_bound(kf.begin(), kf.end(), estimate);
        uint64_t snapped;
        if (it == kf.begin()) {
            snapped = kf.front();
        } else if (it == kf.end()) {
            snapped = kf.back();
        } else {
            const uint64_t after = *it;
            const uint64_t before = *std::prev(it);
            // Tie goes to the earlier keyframe.
            snapped = (after - estimate < estimate - before) ? after : before;
        }
        bounds.push_back(snapped);
    }
    bounds.push_back(scan.pts_max);

    std::sort(bounds.begin(), bounds.end());
    if (scan.pts_min == scan.pts_max) {
        // Degenerate single-timestamp stream: one closed interval.
        return IntervalSet{{scan.pts_min, scan.pts_max}};
    }
    bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());
    return IntervalSet{std::move(bounds)};
}

IntervalSet keyframe_intervals(const VideoFile& file, size_t c) {
    return keyframe_intervals(scan_packets(file), c);
}

} // namespace qv
