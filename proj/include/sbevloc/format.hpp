#pragma once

#include <cstdio>
#include <string>

namespace sbevloc {

/// Shortest round-trippable decimal form of a double. All text outputs
/// (CSVs, config snapshots, world files) go through this so that repeated
/// runs produce byte-identical files.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) {
        // Try shorter representations that still round-trip.
        for (int prec = 1; prec < 17; ++prec) {
            char s[40];
            std::snprintf(s, sizeof(s), "%.*g", prec, v);
            double b = 0.0;
            std::sscanf(s, "%lf", &b);
            if (b == v) return s;
        }
    }
    return buf;
}

}  // namespace sbevloc
