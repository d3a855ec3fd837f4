#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <utility>

namespace sbevloc {

/// Exact streaming sum of doubles (Shewchuk partials, as in Python's
/// math.fsum). The result is the correctly rounded value of the exact sum and
/// therefore independent of summation order. Used where a reduction must be
/// bit-identical under permutation of its inputs. Storage is inline: the
/// partials of an exact sum are non-overlapping doubles, so at most ~40 can
/// coexist across the full exponent range.
class ExactSum {
public:
    void add(double x) {
        std::size_t i = 0;
        for (std::size_t j = 0; j < count_; ++j) {
            double y = partials_[j];
            if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
            double hi = x + y;
            double lo = y - (hi - x);
            if (lo != 0.0) partials_[i++] = lo;
            x = hi;
        }
        partials_[i] = x;
        count_ = i + 1;
    }

    /// Correctly rounded total. Rounds from the largest partial down, with
    /// the same halfway-case correction CPython's math.fsum applies.
    double total() const {
        std::size_t n = count_;
        if (n == 0) return 0.0;
        double hi = partials_[--n];
        double lo = 0.0;
        while (n > 0) {
            double x = hi;
            double y = partials_[--n];
            hi = x + y;
            double yr = hi - x;
            lo = y - yr;
            if (lo != 0.0) break;
        }
        if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) ||
                      (lo > 0.0 && partials_[n - 1] > 0.0))) {
            double y = lo * 2.0;
            double x = hi + y;
            if (y == x - hi) hi = x;
        }
        return hi;
    }

    void reset() { count_ = 0; }

private:
    std::array<double, 48> partials_{};
    std::size_t count_ = 0;
};

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace sbevloc
