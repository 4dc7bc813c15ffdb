#pragma once

#include <utility>
#include <vector>

namespace sical {

/// Coarse time-offset search: finds the shift tau (probe clock + tau = base
/// clock) minimizing the summed squared difference between a probe signal and
/// a base signal, both given as (stamp, value) series. The base series is
/// linearly interpolated at the shifted probe stamps; probe samples falling
/// outside the base span are skipped. Returns 0 when no shift yields overlap.
double SearchOffset(const std::vector<std::pair<double, double>> &probe,
                    const std::vector<std::pair<double, double>> &base, double max_offset,
                    double step);

}  // namespace sical
