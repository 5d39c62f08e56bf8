#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "wmqd/simulator.h"

namespace wmqd::csv {

/// Locale-independent, round-trip-exact rendering of a double ("nan" and
/// "inf" for non-finite values).
std::string format_number(double v);

extern const char* const kSweepHeader;
extern const char* const kTraceHeader;

void write_sweep(std::ostream& out, const std::vector<SweepPoint>& points);
void write_trace_row(std::ostream& out, long k, double statistic,
                     double threshold, bool alarm);

}  // namespace wmqd::csv
