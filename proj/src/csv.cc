#include "wmqd/csv.h"

#include <charconv>
#include <cmath>

namespace wmqd::csv {

const char* const kSweepHeader =
    "budget_J,delta_lqg,kld_opt,kld_subopt,sadd_pred_opt,sadd_pred_subopt,"
    "sadd_emp,sadd_ci";
const char* const kTraceHeader = "k,statistic,threshold,alarm";

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_sweep(std::ostream& out, const std::vector<SweepPoint>& points) {
  out << kSweepHeader << '\n';
  for (const auto& p : points) {
    out << format_number(p.budget_J) << ',' << format_number(p.delta_lqg) << ','
        << format_number(p.kld_opt) << ',' << format_number(p.kld_subopt) << ','
        << format_number(p.sadd_pred_opt) << ','
        << format_number(p.sadd_pred_subopt) << ','
        << format_number(p.sadd_emp) << ',' << format_number(p.sadd_ci) << '\n';
  }
}

void write_trace_row(std::ostream& out, long k, double statistic,
                     double threshold, bool alarm) {
  out << k << ',' << format_number(statistic) << ','
      << format_number(threshold) << ',' << (alarm ? 1 : 0) << '\n';
}

}  // namespace wmqd::csv
