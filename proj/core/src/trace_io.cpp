#include "lupa/trace_io.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

namespace lupa {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(RunStatus status) {
  return status == RunStatus::Completed ? "completed" : "diverged";
}

void write_trace_csv(std::ostream& out, const Trace& trace) {
  out << kTraceCsvHeader << '\n';
  for (const auto& r : trace.records) {
    out << r.t << ',' << r.comm_rounds << ',' << fmt(r.f_gap) << ','
        << fmt(r.grad_norm_sq) << ',' << fmt(r.divergence) << ',';
    if (r.deviation_sq) out << fmt(*r.deviation_sq);
    out << '\n';
  }
}

std::string trace_to_csv(const Trace& trace) {
  std::ostringstream out;
  write_trace_csv(out, trace);
  return out.str();
}

nlohmann::json trace_to_json(const Trace& trace, const nlohmann::json& config) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : trace.records) {
    nlohmann::json row{{"t", r.t},
                       {"comm_rounds", r.comm_rounds},
                       {"F_gap", r.f_gap},
                       {"grad_norm_sq", r.grad_norm_sq},
                       {"divergence", r.divergence}};
    row["deviation_sq"] = r.deviation_sq ? nlohmann::json(*r.deviation_sq)
                                         : nlohmann::json(nullptr);
    records.push_back(std::move(row));
  }
  nlohmann::json j{{"config", config},
                   {"status", to_string(trace.status)},
                   {"diagnostic", trace.diagnostic},
                   {"f_star_known", trace.f_star_known},
                   {"total_comm_rounds", trace.total_comm_rounds},
                   {"periods", trace.periods},
                   {"final_x", trace.final_x},
                   {"schedule_fallbacks", trace.schedule_fallbacks},
                   {"records", std::move(records)}};
  return j;
}

}  // namespace lupa
