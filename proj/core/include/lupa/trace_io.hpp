#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "lupa/engine.hpp"

namespace lupa {

/// Fixed CSV header, in column order.
inline constexpr const char* kTraceCsvHeader =
    "t,comm_rounds,F_gap,grad_norm_sq,divergence,deviation_sq";

/// One row per record; values printed with %.17g, absent deviation left
/// empty.
void write_trace_csv(std::ostream& out, const Trace& trace);
std::string trace_to_csv(const Trace& trace);

/// Trace as JSON; `config` is embedded verbatim under "config".
nlohmann::json trace_to_json(const Trace& trace,
                             const nlohmann::json& config = nullptr);

std::string to_string(RunStatus status);

}  // namespace lupa
