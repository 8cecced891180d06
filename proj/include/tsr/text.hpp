#pragma once

#include <string>

namespace tsr {

/// Shortest decimal form that parses back to the same double.
/// Integral values print without a trailing ".0" (42, not 42.0).
std::string format_number(double v);

/// RFC 4180 field quoting: wrap in quotes when the field contains
/// a comma, quote, CR or LF; embedded quotes are doubled.
std::string csv_quote(const std::string& field);

}  // namespace tsr
