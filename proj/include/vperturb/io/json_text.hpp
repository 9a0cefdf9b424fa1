#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>

namespace vperturb::io {

// Fixed-format rendering of a float: 17 significant digits, "null" when not finite.
std::string format_double(double v);

// Compact JSON text in which every floating-point number is written with 17
// significant digits. Object keys keep insertion order when the value is an
// ordered_json.
std::string dump(const nlohmann::ordered_json& value);
// Same, indented by two spaces per level.
std::string dump_pretty(const nlohmann::ordered_json& value);

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

// RFC 4180 field quoting.
std::string csv_field(const std::string& field);

}  // namespace vperturb::io
