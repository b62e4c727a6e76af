#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace prefaudit::detail {

std::string read_file(const std::filesystem::path& path);

// Writes through a temporary sibling and renames, so readers never observe a
// half-written file.
void write_file(const std::filesystem::path& path, std::string_view content);

/// Calls `fn(row, line_number)` for each non-blank line. Parse failures raise
/// SchemaViolation carrying the 1-based line number.
void for_each_jsonl(std::string_view text,
                    const std::function<void(const nlohmann::json&, std::size_t)>& fn);

std::string sha256_hex(std::string_view data);

std::string_view trim(std::string_view text) noexcept;

// Field accessors that raise SchemaViolation with the line number.
std::string require_string(const nlohmann::json& row, const char* field, std::size_t line);
double require_number(const nlohmann::json& row, const char* field, std::size_t line);

// Millisecond UTC timestamp from "YYYY-MM-DDTHH:MM:SS[.fff]Z".
std::optional<long long> parse_timestamp_ms(std::string_view text);
std::string format_timestamp_ms(long long ms);

std::string format_fixed(double value, int digits);

}  // namespace prefaudit::detail
