#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cogscreen {

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames, so readers never observe a
// partial file.
void write_file(const std::filesystem::path& path, std::string_view content);

std::string sha256_hex(std::string_view data);
std::string base64_encode(std::span<const unsigned char> bytes);
std::vector<unsigned char> base64_decode(std::string_view text);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Population-free summary helpers shared by corpus and metrics code.
double mean(std::span<const double> values);
// n-1 denominator; 0 for fewer than two values.
double sample_std(std::span<const double> values);
// Linear interpolation between order statistics (numpy's default), q in [0,1].
double quantile(std::vector<double> values, double q);

// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF tolerated.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::string csv_escape(std::string_view field);

// Shortest decimal that round-trips the double.
std::string format_double(double value);

}  // namespace cogscreen
