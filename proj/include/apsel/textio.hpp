#ifndef APSEL_TEXTIO_HPP
#define APSEL_TEXTIO_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace apsel {

// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

// Strict parse: the whole cell must be a finite real number.
double parse_double(std::string_view cell, const std::string& context);

std::vector<std::string> split_csv_line(const std::string& line);
std::string join_csv(const std::vector<std::string>& cells);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// FNV-1a 64-bit, hex encoded. Used for model and artifact checksums.
std::string fnv1a_hex(std::string_view bytes);

} // namespace apsel

#endif
