#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace omt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitVerification = 2;

// args excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

// "10M,20M,1.5B,4096": decimal K/M/B suffixes.
std::int64_t parse_count(const std::string& s);
std::vector<std::int64_t> parse_count_list(const std::string& s);
// "0,0.1,...,1.0" expands the arithmetic run between the two neighbours of "...".
std::vector<double> parse_real_list(const std::string& s);
// "4096..524288" doubles from the low end; plain comma lists are taken as is.
std::vector<std::int64_t> parse_ladder(const std::string& s);

// Shortest round-trip decimal form.
std::string format_real(double v);

}  // namespace omt::cli
