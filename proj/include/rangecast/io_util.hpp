#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rangecast {

// Reads a whole file into memory. Files whose first two bytes are the gzip
// magic (0x1f 0x8b) are decompressed transparently; everything else is
// returned verbatim. Throws std::runtime_error on I/O failure.
std::string read_text_file(const std::string& path);

// Writes to "<path>.tmp" then renames, so readers never observe a partial
// file. Creates parent directories as needed.
void write_file_atomic(const std::string& path, std::string_view content);

// FNV-1a 64-bit hash, as a fixed-width lowercase hex string.
std::uint64_t fnv1a64(std::string_view data);
std::string fnv1a64_hex(std::string_view data);
std::string hash_file(const std::string& path);

// Shortest round-trip decimal representation of a double ("" is never
// produced; NaN renders as "nan"). Used for every numeric CSV field so that
// emitted artifacts are byte-stable and parse back to the identical double.
std::string fmt_double(double v);

// Splits one CSV record on `sep` without quoting rules (none of the formats
// this project reads or writes quote fields).
std::vector<std::string_view> split_fields(std::string_view line, char sep);

}  // namespace rangecast
