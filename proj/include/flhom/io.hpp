#pragma once

#include "flhom/photonsim.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flhom {

/// Shortest round-trip decimal representation.
std::string format_double(double v);

/// FNV-1a 64-bit hash as 16 lowercase hex digits.
std::string fnv1a64_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling file and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// ---------------------------------------------------------------------------
// Trace CSV: optional '#' comment lines, then the header
//   delay_ps,coincidences,singles1,singles2,normalized,dwell_s

inline constexpr std::string_view kTraceCsvHeader = "delay_ps,coincidences,singles1,singles2,normalized,dwell_s";

std::string trace_to_csv(const Trace& trace, std::span<const std::string> comments = {});
Trace trace_from_csv(std::string_view text, const std::string& source = "<memory>");
Trace read_trace_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// FLH1 timestamp stream, little-endian:
//   header (16 bytes): "FLH1", u16 version, u64 rep_rate in mHz, 2 reserved zero bytes
//   record (17 bytes): u8 channel, u64 pulse_index, i64 intra_pulse_time (fs)

inline constexpr std::uint16_t kFlh1Version = 1;
inline constexpr std::size_t kFlh1HeaderSize = 16;
inline constexpr std::size_t kFlh1RecordSize = 17;

struct TimestampFile {
    double rep_rate = 0.0; // Hz
    std::vector<PhotonRecord> records;
};

std::string encode_flh1(double rep_rate, std::span<const PhotonRecord> records);
TimestampFile decode_flh1(std::string_view bytes);

} // namespace flhom
