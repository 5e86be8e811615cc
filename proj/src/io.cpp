#include "flhom/io.hpp"

#include "flhom/errors.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <type_traits>

namespace flhom {

std::string format_double(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

std::string fnv1a64_hex(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::array<char, 17> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + 16, h, 16);
    std::string s(buf.data(), res.ptr);
    return std::string(16 - s.size(), '0') + s;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents)
{
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open '" + tmp.string() + "' for writing");
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) {
            throw IoError("write to '" + tmp.string() + "' failed");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "'");
    }
}

// ---------------------------------------------------------------------------

std::string trace_to_csv(const Trace& trace, std::span<const std::string> comments)
{
    trace.validate();
    std::string out;
    for (const auto& c : comments) {
        out += "# " + c + "\n";
    }
    out += kTraceCsvHeader;
    out += '\n';
    const bool norm = trace.is_normalized();
    const std::string dwell = format_double(trace.dwell_time);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out += format_double(trace.delay[i]) + ',' + std::to_string(trace.coincidences[i]) + ',' +
               std::to_string(trace.singles_1[i]) + ',' + std::to_string(trace.singles_2[i]) + ',' +
               (norm ? format_double(trace.normalized[i]) : std::string()) + ',' + dwell + '\n';
    }
    return out;
}

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_field(const std::string& field, const std::string& where)
{
    T v{};
    const auto* end = field.data() + field.size();
    const auto res = std::from_chars(field.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) {
        throw IoError(where + ": cannot parse '" + field + "'");
    }
    return v;
}

} // namespace

Trace trace_from_csv(std::string_view text, const std::string& source)
{
    Trace t;
    bool header_seen = false;
    bool any_normalized = false, any_missing = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            nl = text.size();
        }
        const std::string line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const std::string where = source + ":" + std::to_string(line_no);
        if (!header_seen) {
            if (line != kTraceCsvHeader) {
                throw IoError(where + ": expected header '" + std::string(kTraceCsvHeader) + "'");
            }
            header_seen = true;
            continue;
        }
        std::vector<std::string> f;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            f.push_back(trim(std::string_view(line).substr(start, comma - start)));
            if (comma == std::string::npos) {
                break;
            }
            start = comma + 1;
        }
        if (f.size() != 6) {
            throw IoError(where + ": expected 6 fields, found " + std::to_string(f.size()));
        }
        t.delay.push_back(parse_field<double>(f[0], where));
        t.coincidences.push_back(parse_field<std::uint64_t>(f[1], where));
        t.singles_1.push_back(parse_field<std::uint64_t>(f[2], where));
        t.singles_2.push_back(parse_field<std::uint64_t>(f[3], where));
        if (f[4].empty()) {
            any_missing = true;
            t.normalized.push_back(0.0);
        } else {
            any_normalized = true;
            t.normalized.push_back(parse_field<double>(f[4], where));
        }
        t.dwell_time = parse_field<double>(f[5], where);
    }
    if (!header_seen) {
        throw IoError(source + ": missing trace header");
    }
    if (any_missing && any_normalized) {
        throw IoError(source + ": normalized column is only partially filled");
    }
    if (any_missing) {
        t.normalized.clear();
    }
    try {
        t.validate();
    } catch (const DomainError& e) {
        throw IoError(source + ": " + e.what());
    }
    return t;
}

Trace read_trace_csv(const std::filesystem::path& path)
{
    return trace_from_csv(read_file(path), path.string());
}

// ---------------------------------------------------------------------------

namespace {

template <class T>
void put_le(std::string& out, T v)
{
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>(u & 0xffu));
        u = static_cast<U>(u >> 8);
    }
}

template <class T>
T get_le(std::string_view bytes, std::size_t offset)
{
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        u |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i));
    }
    return static_cast<T>(u);
}

} // namespace

std::string encode_flh1(double rep_rate, std::span<const PhotonRecord> records)
{
    if (!std::isfinite(rep_rate) || rep_rate <= 0.0) {
        throw DomainError("rep_rate must be positive");
    }
    std::string out;
    out.reserve(kFlh1HeaderSize + kFlh1RecordSize * records.size());
    out += "FLH1";
    put_le<std::uint16_t>(out, kFlh1Version);
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(std::llround(rep_rate * 1000.0)));
    put_le<std::uint16_t>(out, 0);
    for (const auto& r : records) {
        put_le<std::uint8_t>(out, r.channel);
        put_le<std::uint64_t>(out, r.pulse_index);
        put_le<std::int64_t>(out, r.intra_pulse_time);
    }
    return out;
}

TimestampFile decode_flh1(std::string_view bytes)
{
    if (bytes.size() < kFlh1HeaderSize || bytes.substr(0, 4) != "FLH1") {
        throw IoError("not an FLH1 stream (bad magic or truncated header)");
    }
    const auto version = get_le<std::uint16_t>(bytes, 4);
    if (version != kFlh1Version) {
        throw IoError("unsupported FLH1 version " + std::to_string(version));
    }
    if ((bytes.size() - kFlh1HeaderSize) % kFlh1RecordSize != 0) {
        throw IoError("FLH1 payload is not a whole number of 17-byte records");
    }
    TimestampFile f;
    f.rep_rate = static_cast<double>(get_le<std::uint64_t>(bytes, 6)) / 1000.0;
    const std::size_t n = (bytes.size() - kFlh1HeaderSize) / kFlh1RecordSize;
    f.records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t o = kFlh1HeaderSize + i * kFlh1RecordSize;
        PhotonRecord r;
        r.channel = get_le<std::uint8_t>(bytes, o);
        r.pulse_index = get_le<std::uint64_t>(bytes, o + 1);
        r.intra_pulse_time = get_le<std::int64_t>(bytes, o + 9);
        if (r.channel != 1 && r.channel != 2) {
            throw IoError("FLH1 record " + std::to_string(i) + " has invalid channel " + std::to_string(r.channel));
        }
        f.records.push_back(r);
    }
    return f;
}

} // namespace flhom
