#pragma once

#include "flhom/estimation.hpp"
#include "flhom/photonsim.hpp"
#include "flhom/rheology.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flhom::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIo = 4;

/// Sectioned key = value text; '#' and ';' start comments. Keys outside any section are errors.
class IniConfig {
public:
    struct Entry {
        std::string value;
        std::size_t line = 0;
    };

    static IniConfig parse(std::string_view text, std::string source = "<memory>");
    static IniConfig load(const std::filesystem::path& path);

    /// Throws ConfigError naming the first unknown section or key and its line.
    void check_known() const;

    bool has(const std::string& section, const std::string& key) const;
    std::optional<std::string> get(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    std::uint64_t get_uint(const std::string& section, const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<double> get_list(const std::string& section, const std::string& key,
                                 const std::vector<double>& fallback) const;

    const std::string& source() const { return source_; }
    const std::string& text() const { return text_; }

private:
    [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& why) const;

    std::string source_;
    std::string text_;
    std::map<std::string, std::map<std::string, Entry>> sections_;
};

/// Settings from [model], [scan], [autocorrelation] and [timestamps].
ScanConfig scan_config_from(const IniConfig& ini);
/// Settings from [fit] and [mcmc]; irf sigma defaults to the [model] reference sigma.
FitOptions fit_options_from(const IniConfig& ini);
VisibilityOptions visibility_options_from(const IniConfig& ini);

/// Entry point of the flhom tool. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace flhom::cli
