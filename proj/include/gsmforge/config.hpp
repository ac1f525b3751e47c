#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gsmforge {

/// Flat "section.key = value" config file, '#' comments, one entry per
/// line. Values keep their literal text; typed getters parse on demand.
class Config {
public:
    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<long long> get_int_list(const std::string& key) const;
    std::vector<std::string> get_string_list(const std::string& key) const;

    void set(const std::string& key, const std::string& value);

    /// Sorted "key=value\n" lines; the input to the config hash.
    std::string canonical() const;
    /// FNV-1a 64 over the canonical serialization, as fixed-width hex.
    std::string hash() const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string fnv1a64_hex(const void* data, std::size_t len);
std::string file_hash_hex(const std::string& path);

}  // namespace gsmforge
