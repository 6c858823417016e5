#ifndef DEHAZE_KV_CONFIG_HPP
#define DEHAZE_KV_CONFIG_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>

#include "dehaze/error.hpp"

namespace dehaze {

/// Parsed `key = value` file. Blank lines and lines starting with '#' are
/// ignored; whitespace around keys and values is trimmed.
using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

} // namespace detail

/// Splits "key=value"; throws InvalidConfig without '='.
inline std::pair<std::string, std::string> parse_assignment(std::string_view line) {
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
        fail(ErrorKind::InvalidConfig, "expected key = value, got '" + std::string(line) + "'");
    std::string key = detail::trim(line.substr(0, eq));
    if (key.empty())
        fail(ErrorKind::InvalidConfig, "empty key in '" + std::string(line) + "'");
    return {std::move(key), detail::trim(line.substr(eq + 1))};
}

inline KeyValues parse_key_values(std::string_view text, const std::string& origin = "<text>") {
    KeyValues kv;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const std::string line = detail::trim(raw);
        if (line.empty() || line.front() == '#')
            continue;
        try {
            auto [k, v] = parse_assignment(line);
            if (kv.count(k))
                fail(ErrorKind::InvalidConfig, "duplicate key '" + k + "'");
            kv.emplace(std::move(k), std::move(v));
        } catch (const Error& e) {
            throw Error(ErrorKind::InvalidConfig, origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is)
        fail(ErrorKind::FileNotFound, path.string());
    const std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_key_values(text, path.string());
}

} // namespace dehaze

#endif // DEHAZE_KV_CONFIG_HPP
