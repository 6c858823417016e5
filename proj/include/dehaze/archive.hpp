#ifndef DEHAZE_ARCHIVE_HPP
#define DEHAZE_ARCHIVE_HPP

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dehaze/error.hpp"
#include "dehaze/param_store.hpp"

namespace dehaze {

/// Named-tensor archive (layout in docs/checkpoint_format.md):
///
///   8 bytes   magic "DHZARCH1"
///   8 bytes   header length L, uint64 little-endian
///   L bytes   UTF-8 JSON header {"meta": {...}, "tensors": [...]}
///   data      float32 little-endian arrays, offsets relative to data start
struct Archive {
    nlohmann::json meta = nlohmann::json::object();
    ParamStore<float> tensors;
};

inline constexpr char kArchiveMagic[8] = {'D', 'H', 'Z', 'A', 'R', 'C', 'H', '1'};

namespace detail {

inline std::uint32_t to_le32(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big)
        return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
    return v;
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i)
        b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(const unsigned char* b) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

} // namespace detail

inline void write_archive(const std::filesystem::path& path, const Archive& archive) {
    nlohmann::json header;
    header["format"] = "dehaze-archive";
    header["version"] = 1;
    header["meta"] = archive.meta;
    header["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, p] : archive.tensors.entries()) {
        header["tensors"].push_back({{"name", name},
                                     {"dtype", "float32"},
                                     {"shape", p.shape},
                                     {"trainable", p.trainable},
                                     {"offset", offset},
                                     {"length", p.values.size()}});
        offset += p.values.size() * sizeof(float);
    }
    const std::string text = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        fail(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    os.write(kArchiveMagic, 8);
    detail::put_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::vector<std::uint32_t> buf;
    for (const auto& [name, p] : archive.tensors.entries()) {
        buf.resize(p.values.size());
        for (std::size_t i = 0; i < buf.size(); ++i)
            buf[i] = detail::to_le32(std::bit_cast<std::uint32_t>(p.values[i]));
        os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    }
    os.flush();
    if (!os)
        fail(ErrorKind::IoError, "failed writing " + path.string());
}

inline Archive read_archive(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        fail(ErrorKind::FileNotFound, path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kArchiveMagic, 8) != 0)
        fail(ErrorKind::UnsupportedFormat, path.string() + " is not a parameter archive");
    const std::uint64_t hlen = detail::get_u64(bytes.data() + 8);
    if (hlen > bytes.size() - 16)
        fail(ErrorKind::CorruptImage, path.string() + ": truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::CorruptImage, path.string() + ": bad header: " + e.what());
    }
    const std::size_t data_start = 16 + hlen;
    Archive out;
    out.meta = header.value("meta", nlohmann::json::object());
    for (const auto& t : header.at("tensors")) {
        if (t.at("dtype") != "float32")
            fail(ErrorKind::UnsupportedFormat, "unsupported dtype in " + path.string());
        auto& p = out.tensors.declare(t.at("name").get<std::string>(), t.at("shape").get<std::vector<int>>(),
                                      t.value("trainable", true));
        const std::uint64_t off = t.at("offset").get<std::uint64_t>();
        const std::uint64_t len = t.at("length").get<std::uint64_t>();
        if (len != p.values.size() || data_start + off + len * 4 > bytes.size())
            fail(ErrorKind::CorruptImage, path.string() + ": tensor '" + t.at("name").get<std::string>() + "' out of bounds");
        for (std::uint64_t i = 0; i < len; ++i) {
            std::uint32_t raw;
            std::memcpy(&raw, bytes.data() + data_start + off + 4 * i, 4);
            p.values[i] = std::bit_cast<float>(detail::to_le32(raw));
        }
    }
    return out;
}

} // namespace dehaze

#endif // DEHAZE_ARCHIVE_HPP
