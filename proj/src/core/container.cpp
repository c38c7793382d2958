#include "nh/core/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "nh/core/error.hpp"

namespace nh {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

std::vector<char> encode_container(const Magic& magic, nlohmann::json header,
                                   std::span<const float> payload) {
    header["payload_floats"] = payload.size();
    const std::string text = header.dump();
    const auto len = static_cast<std::uint32_t>(text.size());
    std::vector<char> out;
    out.reserve(8 + text.size() + payload.size_bytes());
    out.insert(out.end(), magic.begin(), magic.end());
    char lenbytes[4];
    std::memcpy(lenbytes, &len, 4);
    out.insert(out.end(), lenbytes, lenbytes + 4);
    out.insert(out.end(), text.begin(), text.end());
    const auto* p = reinterpret_cast<const char*>(payload.data());
    out.insert(out.end(), p, p + payload.size_bytes());
    return out;
}

Container decode_container(std::span<const char> bytes, const Magic& magic,
                           const std::string& origin) {
    if (bytes.size() < 8) fail(ErrorCode::TruncatedFile, origin + ": file too short for header");
    if (!std::equal(magic.begin(), magic.end(), bytes.begin())) {
        fail(ErrorCode::BadFormat, origin + ": bad magic");
    }
    std::uint32_t len;
    std::memcpy(&len, bytes.data() + 4, 4);
    if (bytes.size() < 8 + static_cast<std::size_t>(len)) {
        fail(ErrorCode::TruncatedFile, origin + ": header truncated");
    }
    Container c;
    try {
        c.header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::BadFormat, origin + ": malformed header: " + e.what());
    }
    if (!c.header.contains("payload_floats")) {
        fail(ErrorCode::BadFormat, origin + ": header lacks payload_floats");
    }
    const auto n = c.header["payload_floats"].get<std::size_t>();
    const std::size_t offset = 8 + len;
    if (bytes.size() < offset + n * sizeof(float)) {
        fail(ErrorCode::TruncatedFile, origin + ": payload truncated");
    }
    c.payload.resize(n);
    std::memcpy(c.payload.data(), bytes.data() + offset, n * sizeof(float));
    return c;
}

void write_container(const std::filesystem::path& path, const Magic& magic,
                     nlohmann::json header, std::span<const float> payload) {
    const auto bytes = encode_container(magic, std::move(header), payload);
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::IoError, "cannot write " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) fail(ErrorCode::IoError, "write failed for " + path.string());
}

Container read_container(const std::filesystem::path& path, const Magic& magic) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_container(bytes, magic, path.string());
}

}  // namespace nh
