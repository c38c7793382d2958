#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace nh {

// Binary container shared by `.anim` files and checkpoints:
//   4-byte magic | uint32 LE header length | JSON header | float32 LE payload.
// The header must carry "payload_floats" so truncation is detectable.
struct Container {
    nlohmann::json header;
    std::vector<float> payload;
};

using Magic = std::array<char, 4>;

void write_container(const std::filesystem::path& path, const Magic& magic,
                     nlohmann::json header, std::span<const float> payload);
Container read_container(const std::filesystem::path& path, const Magic& magic);

// In-memory variants used by the HTTP layer and tests.
std::vector<char> encode_container(const Magic& magic, nlohmann::json header,
                                   std::span<const float> payload);
Container decode_container(std::span<const char> bytes, const Magic& magic,
                           const std::string& origin = "<memory>");

}  // namespace nh
