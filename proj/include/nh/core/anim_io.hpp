#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "nh/core/types.hpp"

namespace nh {

inline constexpr int kAnimFormatVersion = 1;

// `.anim`: container with magic "ANIM" and header
// {"format":"nh-anim","version":1,"fps":25,"dim":518,"frames":T,...}.
// Errors: VersionMismatch, TruncatedFile, DimensionMismatch.
void save_sequence(const std::filesystem::path& path, const AnimationSequence& seq);
AnimationSequence load_sequence(const std::filesystem::path& path);

std::vector<char> encode_sequence(const AnimationSequence& seq);
AnimationSequence decode_sequence(std::span<const char> bytes);

}  // namespace nh
