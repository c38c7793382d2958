#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nh/core/types.hpp"

namespace nh {

inline constexpr int kIdleViseme = 0;

// Versioned phoneme -> viseme mapping. ID 0 is reserved for idle and may only
// be the target of labels declared as silence.
class VisemeTable {
public:
    // The table shipped as data/visemes_v1.tsv, compiled in.
    static const VisemeTable& builtin();
    static VisemeTable parse(std::string_view text);
    static VisemeTable load(const std::filesystem::path& path);

    int version() const { return version_; }
    int viseme_count() const { return static_cast<int>(names_.size()); }
    const std::string& viseme_name(int id) const { return names_.at(id); }

    std::optional<int> lookup(std::string_view label) const;
    // Throws UnknownPhoneme naming the label.
    int id(std::string_view label) const;

    bool is_silence(std::string_view label) const;
    std::vector<std::string> phonemes() const;

private:
    int version_ = 0;
    std::vector<std::string> names_;
    std::map<std::string, int, std::less<>> map_;
    std::map<std::string, int, std::less<>> silence_;
};

// One viseme ID per 25 fps frame: the viseme of the phoneme covering the
// frame midpoint, idle where no phoneme covers it.
VisemeSequence phonemes_to_visemes(std::span<const TimedPhoneme> phonemes, double duration,
                                   const VisemeTable& table = VisemeTable::builtin());

// `.phn` files: one "label start end" per line, seconds. '#' starts a comment.
std::vector<TimedPhoneme> parse_phn(std::string_view text);
std::vector<TimedPhoneme> read_phn(const std::filesystem::path& path);
void write_phn(const std::filesystem::path& path, std::span<const TimedPhoneme> phonemes);

}  // namespace nh
