#include "nh/core/visemes.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "nh/core/error.hpp"

namespace nh {
namespace {

#include "visemes_builtin.inc"  // kBuiltinVisemeTable

std::string_view strip_stress(std::string_view label) {
    if (label.size() > 1 && label.back() >= '0' && label.back() <= '2') {
        label.remove_suffix(1);
    }
    return label;
}

}  // namespace

const VisemeTable& VisemeTable::builtin() {
    static const VisemeTable table = parse(kBuiltinVisemeTable);
    return table;
}

VisemeTable VisemeTable::parse(std::string_view text) {
    VisemeTable t;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    auto bad = [&](const std::string& why) {
        fail(ErrorCode::BadFormat, "viseme table line " + std::to_string(lineno) + ": " + why);
    };
    std::map<int, std::string> names;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string kind;
        if (!(ls >> kind)) continue;
        if (kind == "version") {
            if (!(ls >> t.version_)) bad("missing version number");
        } else if (kind == "viseme") {
            int id;
            std::string name;
            if (!(ls >> id >> name)) bad("expected 'viseme ID NAME'");
            names[id] = name;
        } else if (kind == "silence") {
            std::string label;
            if (!(ls >> label)) bad("expected 'silence LABEL'");
            t.silence_[label] = kIdleViseme;
        } else if (kind == "phone") {
            std::string label;
            int id;
            if (!(ls >> label >> id)) bad("expected 'phone LABEL ID'");
            if (id == kIdleViseme) bad("phone '" + label + "' maps to the reserved idle viseme");
            t.map_[label] = id;
        } else {
            bad("unknown directive '" + kind + "'");
        }
    }
    if (t.version_ <= 0) fail(ErrorCode::BadFormat, "viseme table has no version");
    for (int i = 0; i < static_cast<int>(names.size()); ++i) {
        auto it = names.find(i);
        if (it == names.end()) fail(ErrorCode::BadFormat, "viseme ids are not contiguous from 0");
        t.names_.push_back(it->second);
    }
    for (const auto& [label, id] : t.map_) {
        if (id < 0 || id >= t.viseme_count()) {
            fail(ErrorCode::BadFormat, "phone '" + label + "' maps to undeclared viseme " +
                                           std::to_string(id));
        }
    }
    return t;
}

VisemeTable VisemeTable::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorCode::IoError, "cannot open viseme table " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

std::optional<int> VisemeTable::lookup(std::string_view label) const {
    if (silence_.contains(label)) return kIdleViseme;
    if (auto it = map_.find(label); it != map_.end()) return it->second;
    if (auto it = map_.find(strip_stress(label)); it != map_.end()) return it->second;
    return std::nullopt;
}

int VisemeTable::id(std::string_view label) const {
    auto v = lookup(label);
    if (!v) fail(ErrorCode::UnknownPhoneme, "unknown phoneme label '" + std::string(label) + "'");
    return *v;
}

bool VisemeTable::is_silence(std::string_view label) const { return silence_.contains(label); }

std::vector<std::string> VisemeTable::phonemes() const {
    std::vector<std::string> out;
    for (const auto& [label, id] : map_) out.push_back(label);
    return out;
}

VisemeSequence phonemes_to_visemes(std::span<const TimedPhoneme> phonemes, double duration,
                                   const VisemeTable& table) {
    require(std::isfinite(duration) && duration >= 0.0, ErrorCode::InvalidArgument,
            "clip duration must be finite and non-negative");
    std::vector<int> ids;
    ids.reserve(phonemes.size());
    double prev_end = 0.0;
    for (std::size_t i = 0; i < phonemes.size(); ++i) {
        const auto& p = phonemes[i];
        require(p.start >= 0.0 && p.end > p.start, ErrorCode::InvalidArgument,
                "phoneme '" + p.label + "' has an empty or negative interval");
        if (i > 0 && p.start < prev_end) {
            fail(ErrorCode::OverlappingPhonemes,
                 "phoneme '" + p.label + "' at " + std::to_string(p.start) +
                     " s overlaps the previous interval ending at " + std::to_string(prev_end) +
                     " s");
        }
        require(p.end <= duration + 1e-9, ErrorCode::InvalidArgument,
                "phoneme '" + p.label + "' ends after the clip duration");
        prev_end = p.end;
        ids.push_back(table.id(p.label));
    }

    VisemeSequence out;
    const int n = frame_count(duration);
    out.ids.assign(n, kIdleViseme);
    std::size_t cursor = 0;
    for (int k = 0; k < n; ++k) {
        const double mid = (k + 0.5) / kFps;
        while (cursor < phonemes.size() && phonemes[cursor].end <= mid) ++cursor;
        if (cursor < phonemes.size() && phonemes[cursor].start <= mid) out.ids[k] = ids[cursor];
    }
    return out;
}

std::vector<TimedPhoneme> parse_phn(std::string_view text) {
    std::vector<TimedPhoneme> out;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        TimedPhoneme p;
        if (!(ls >> p.label)) continue;
        if (!(ls >> p.start >> p.end)) {
            fail(ErrorCode::BadFormat,
                 ".phn line " + std::to_string(lineno) + ": expected 'label start end'");
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<TimedPhoneme> read_phn(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_phn(ss.str());
}

void write_phn(const std::filesystem::path& path, std::span<const TimedPhoneme> phonemes) {
    std::ofstream f(path);
    if (!f) fail(ErrorCode::IoError, "cannot write " + path.string());
    f << std::setprecision(6) << std::fixed;
    for (const auto& p : phonemes) f << p.label << ' ' << p.start << ' ' << p.end << '\n';
}

}  // namespace nh
