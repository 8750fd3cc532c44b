#include "director/vocab.hpp"

#include <cctype>

namespace director::seq {

namespace {

struct SpecialMatch {
    int id;
    size_t length;
};

// Matches "<Name[N]>" at pos against the known special spellings.
// Returns nothing when the shape is not a valid special spelling; throws
// when the spelling is valid but the index exceeds the vocabulary bounds.
std::optional<SpecialMatch> match_special(const std::string& text, size_t pos, const Vocabulary& v) {
    if (text[pos] != '<') return std::nullopt;
    size_t i = pos + 1;
    const size_t name_start = i;
    while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
    if (i == name_start) return std::nullopt;
    const std::string name = text.substr(name_start, i - name_start);
    const size_t digit_start = i;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size() || text[i] != '>') return std::nullopt;
    const std::string digits = text.substr(digit_start, i - digit_start);
    const size_t length = i + 1 - pos;

    if (name == "User" && digits.empty()) return SpecialMatch{v.user_id, length};
    if (name == "Extension" && digits.empty()) return SpecialMatch{v.extension_id, length};
    if (name == "Continuation" && digits.empty()) return SpecialMatch{v.continuation_id, length};

    const bool indexed = name == "Character" || name == "Environment" || name == "Frame" || name == "Video";
    if (!indexed) return std::nullopt;
    if (digits.empty() || digits[0] == '0' || digits.size() > 6) return std::nullopt;
    const int index = std::stoi(digits);
    const int cap = (name == "Character" || name == "Environment") ? v.max_entities : v.max_shots;
    if (index > cap) {
        throw UnknownToken("special token " + text.substr(pos, length) + " outside vocabulary bounds (max " +
                           std::to_string(cap) + ")");
    }
    if (name == "Character") return SpecialMatch{v.character_id(index), length};
    if (name == "Environment") return SpecialMatch{v.environment_id(index), length};
    if (name == "Frame") return SpecialMatch{v.frame_id(index), length};
    return SpecialMatch{v.video_id(index), length};
}

}  // namespace

int Vocabulary::character_id(int index) const {
    if (index < 1 || index > max_entities) throw UnknownToken("character index out of range");
    return first_character_id + index - 1;
}

int Vocabulary::environment_id(int index) const {
    if (index < 1 || index > max_entities) throw UnknownToken("environment index out of range");
    return first_environment_id + index - 1;
}

int Vocabulary::frame_id(int index) const {
    if (index < 1 || index > max_shots) throw UnknownToken("frame index out of range");
    return first_frame_id + index - 1;
}

int Vocabulary::video_id(int index) const {
    if (index < 1 || index > max_shots) throw UnknownToken("video index out of range");
    return first_video_id + index - 1;
}

std::string Vocabulary::token_string(int id) const {
    if (id < 0 || id >= size_) throw UnknownToken("token id out of range: " + std::to_string(id));
    if (id < 256) return std::string(1, static_cast<char>(id));
    if (id == user_id) return "<User>";
    if (id == extension_id) return "<Extension>";
    if (id == continuation_id) return "<Continuation>";
    if (id == dialogue_open_id) return "<-";
    if (id == dialogue_close_id) return "->";
    if (id >= first_character_id && id < first_character_id + max_entities)
        return "<Character" + std::to_string(id - first_character_id + 1) + ">";
    if (id >= first_environment_id && id < first_environment_id + max_entities)
        return "<Environment" + std::to_string(id - first_environment_id + 1) + ">";
    if (id >= first_frame_id && id < first_frame_id + max_shots)
        return "<Frame" + std::to_string(id - first_frame_id + 1) + ">";
    if (id >= first_video_id && id < first_video_id + max_shots)
        return "<Video" + std::to_string(id - first_video_id + 1) + ">";
    if (id == bos_id) return "<bos>";
    if (id == eos_id) return "<eos>";
    return "<img>";
}

Vocabulary make_vocabulary(int max_entities, int max_shots) {
    if (max_entities < 1 || max_shots < 1) throw std::invalid_argument("vocabulary bounds must be positive");
    Vocabulary v;
    v.max_entities = max_entities;
    v.max_shots = max_shots;
    int next = 256;
    v.user_id = next++;
    v.extension_id = next++;
    v.continuation_id = next++;
    v.dialogue_open_id = next++;
    v.dialogue_close_id = next++;
    v.first_character_id = next;
    next += max_entities;
    v.first_environment_id = next;
    next += max_entities;
    v.first_frame_id = next;
    next += max_shots;
    v.first_video_id = next;
    next += max_shots;
    v.bos_id = next++;
    v.eos_id = next++;
    v.img_id = next++;
    v.size_ = next;
    return v;
}

TokenizedText tokenize_text(const std::string& text, const Vocabulary& v) {
    TokenizedText out;
    size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c == '<') {
            if (i + 1 < text.size() && text[i + 1] == '-') {
                out.ids.push_back(v.dialogue_open_id);
                out.offsets.push_back(i);
                i += 2;
                continue;
            }
            if (auto m = match_special(text, i, v)) {
                out.ids.push_back(m->id);
                out.offsets.push_back(i);
                i += m->length;
                continue;
            }
        } else if (c == '-' && i + 1 < text.size() && text[i + 1] == '>') {
            out.ids.push_back(v.dialogue_close_id);
            out.offsets.push_back(i);
            i += 2;
            continue;
        }
        out.ids.push_back(static_cast<unsigned char>(c));
        out.offsets.push_back(i);
        ++i;
    }
    return out;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& v) {
    std::string out;
    for (int id : ids) {
        if (id == v.bos_id || id == v.eos_id || id == v.img_id) continue;
        out += v.token_string(id);
    }
    return out;
}

TokenizedText tokenize_script(const script::Script& s, const Vocabulary& v) {
    return tokenize_text(script::serialize_script(s), v);
}

}  // namespace director::seq
