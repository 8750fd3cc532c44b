#include "director/script.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "director/common.hpp"

namespace director::script {

namespace {

constexpr std::string_view kDialogueOpen = "<-";
constexpr std::string_view kDialogueClose = "->";
constexpr std::string_view kSfxPrefix = "SFX:";

enum class TokName { User, Character, Environment, Frame, Video, Extension, Continuation };

struct AngleTok {
    std::string name;
    std::string digits;
    size_t length = 0;
};

// Matches "<Letters[Digits]>" starting at pos. Shape only; the name may be
// unknown and the digits malformed.
std::optional<AngleTok> scan_angle(std::string_view s, size_t pos) {
    if (pos >= s.size() || s[pos] != '<') return std::nullopt;
    size_t i = pos + 1;
    const size_t name_start = i;
    while (i < s.size() && std::isalpha(static_cast<unsigned char>(s[i]))) ++i;
    if (i == name_start) return std::nullopt;
    const size_t name_end = i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i >= s.size() || s[i] != '>') return std::nullopt;
    AngleTok tok;
    tok.name = std::string(s.substr(name_start, name_end - name_start));
    tok.digits = std::string(s.substr(name_end, i - name_end));
    tok.length = i + 1 - pos;
    return tok;
}

std::optional<TokName> lookup_name(const std::string& name) {
    if (name == "User") return TokName::User;
    if (name == "Character") return TokName::Character;
    if (name == "Environment") return TokName::Environment;
    if (name == "Frame") return TokName::Frame;
    if (name == "Video") return TokName::Video;
    if (name == "Extension") return TokName::Extension;
    if (name == "Continuation") return TokName::Continuation;
    return std::nullopt;
}

bool takes_index(TokName t) {
    return t == TokName::Character || t == TokName::Environment || t == TokName::Frame || t == TokName::Video;
}

// Decimal, positive, no leading zeros.
std::optional<int> parse_index(const std::string& digits) {
    if (digits.empty() || digits[0] == '0' || digits.size() > 6) return std::nullopt;
    return std::stoi(digits);
}

struct ResolvedTok {
    TokName name;
    int index = 0;  // 0 for unindexed tokens
    size_t length = 0;
};

// A fully valid special token at pos, or nothing.
std::optional<ResolvedTok> scan_special(std::string_view s, size_t pos) {
    auto tok = scan_angle(s, pos);
    if (!tok) return std::nullopt;
    auto name = lookup_name(tok->name);
    if (!name) return std::nullopt;
    if (takes_index(*name)) {
        auto idx = parse_index(tok->digits);
        if (!idx) return std::nullopt;
        return ResolvedTok{*name, *idx, tok->length};
    }
    if (!tok->digits.empty()) return std::nullopt;
    return ResolvedTok{*name, 0, tok->length};
}

std::string rstrip(std::string_view s) {
    size_t e = s.size();
    while (e > 0 && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(0, e));
}

bool is_blank(std::string_view s) {
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    return true;
}

std::string token_spelling(TokName name, int index) {
    switch (name) {
        case TokName::User: return "<User>";
        case TokName::Character: return "<Character" + std::to_string(index) + ">";
        case TokName::Environment: return "<Environment" + std::to_string(index) + ">";
        case TokName::Frame: return "<Frame" + std::to_string(index) + ">";
        case TokName::Video: return "<Video" + std::to_string(index) + ">";
        case TokName::Extension: return "<Extension>";
        case TokName::Continuation: return "<Continuation>";
    }
    return {};
}

struct BodyLine {
    int line = 0;  // 1-based source line
    std::string text;
};

struct Section {
    TokName name;
    int index = 0;
    SourcePos pos;
    std::vector<BodyLine> body;
};

void add_diag(std::vector<Diagnostic>& diags, DiagCode code, SourcePos pos, std::string token, std::string message) {
    diags.push_back(Diagnostic{code, pos, std::move(token), std::move(message)});
}

// Strips leading and trailing blank lines; interior lines survive untouched.
std::vector<BodyLine> trim_body(const std::vector<BodyLine>& body) {
    size_t b = 0, e = body.size();
    while (b < e && is_blank(body[b].text)) ++b;
    while (e > b && is_blank(body[e - 1].text)) --e;
    return std::vector<BodyLine>(body.begin() + b, body.begin() + e);
}

std::string join_body(const std::vector<BodyLine>& body) {
    std::string out;
    for (size_t i = 0; i < body.size(); ++i) {
        if (i) out += '\n';
        out += body[i].text;
    }
    return out;
}

// Consumes an optional labeled first line like "short:" / "keyframe:".
// Returns the trimmed label value and drops the line from the body.
std::optional<std::string> take_labeled_line(std::vector<BodyLine>& body, std::string_view label) {
    if (body.empty()) return std::nullopt;
    const std::string& first = body.front().text;
    if (!starts_with(first, label)) return std::nullopt;
    std::string value = trim(std::string_view(first).substr(label.size()));
    body.erase(body.begin());
    while (!body.empty() && is_blank(body.front().text)) body.erase(body.begin());
    return value;
}

AnnotatedText parse_annotated(const std::vector<BodyLine>& body, std::vector<Diagnostic>& diags) {
    AnnotatedText out;
    auto push_plain = [&out](std::string_view text) {
        if (text.empty()) return;
        if (!out.runs.empty() && std::holds_alternative<TextRun>(out.runs.back())) {
            std::get<TextRun>(out.runs.back()).text += text;
        } else {
            out.runs.push_back(TextRun{std::string(text)});
        }
    };
    for (size_t li = 0; li < body.size(); ++li) {
        if (li) push_plain("\n");
        const std::string& text = body[li].text;
        const int line_no = body[li].line;
        size_t i = 0;
        while (i < text.size()) {
            if (text[i] != '<') {
                size_t j = text.find('<', i);
                if (j == std::string::npos) j = text.size();
                push_plain(std::string_view(text).substr(i, j - i));
                i = j;
                continue;
            }
            const SourcePos pos{line_no, static_cast<int>(i) + 1};
            if (text.compare(i, kDialogueOpen.size(), kDialogueOpen) == 0) {
                const size_t content_start = i + kDialogueOpen.size();
                const size_t close = text.find(kDialogueClose, content_start);
                if (close == std::string::npos) {
                    add_diag(diags, DiagCode::UnclosedDialogue, pos, "<-",
                             "dialogue opened here is not closed on the same line");
                    push_plain(std::string_view(text).substr(i));
                    break;
                }
                std::string content = text.substr(content_start, close - content_start);
                if (content.find(kDialogueOpen) != std::string::npos) {
                    add_diag(diags, DiagCode::UnclosedDialogue, pos, "<-", "nested dialogue indicator");
                }
                DialogueSpan span;
                span.pos = pos;
                if (starts_with(content, kSfxPrefix)) {
                    span.category = SpanCategory::SoundEffect;
                    span.content = content.substr(kSfxPrefix.size());
                } else {
                    span.category = SpanCategory::Dialogue;
                    span.content = std::move(content);
                }
                out.runs.push_back(std::move(span));
                i = close + kDialogueClose.size();
                continue;
            }
            auto shape = scan_angle(text, i);
            if (!shape) {
                push_plain("<");
                ++i;
                continue;
            }
            auto tok = scan_special(text, i);
            if (!tok) {
                add_diag(diags, DiagCode::UnknownSpecialToken, pos, text.substr(i, shape->length),
                         "unrecognized special token");
                i += shape->length;
                continue;
            }
            if (tok->name == TokName::Character || tok->name == TokName::Environment) {
                EntityRef ref;
                ref.kind = tok->name == TokName::Character ? EntityKind::Character : EntityKind::Environment;
                ref.index = tok->index;
                ref.pos = pos;
                out.runs.push_back(ref);
            } else {
                add_diag(diags, DiagCode::MisplacedToken, pos, text.substr(i, tok->length),
                         "token not allowed inside description text");
            }
            i += tok->length;
        }
    }
    return out;
}

std::string serialize_annotated(const AnnotatedText& t) {
    std::string out;
    for (const Run& run : t.runs) {
        if (const auto* plain = std::get_if<TextRun>(&run)) {
            out += plain->text;
        } else if (const auto* ref = std::get_if<EntityRef>(&run)) {
            out += token_spelling(ref->kind == EntityKind::Character ? TokName::Character : TokName::Environment,
                                  ref->index);
        } else {
            const auto& span = std::get<DialogueSpan>(run);
            out += kDialogueOpen;
            if (span.category == SpanCategory::SoundEffect) out += kSfxPrefix;
            out += span.content;
            out += kDialogueClose;
        }
    }
    return out;
}

bool valid_keyframe_id(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.' && c != '-') return false;
    }
    return true;
}

int word_count(const std::string& s) {
    std::istringstream ss(s);
    std::string w;
    int n = 0;
    while (ss >> w) ++n;
    return n;
}

// --- serialize-side invariant checks -------------------------------------

void require(bool cond, const std::string& what) {
    if (!cond) throw InvariantViolation(what);
}

// A plain text block: non-empty, boundary lines non-blank, no carriage
// returns, and no line that would re-parse as a section header.
void check_text_block(const std::string& text, const std::string& where) {
    require(!text.empty(), where + ": empty text");
    require(text.find('\r') == std::string::npos, where + ": carriage return in text");
    auto lines = split_lines(text);
    require(!lines.empty() && !is_blank(lines.front()), where + ": leading blank line");
    require(!is_blank(lines.back()), where + ": trailing blank line");
    require(text.back() != '\n', where + ": trailing newline");
    for (const auto& line : lines) {
        const std::string stripped = rstrip(line);
        auto shape = scan_angle(stripped, 0);
        if (shape && shape->length == stripped.size()) {
            throw InvariantViolation(where + ": line would re-parse as a section header: " + stripped);
        }
    }
}

void check_single_line_field(const std::string& text, const std::string& where) {
    require(text.find('\n') == std::string::npos && text.find('\r') == std::string::npos,
            where + ": must be a single line");
    require(trim(text) == text, where + ": leading/trailing whitespace");
}

void check_annotated(const AnnotatedText& t, const std::string& where) {
    require(!t.runs.empty(), where + ": empty description");
    bool prev_plain = false;
    for (const Run& run : t.runs) {
        if (const auto* plain = std::get_if<TextRun>(&run)) {
            require(!plain->text.empty(), where + ": empty text run");
            require(!prev_plain, where + ": adjacent text runs must be merged");
            require(plain->text.find('\r') == std::string::npos, where + ": carriage return");
            require(plain->text.find(kDialogueOpen) == std::string::npos,
                    where + ": dialogue indicator in plain text");
            for (size_t i = 0; i + 1 < plain->text.size(); ++i) {
                if (plain->text[i] == '<' && scan_angle(plain->text, i)) {
                    throw InvariantViolation(where + ": special-token shape in plain text");
                }
            }
            prev_plain = true;
            continue;
        }
        prev_plain = false;
        if (const auto* ref = std::get_if<EntityRef>(&run)) {
            require(ref->index >= 1, where + ": entity reference index must be positive");
        } else {
            const auto& span = std::get<DialogueSpan>(run);
            require(span.content.find('\n') == std::string::npos, where + ": dialogue must be single-line");
            require(span.content.find(kDialogueOpen) == std::string::npos &&
                        span.content.find(kDialogueClose) == std::string::npos,
                    where + ": indicator symbol inside dialogue content");
            if (span.category == SpanCategory::Dialogue) {
                require(!starts_with(span.content, kSfxPrefix), where + ": dialogue content may not start with SFX:");
            }
        }
    }
    // The serialized body must not contain header-shaped lines either
    // (a reference can sit alone on a line only via surrounding newlines).
    check_text_block(serialize_annotated(t), where);
}

void check_script_for_serialize(const Script& s) {
    require(s.prompt_style >= 1 && s.prompt_style <= 4, "prompt style must be in 1..4");
    check_text_block(s.user_prompt, "user prompt");

    auto check_entities = [](const std::vector<EntityDef>& defs, EntityKind kind, const std::string& label) {
        std::vector<int> indices;
        for (const auto& def : defs) {
            require(def.kind == kind, label + ": mixed entity kinds");
            require(def.index >= 1, label + ": index must be positive");
            indices.push_back(def.index);
            check_text_block(def.caption, label + std::to_string(def.index) + " caption");
            if (!def.short_caption.empty()) {
                check_single_line_field(def.short_caption, label + std::to_string(def.index) + " short caption");
                require(word_count(def.short_caption) <= 10,
                        label + std::to_string(def.index) + " short caption exceeds 10 words");
            }
        }
        std::sort(indices.begin(), indices.end());
        for (size_t i = 0; i < indices.size(); ++i) {
            require(indices[i] == static_cast<int>(i) + 1, label + ": indices must be contiguous from 1");
        }
    };
    check_entities(s.characters, EntityKind::Character, "Character");
    check_entities(s.environments, EntityKind::Environment, "Environment");

    std::vector<int> shot_indices;
    for (const auto& shot : s.shots) {
        shot_indices.push_back(shot.index);
        check_annotated(shot.frame_description, "Frame" + std::to_string(shot.index));
        check_annotated(shot.video_description, "Video" + std::to_string(shot.index));
        if (shot.keyframe_ref) {
            require(valid_keyframe_id(*shot.keyframe_ref),
                    "Frame" + std::to_string(shot.index) + ": invalid keyframe identifier");
        }
    }
    std::sort(shot_indices.begin(), shot_indices.end());
    for (size_t i = 0; i < shot_indices.size(); ++i) {
        require(shot_indices[i] == static_cast<int>(i) + 1, "shot indices must be contiguous from 1");
    }

    if (s.mode_marker) {
        const auto& m = *s.mode_marker;
        const int n = static_cast<int>(s.shots.size());
        check_text_block(m.prompt, "marker prompt");
        if (m.mode == MarkerMode::Extension) {
            require(m.position >= 1 && m.position <= n - 1, "extension marker position must be in [1, shots-1]");
        } else {
            require(m.position >= 1 && m.position <= n, "continuation marker position must be in [1, shots]");
        }
    }
}

const Shot* find_shot(const Script& s, int index) {
    for (const auto& shot : s.shots)
        if (shot.index == index) return &shot;
    return nullptr;
}

bool marker_before_shot(const ModeMarker& m, int shot_index) {
    return m.mode == MarkerMode::Extension ? shot_index == m.position + 1 : shot_index == m.position;
}

std::string section_text(const std::string& header, const std::string& body) {
    return header + "\n" + body + "\n";
}

std::string entity_section(const EntityDef& def) {
    std::string body = "short:";
    if (!def.short_caption.empty()) body += " " + def.short_caption;
    body += "\n" + def.caption;
    return section_text(
        token_spelling(def.kind == EntityKind::Character ? TokName::Character : TokName::Environment, def.index),
        body);
}

std::string marker_section(const ModeMarker& m) {
    return section_text(m.mode == MarkerMode::Extension ? "<Extension>" : "<Continuation>", m.prompt);
}

std::vector<EntityDef> sorted_entities(std::vector<EntityDef> defs) {
    std::sort(defs.begin(), defs.end(), [](const EntityDef& a, const EntityDef& b) { return a.index < b.index; });
    return defs;
}

std::vector<int> sorted_shot_indices(const Script& s) {
    std::vector<int> order;
    for (const auto& shot : s.shots) order.push_back(shot.index);
    std::sort(order.begin(), order.end());
    return order;
}

}  // namespace

std::string diag_code_name(DiagCode code) {
    switch (code) {
        case DiagCode::UnknownSpecialToken: return "UnknownSpecialToken";
        case DiagCode::MisplacedToken: return "MisplacedToken";
        case DiagCode::DuplicateEntityIndex: return "DuplicateEntityIndex";
        case DiagCode::DuplicateSection: return "DuplicateSection";
        case DiagCode::NonContiguousIndex: return "NonContiguousIndex";
        case DiagCode::MissingSection: return "MissingSection";
        case DiagCode::UnclosedDialogue: return "UnclosedDialogue";
        case DiagCode::EmptySection: return "EmptySection";
        case DiagCode::UnresolvedReference: return "UnresolvedReference";
        case DiagCode::BadStyleTag: return "BadStyleTag";
        case DiagCode::BadMarkerPosition: return "BadMarkerPosition";
        case DiagCode::DuplicateMarker: return "DuplicateMarker";
        case DiagCode::StrayContent: return "StrayContent";
        case DiagCode::InvalidField: return "InvalidField";
    }
    return "Unknown";
}

std::string Diagnostic::format() const {
    std::string out = std::to_string(pos.line) + ":" + std::to_string(pos.col) + ": " + diag_code_name(code);
    if (!token.empty()) out += " " + token;
    out += ": " + message;
    return out;
}

ParseResult parse_script(std::string_view source) {
    std::vector<Diagnostic> diags;
    const auto lines = split_lines(source);

    // Pass 1: carve the input into sections at header lines.
    std::vector<Section> sections;
    bool saw_header = false;
    for (size_t li = 0; li < lines.size(); ++li) {
        const int line_no = static_cast<int>(li) + 1;
        const std::string stripped = rstrip(lines[li]);
        auto shape = scan_angle(stripped, 0);
        const bool header_shaped = shape && shape->length == stripped.size();
        if (header_shaped) {
            auto tok = scan_special(stripped, 0);
            if (!tok) {
                add_diag(diags, DiagCode::UnknownSpecialToken, {line_no, 1}, stripped, "unrecognized special token");
                continue;
            }
            sections.push_back(Section{tok->name, tok->index, SourcePos{line_no, 1}, {}});
            saw_header = true;
            continue;
        }
        if (!saw_header) {
            if (!is_blank(lines[li])) {
                add_diag(diags, DiagCode::StrayContent, {line_no, 1}, "", "content before the first section header");
            }
            continue;
        }
        std::string text = lines[li];
        if (!text.empty() && text.back() == '\r') text.pop_back();
        sections.back().body.push_back(BodyLine{line_no, std::move(text)});
    }

    // Pass 2: interpret sections.
    Script script;
    bool saw_user = false;
    std::map<std::pair<int, int>, EntityDef> entities;  // (kind, index) -> def
    struct RawShotPart {
        Section section;
        std::vector<BodyLine> body;
    };
    std::map<int, RawShotPart> frames, videos;
    std::map<int, std::optional<std::string>> keyframe_refs;
    std::optional<ModeMarker> pending_marker;  // waiting for its following frame
    bool have_marker = false;

    auto settle_pending_marker = [&](const Section* next_frame) {
        if (!pending_marker) return;
        if (!next_frame) {
            add_diag(diags, DiagCode::BadMarkerPosition, pending_marker->pos,
                     pending_marker->mode == MarkerMode::Extension ? "<Extension>" : "<Continuation>",
                     "marker must be followed by a frame section");
            pending_marker.reset();
            return;
        }
        if (pending_marker->mode == MarkerMode::Extension) {
            if (next_frame->index < 2) {
                add_diag(diags, DiagCode::BadMarkerPosition, pending_marker->pos, "<Extension>",
                         "extension marker cannot precede the first shot");
                pending_marker.reset();
                return;
            }
            pending_marker->position = next_frame->index - 1;
        } else {
            pending_marker->position = next_frame->index;
        }
        script.mode_marker = *pending_marker;
        pending_marker.reset();
    };

    for (const Section& sec : sections) {
        if (pending_marker && sec.name != TokName::Frame) {
            settle_pending_marker(nullptr);
        }
        auto body = trim_body(sec.body);
        const std::string spelling = token_spelling(sec.name, sec.index);
        switch (sec.name) {
            case TokName::User: {
                if (saw_user) {
                    add_diag(diags, DiagCode::DuplicateSection, sec.pos, spelling, "duplicate user section");
                    break;
                }
                saw_user = true;
                if (auto style = take_labeled_line(body, "style:")) {
                    bool ok = !style->empty() && style->size() == 1 && (*style)[0] >= '1' && (*style)[0] <= '4';
                    if (ok) {
                        script.prompt_style = (*style)[0] - '0';
                    } else {
                        add_diag(diags, DiagCode::BadStyleTag, sec.pos, spelling, "style tag must be 1..4");
                    }
                }
                if (body.empty()) {
                    add_diag(diags, DiagCode::EmptySection, sec.pos, spelling, "user section has no prompt text");
                    break;
                }
                script.user_prompt = join_body(body);
                break;
            }
            case TokName::Character:
            case TokName::Environment: {
                const auto kind = sec.name == TokName::Character ? EntityKind::Character : EntityKind::Environment;
                const auto key = std::make_pair(static_cast<int>(kind), sec.index);
                if (entities.count(key)) {
                    add_diag(diags, DiagCode::DuplicateEntityIndex, sec.pos, spelling, "entity index declared twice");
                    break;
                }
                EntityDef def;
                def.kind = kind;
                def.index = sec.index;
                def.pos = sec.pos;
                if (auto sc = take_labeled_line(body, "short:")) {
                    def.short_caption = *sc;
                    if (word_count(def.short_caption) > 10) {
                        add_diag(diags, DiagCode::InvalidField, sec.pos, spelling,
                                 "short caption exceeds 10 words");
                    }
                }
                if (body.empty()) {
                    add_diag(diags, DiagCode::EmptySection, sec.pos, spelling, "entity section has no caption");
                    break;
                }
                def.caption = join_body(body);
                entities.emplace(key, std::move(def));
                break;
            }
            case TokName::Frame: {
                if (frames.count(sec.index)) {
                    add_diag(diags, DiagCode::DuplicateSection, sec.pos, spelling, "frame section declared twice");
                    break;
                }
                settle_pending_marker(&sec);
                std::optional<std::string> keyframe;
                if (auto id = take_labeled_line(body, "keyframe:")) {
                    if (valid_keyframe_id(*id)) {
                        keyframe = *id;
                    } else {
                        add_diag(diags, DiagCode::InvalidField, sec.pos, spelling, "invalid keyframe identifier");
                    }
                }
                if (body.empty()) {
                    add_diag(diags, DiagCode::EmptySection, sec.pos, spelling, "frame section has no description");
                    break;
                }
                keyframe_refs[sec.index] = keyframe;
                frames.emplace(sec.index, RawShotPart{sec, std::move(body)});
                break;
            }
            case TokName::Video: {
                if (videos.count(sec.index)) {
                    add_diag(diags, DiagCode::DuplicateSection, sec.pos, spelling, "video section declared twice");
                    break;
                }
                if (body.empty()) {
                    add_diag(diags, DiagCode::EmptySection, sec.pos, spelling, "video section has no description");
                    break;
                }
                videos.emplace(sec.index, RawShotPart{sec, std::move(body)});
                break;
            }
            case TokName::Extension:
            case TokName::Continuation: {
                if (have_marker) {
                    add_diag(diags, DiagCode::DuplicateMarker, sec.pos, spelling, "script already has a split marker");
                    break;
                }
                have_marker = true;
                ModeMarker marker;
                marker.mode = sec.name == TokName::Extension ? MarkerMode::Extension : MarkerMode::Continuation;
                marker.pos = sec.pos;
                if (body.empty()) {
                    add_diag(diags, DiagCode::EmptySection, sec.pos, spelling, "marker section has no prompt text");
                    break;
                }
                marker.prompt = join_body(body);
                pending_marker = marker;
                break;
            }
        }
    }
    settle_pending_marker(nullptr);

    if (!saw_user) {
        add_diag(diags, DiagCode::MissingSection, {1, 1}, "<User>", "script has no user section");
    }

    for (auto& [key, def] : entities) {
        if (def.kind == EntityKind::Character) {
            script.characters.push_back(std::move(def));
        } else {
            script.environments.push_back(std::move(def));
        }
    }
    // std::map iteration already yields ascending indices per kind.

    for (auto& [index, frame] : frames) {
        auto vit = videos.find(index);
        if (vit == videos.end()) {
            add_diag(diags, DiagCode::MissingSection, frame.section.pos, token_spelling(TokName::Video, index),
                     "frame has no matching video section");
            continue;
        }
        Shot shot;
        shot.index = index;
        shot.pos = frame.section.pos;
        shot.keyframe_ref = keyframe_refs[index];
        shot.frame_description = parse_annotated(frame.body, diags);
        shot.video_description = parse_annotated(vit->second.body, diags);
        script.shots.push_back(std::move(shot));
    }
    for (const auto& [index, video] : videos) {
        if (!frames.count(index)) {
            add_diag(diags, DiagCode::MissingSection, video.section.pos, token_spelling(TokName::Frame, index),
                     "video has no matching frame section");
        }
    }

    auto ref_diags = validate_refs(script);
    diags.insert(diags.end(), ref_diags.begin(), ref_diags.end());

    std::stable_sort(diags.begin(), diags.end(), [](const Diagnostic& a, const Diagnostic& b) {
        return std::make_pair(a.pos.line, a.pos.col) < std::make_pair(b.pos.line, b.pos.col);
    });

    if (!diags.empty()) return ParseResult{std::nullopt, std::move(diags)};
    return ParseResult{std::move(script), {}};
}

std::vector<Diagnostic> validate_refs(const Script& s) {
    std::vector<Diagnostic> diags;

    auto check_contiguous = [&diags](const std::vector<EntityDef>& defs, const char* label) {
        std::vector<std::pair<int, SourcePos>> order;
        for (const auto& def : defs) order.emplace_back(def.index, def.pos);
        std::sort(order.begin(), order.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (size_t i = 0; i < order.size(); ++i) {
            if (i > 0 && order[i].first == order[i - 1].first) {
                add_diag(diags, DiagCode::DuplicateEntityIndex, order[i].second,
                         "<" + std::string(label) + std::to_string(order[i].first) + ">",
                         "entity index declared twice");
            } else if (order[i].first != static_cast<int>(i) + 1) {
                add_diag(diags, DiagCode::NonContiguousIndex, order[i].second,
                         "<" + std::string(label) + std::to_string(order[i].first) + ">",
                         "entity indices must be contiguous from 1");
            }
        }
    };
    check_contiguous(s.characters, "Character");
    check_contiguous(s.environments, "Environment");

    {
        std::vector<std::pair<int, SourcePos>> order;
        for (const auto& shot : s.shots) order.emplace_back(shot.index, shot.pos);
        std::sort(order.begin(), order.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (size_t i = 0; i < order.size(); ++i) {
            if (i > 0 && order[i].first == order[i - 1].first) {
                add_diag(diags, DiagCode::DuplicateSection, order[i].second,
                         "<Frame" + std::to_string(order[i].first) + ">", "shot index declared twice");
            } else if (order[i].first != static_cast<int>(i) + 1) {
                add_diag(diags, DiagCode::NonContiguousIndex, order[i].second,
                         "<Frame" + std::to_string(order[i].first) + ">",
                         "shot indices must be contiguous from 1");
            }
        }
    }

    auto declared = [&s](const EntityRef& ref) {
        const auto& defs = ref.kind == EntityKind::Character ? s.characters : s.environments;
        for (const auto& def : defs)
            if (def.index == ref.index) return true;
        return false;
    };
    auto check_runs = [&](const AnnotatedText& t) {
        for (const Run& run : t.runs) {
            if (const auto* ref = std::get_if<EntityRef>(&run)) {
                if (!declared(*ref)) {
                    add_diag(diags, DiagCode::UnresolvedReference, ref->pos,
                             token_spelling(ref->kind == EntityKind::Character ? TokName::Character
                                                                               : TokName::Environment,
                                            ref->index),
                             "reference does not resolve to a declared entity");
                }
            }
        }
    };
    for (const auto& shot : s.shots) {
        check_runs(shot.frame_description);
        check_runs(shot.video_description);
    }

    if (s.mode_marker) {
        const auto& m = *s.mode_marker;
        const int n = static_cast<int>(s.shots.size());
        const bool ok = m.mode == MarkerMode::Extension ? (m.position >= 1 && m.position <= n - 1)
                                                        : (m.position >= 1 && m.position <= n);
        if (!ok) {
            add_diag(diags, DiagCode::BadMarkerPosition, m.pos,
                     m.mode == MarkerMode::Extension ? "<Extension>" : "<Continuation>",
                     "marker position out of range for shot count " + std::to_string(n));
        }
    }

    std::stable_sort(diags.begin(), diags.end(), [](const Diagnostic& a, const Diagnostic& b) {
        return std::make_pair(a.pos.line, a.pos.col) < std::make_pair(b.pos.line, b.pos.col);
    });
    return diags;
}

std::string serialize_global_chunk(const Script& s) {
    std::string body = "style: " + std::to_string(s.prompt_style) + "\n" + s.user_prompt;
    std::string out = section_text("<User>", body);
    for (const auto& def : sorted_entities(s.characters)) out += "\n" + entity_section(def);
    for (const auto& def : sorted_entities(s.environments)) out += "\n" + entity_section(def);
    return out;
}

std::string serialize_shot_chunk(const Script& s, int shot_index) {
    const Shot* shot = find_shot(s, shot_index);
    if (!shot) throw InvariantViolation("no shot with index " + std::to_string(shot_index));
    std::string out;
    if (s.mode_marker && marker_before_shot(*s.mode_marker, shot_index)) {
        out += "\n" + marker_section(*s.mode_marker);
    }
    std::string frame_body;
    if (shot->keyframe_ref) frame_body += "keyframe: " + *shot->keyframe_ref + "\n";
    frame_body += serialize_annotated(shot->frame_description);
    out += "\n" + section_text(token_spelling(TokName::Frame, shot_index), frame_body);
    out += "\n" + section_text(token_spelling(TokName::Video, shot_index),
                               serialize_annotated(shot->video_description));
    return out;
}

std::string serialize_script(const Script& s) {
    check_script_for_serialize(s);
    std::string out = serialize_global_chunk(s);
    for (int index : sorted_shot_indices(s)) out += serialize_shot_chunk(s, index);
    return out;
}

std::vector<std::pair<int, DialogueSpan>> extract_dialogue(const Script& s) {
    std::vector<std::pair<int, DialogueSpan>> out;
    for (int index : sorted_shot_indices(s)) {
        const Shot* shot = find_shot(s, index);
        for (const AnnotatedText* t : {&shot->frame_description, &shot->video_description}) {
            for (const Run& run : t->runs) {
                if (const auto* span = std::get_if<DialogueSpan>(&run)) {
                    out.emplace_back(index, *span);
                }
            }
        }
    }
    return out;
}

std::string flatten_text(const AnnotatedText& t) {
    std::string out;
    for (const Run& run : t.runs) {
        if (const auto* plain = std::get_if<TextRun>(&run)) {
            out += plain->text;
        } else if (const auto* ref = std::get_if<EntityRef>(&run)) {
            out += (ref->kind == EntityKind::Character ? "Character" : "Environment") + std::to_string(ref->index);
        } else {
            out += std::get<DialogueSpan>(run).content;
        }
    }
    return out;
}

const std::string& continuation_system_prompt() {
    static const std::string prompt = "Continue the story with one more shot that follows naturally.";
    return prompt;
}

}  // namespace director::script
