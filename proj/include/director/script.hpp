#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace director::script {

// ---------------------------------------------------------------------------
// Script text format
//
// A script is a sequence of sections. Each section opens with a special
// token alone on its own line and runs until the next section header:
//
//   <User>            user prompt; first body line is "style: N", N in 1..4
//   <CharacterN>      entity definition; optional first body line "short: ..."
//   <EnvironmentN>    same as above
//   <FrameN>          static frame description; optional "keyframe: id" line
//   <VideoN>          temporal/narrative description
//   <Extension>       narrative split marker followed by a fresh user prompt
//   <Continuation>    narrative split marker followed by a system prompt
//
// Inside frame/video bodies, <CharacterN> / <EnvironmentN> mark entity
// occurrences inline, and <- ... -> delimits dialogue or sound effects
// (sound effects carry an "SFX:" prefix inside the markers). Canonical
// order is user prompt, characters ascending, environments ascending,
// shots ascending with Frame before Video; sections are separated by one
// blank line.
// ---------------------------------------------------------------------------

enum class EntityKind { Character, Environment };

struct SourcePos {
    int line = 0;  // 1-based; 0 means "no source position" (built AST)
    int col = 0;
};

enum class DiagCode {
    UnknownSpecialToken,
    MisplacedToken,
    DuplicateEntityIndex,
    DuplicateSection,
    NonContiguousIndex,
    MissingSection,
    UnclosedDialogue,
    EmptySection,
    UnresolvedReference,
    BadStyleTag,
    BadMarkerPosition,
    DuplicateMarker,
    StrayContent,
    InvalidField,
};

std::string diag_code_name(DiagCode code);

struct Diagnostic {
    DiagCode code;
    SourcePos pos;
    std::string token;    // offending token text, when one exists
    std::string message;

    // "line:col: CODE message" (the CLI prefixes the file path).
    std::string format() const;
};

struct EntityRef {
    EntityKind kind = EntityKind::Character;
    int index = 0;
    SourcePos pos;

    bool operator==(const EntityRef& o) const { return kind == o.kind && index == o.index; }
};

enum class SpanCategory { Dialogue, SoundEffect };

struct DialogueSpan {
    std::string content;  // text between the indicator symbols, markers excluded
    SpanCategory category = SpanCategory::Dialogue;
    SourcePos pos;

    bool operator==(const DialogueSpan& o) const { return content == o.content && category == o.category; }
};

struct TextRun {
    std::string text;

    bool operator==(const TextRun& o) const { return text == o.text; }
};

using Run = std::variant<TextRun, EntityRef, DialogueSpan>;

struct AnnotatedText {
    std::vector<Run> runs;

    bool operator==(const AnnotatedText& o) const { return runs == o.runs; }
    bool empty() const { return runs.empty(); }
};

struct EntityDef {
    EntityKind kind = EntityKind::Character;
    int index = 0;
    std::string caption;
    std::string short_caption;  // at most 10 words
    SourcePos pos;

    bool operator==(const EntityDef& o) const {
        return kind == o.kind && index == o.index && caption == o.caption && short_caption == o.short_caption;
    }
};

struct Shot {
    int index = 0;
    AnnotatedText frame_description;
    AnnotatedText video_description;
    std::optional<std::string> keyframe_ref;
    SourcePos pos;

    bool operator==(const Shot& o) const {
        return index == o.index && frame_description == o.frame_description &&
               video_description == o.video_description && keyframe_ref == o.keyframe_ref;
    }
};

enum class MarkerMode { Extension, Continuation };

struct ModeMarker {
    MarkerMode mode = MarkerMode::Extension;
    // Extension: marker sits between shots `position` and `position`+1.
    // Continuation: marker sits directly before shot `position`.
    int position = 0;
    std::string prompt;
    SourcePos pos;

    bool operator==(const ModeMarker& o) const {
        return mode == o.mode && position == o.position && prompt == o.prompt;
    }
};

struct Script {
    std::string user_prompt;
    int prompt_style = 1;  // 1..4
    std::vector<EntityDef> characters;
    std::vector<EntityDef> environments;
    std::vector<Shot> shots;
    std::optional<ModeMarker> mode_marker;

    bool operator==(const Script& o) const {
        return user_prompt == o.user_prompt && prompt_style == o.prompt_style && characters == o.characters &&
               environments == o.environments && shots == o.shots && mode_marker == o.mode_marker;
    }
};

struct ParseResult {
    std::optional<Script> script;  // present iff diagnostics is empty
    std::vector<Diagnostic> diagnostics;

    bool ok() const { return diagnostics.empty(); }
};

// Thrown by serialize_script when the AST violates a structural invariant.
class InvariantViolation : public std::runtime_error {
public:
    explicit InvariantViolation(const std::string& what) : std::runtime_error(what) {}
};

ParseResult parse_script(std::string_view source);

// Deterministic canonical text. Byte-identical output for equal ASTs,
// and parse_script(serialize_script(s)) reproduces s exactly.
std::string serialize_script(const Script& s);

// Structural and referential checks on an AST, ordered by source position.
// Empty result iff every entity reference resolves and indices are contiguous.
std::vector<Diagnostic> validate_refs(const Script& s);

// All dialogue/sound spans in document order, tagged with their shot index.
std::vector<std::pair<int, DialogueSpan>> extract_dialogue(const Script& s);

// Flattens annotated text to plain words: refs render as "Character2",
// spans as their content. Used by the extractive summarizer.
std::string flatten_text(const AnnotatedText& t);

// Serialized text of one section, used by the sequence layout to carve the
// canonical script text into per-shot chunks whose concatenation equals
// serialize_script(s).
std::string serialize_global_chunk(const Script& s);           // user + entity sections
std::string serialize_shot_chunk(const Script& s, int shot);   // marker (if any) + frame + video

const std::string& continuation_system_prompt();

}  // namespace director::script
