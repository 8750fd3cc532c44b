#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "director/script.hpp"

using namespace director::script;

namespace {

Script small_script() {
    Script s;
    s.user_prompt = "A quiet reunion on a ship at dusk.";
    s.prompt_style = 2;
    s.characters.push_back({EntityKind::Character, 1, "A young man with a worn brown jacket.", "young man", {}});
    s.environments.push_back({EntityKind::Environment, 1, "The deck of a grand ocean liner.", "liner deck", {}});
    Shot shot1;
    shot1.index = 1;
    shot1.frame_description.runs = {TextRun{"On the deck"}, EntityRef{EntityKind::Environment, 1, {}},
                                    TextRun{", a young man"}, EntityRef{EntityKind::Character, 1, {}},
                                    TextRun{" leans on the railing."}};
    shot1.video_description.runs = {TextRun{"He turns and speaks: "},
                                    DialogueSpan{"Now close your eyes. Go on.", SpanCategory::Dialogue, {}}};
    s.shots.push_back(shot1);
    Shot shot2;
    shot2.index = 2;
    shot2.frame_description.runs = {TextRun{"Close on the man"}, EntityRef{EntityKind::Character, 1, {}},
                                    TextRun{" smiling."}};
    shot2.video_description.runs = {TextRun{"Waves crash softly. "},
                                    DialogueSpan{"distant gulls", SpanCategory::SoundEffect, {}}};
    s.shots.push_back(shot2);
    return s;
}

int count_code(const std::vector<Diagnostic>& diags, DiagCode code) {
    return static_cast<int>(std::count_if(diags.begin(), diags.end(),
                                          [code](const Diagnostic& d) { return d.code == code; }));
}

}  // namespace

TEST_CASE("two-shot script parses into the expected structure") {
    const std::string text =
        "<User>\n"
        "style: 1\n"
        "A man explores a cave.\n"
        "\n"
        "<Character1>\n"
        "short: explorer\n"
        "A tall explorer with a lantern.\n"
        "\n"
        "<Environment1>\n"
        "short: cave\n"
        "A dripping limestone cave.\n"
        "\n"
        "<Frame1>\n"
        "Inside the cave<Environment1>, the explorer<Character1> lifts the lantern.\n"
        "\n"
        "<Video1>\n"
        "The lantern flickers as he walks deeper.\n"
        "\n"
        "<Frame2>\n"
        "The explorer<Character1> kneels by an underground pool.\n"
        "\n"
        "<Video2>\n"
        "He whispers: <-It goes further down.->\n";
    auto result = parse_script(text);
    REQUIRE(result.ok());
    const Script& s = *result.script;
    CHECK(s.characters.size() == 1);
    CHECK(s.environments.size() == 1);
    CHECK(s.shots.size() == 2);
    CHECK(s.prompt_style == 1);
    CHECK(s.user_prompt == "A man explores a cave.");
    CHECK(s.characters[0].short_caption == "explorer");
    CHECK(!s.mode_marker.has_value());
    // serialized form reproduces the canonical input byte for byte
    CHECK(serialize_script(s) == text);
}

TEST_CASE("unresolved reference is reported at its position") {
    const std::string text =
        "<User>\n"
        "style: 1\n"
        "Two friends.\n"
        "\n"
        "<Character1>\n"
        "short:\n"
        "First friend.\n"
        "\n"
        "<Character2>\n"
        "short:\n"
        "Second friend.\n"
        "\n"
        "<Frame1>\n"
        "They wave. <Character3> joins.\n"
        "\n"
        "<Video1>\n"
        "They all laugh.\n";
    auto result = parse_script(text);
    REQUIRE(!result.ok());
    REQUIRE(count_code(result.diagnostics, DiagCode::UnresolvedReference) == 1);
    const auto& d = *std::find_if(result.diagnostics.begin(), result.diagnostics.end(),
                                  [](const Diagnostic& d) { return d.code == DiagCode::UnresolvedReference; });
    CHECK(d.token == "<Character3>");
    CHECK(d.pos.line == 14);
    CHECK(d.pos.col == 12);
}

TEST_CASE("serialize emits exactly the declared sections for a minimal script") {
    Script s;
    s.user_prompt = "Just a face.";
    s.prompt_style = 3;
    s.characters.push_back({EntityKind::Character, 1, "A weathered sailor.", "sailor", {}});
    const std::string text = serialize_script(s);
    CHECK(text ==
          "<User>\n"
          "style: 3\n"
          "Just a face.\n"
          "\n"
          "<Character1>\n"
          "short: sailor\n"
          "A weathered sailor.\n");
}

TEST_CASE("field construction order does not change serialized bytes") {
    Script a = small_script();
    Script b = small_script();
    std::reverse(b.shots.begin(), b.shots.end());
    // declaration lists in a scrambled order
    b.characters.push_back({EntityKind::Character, 2, "A stowaway kid.", "kid", {}});
    a.characters.insert(a.characters.begin(), {EntityKind::Character, 2, "A stowaway kid.", "kid", {}});
    CHECK(serialize_script(a) == serialize_script(b));
}

TEST_CASE("round-trip and idempotent canonicalization") {
    Script s = small_script();
    const std::string text = serialize_script(s);
    auto again = parse_script(text);
    REQUIRE(again.ok());
    CHECK(*again.script == s);

    // messy but valid input: extra blank lines, trailing spaces on headers
    const std::string messy =
        "\n\n<User>  \nstyle: 2\nA dream.\n\n\n\n<Frame1>\nA pale room with a chair.\n\n<Video1>\nDust drifts.\n\n";
    auto first = parse_script(messy);
    REQUIRE(first.ok());
    const std::string once = serialize_script(*first.script);
    auto second = parse_script(once);
    REQUIRE(second.ok());
    CHECK(serialize_script(*second.script) == once);
}

TEST_CASE("validate_refs is empty on a consistent script") {
    CHECK(validate_refs(small_script()).empty());
}

TEST_CASE("validate_refs flags a gap in entity indices") {
    Script s = small_script();
    s.environments[0].index = 2;  // Environment2 declared, Environment1 missing
    auto diags = validate_refs(s);
    REQUIRE(count_code(diags, DiagCode::NonContiguousIndex) == 1);
    // the dangling reference to Environment1 also surfaces
    CHECK(count_code(diags, DiagCode::UnresolvedReference) == 1);
}

TEST_CASE("validate_refs counts exactly the planted bad references") {
    Script s = small_script();
    std::get<EntityRef>(s.shots[0].frame_description.runs[1]).index = 7;
    std::get<EntityRef>(s.shots[1].frame_description.runs[1]).index = 9;
    auto diags = validate_refs(s);
    CHECK(count_code(diags, DiagCode::UnresolvedReference) == 2);
    CHECK(diags.size() == 2);
}

TEST_CASE("extract_dialogue returns spans in document order") {
    Script s = small_script();
    auto spans = extract_dialogue(s);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].first == 1);
    CHECK(spans[0].second.content == "Now close your eyes. Go on.");
    CHECK(spans[0].second.category == SpanCategory::Dialogue);
    CHECK(spans[1].first == 2);
    CHECK(spans[1].second.category == SpanCategory::SoundEffect);
    CHECK(spans[1].second.content == "distant gulls");
}

TEST_CASE("extract_dialogue is empty without indicator symbols") {
    Script s = small_script();
    s.shots[0].video_description.runs = {TextRun{"Silence."}};
    s.shots[1].video_description.runs = {TextRun{"More silence."}};
    CHECK(extract_dialogue(s).empty());
}

TEST_CASE("sound effects round-trip through the SFX prefix") {
    Script s = small_script();
    const std::string text = serialize_script(s);
    CHECK(text.find("<-SFX:distant gulls->") != std::string::npos);
    auto again = parse_script(text);
    REQUIRE(again.ok());
    CHECK(*again.script == s);
}

TEST_CASE("lexical errors carry the offending token") {
    const std::string text =
        "<User>\nstyle: 1\nA story.\n\n<Charcter1>\nshort:\nOops.\n\n<Frame1>\nA room.\n\n<Video1>\nQuiet.\n";
    auto result = parse_script(text);
    REQUIRE(!result.ok());
    CHECK(count_code(result.diagnostics, DiagCode::UnknownSpecialToken) == 1);
    CHECK(result.diagnostics[0].token == "<Charcter1>");
}

TEST_CASE("duplicate entity index is reported") {
    const std::string text =
        "<User>\nstyle: 1\nA story.\n\n<Character1>\nshort:\nOne.\n\n<Character1>\nshort:\nTwo.\n\n"
        "<Frame1>\nA room.\n\n<Video1>\nQuiet.\n";
    auto result = parse_script(text);
    REQUIRE(!result.ok());
    CHECK(count_code(result.diagnostics, DiagCode::DuplicateEntityIndex) == 1);
}

TEST_CASE("unclosed dialogue is reported") {
    const std::string text =
        "<User>\nstyle: 1\nA story.\n\n<Frame1>\nA room.\n\n<Video1>\nHe says <-hello and nothing else\n";
    auto result = parse_script(text);
    REQUIRE(!result.ok());
    CHECK(count_code(result.diagnostics, DiagCode::UnclosedDialogue) == 1);
}

TEST_CASE("empty sections are reported") {
    const std::string text = "<User>\nstyle: 1\nA story.\n\n<Frame1>\n\n<Video1>\nQuiet.\n";
    auto result = parse_script(text);
    REQUIRE(!result.ok());
    CHECK(count_code(result.diagnostics, DiagCode::EmptySection) == 1);
}

TEST_CASE("extension marker parses between shots and round-trips") {
    Script s = small_script();
    s.mode_marker = ModeMarker{MarkerMode::Extension, 1, "Now the stowaway appears.", {}};
    const std::string text = serialize_script(s);
    const auto pos_marker = text.find("<Extension>");
    REQUIRE(pos_marker != std::string::npos);
    CHECK(pos_marker > text.find("<Video1>"));
    CHECK(pos_marker < text.find("<Frame2>"));
    auto again = parse_script(text);
    REQUIRE(again.ok());
    CHECK(*again.script == s);
}

TEST_CASE("continuation marker sits before the last shot") {
    Script s = small_script();
    s.mode_marker = ModeMarker{MarkerMode::Continuation, 2, "Continue the story.", {}};
    const std::string text = serialize_script(s);
    REQUIRE(text.find("<Continuation>") != std::string::npos);
    CHECK(text.find("<Continuation>") < text.find("<Frame2>"));
    auto again = parse_script(text);
    REQUIRE(again.ok());
    CHECK(again.script->mode_marker->position == 2);
}

TEST_CASE("marker not followed by a frame is rejected") {
    const std::string text =
        "<User>\nstyle: 1\nA story.\n\n<Frame1>\nA room.\n\n<Video1>\nQuiet.\n\n<Extension>\nMore story.\n";
    auto result = parse_script(text);
    REQUIRE(!result.ok());
    CHECK(count_code(result.diagnostics, DiagCode::BadMarkerPosition) == 1);
}

TEST_CASE("serialize rejects invariant violations") {
    Script s = small_script();
    s.shots[1].index = 3;  // gap
    CHECK_THROWS_AS(serialize_script(s), InvariantViolation);

    Script t = small_script();
    std::get<TextRun>(t.shots[0].frame_description.runs[0]).text = "bad <- indicator";
    CHECK_THROWS_AS(serialize_script(t), InvariantViolation);

    Script u = small_script();
    u.user_prompt = "";
    CHECK_THROWS_AS(serialize_script(u), InvariantViolation);
}

TEST_CASE("pure prompt input parses with defaults") {
    auto result = parse_script("<User>\nA lone fox crosses a frozen lake.\n");
    REQUIRE(result.ok());
    CHECK(result.script->prompt_style == 1);
    CHECK(result.script->shots.empty());
    CHECK(result.script->characters.empty());
}
