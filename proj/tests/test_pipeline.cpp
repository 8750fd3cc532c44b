#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include "director/pipeline.hpp"

using namespace director;
using namespace director::data;
using namespace director::script;

namespace {

Script n_shot_script(int n) {
    Script s;
    s.user_prompt = "A journey.";
    s.characters.push_back({EntityKind::Character, 1, "A wanderer.", "wanderer", {}});
    for (int i = 1; i <= n; ++i) {
        Shot shot;
        shot.index = i;
        shot.frame_description.runs = {TextRun{"The wanderer"}, EntityRef{EntityKind::Character, 1, {}},
                                       TextRun{" at milestone " + std::to_string(i) + "."}};
        shot.video_description.runs = {TextRun{"Step " + std::to_string(i) + " happens. Then more."}};
        s.shots.push_back(shot);
    }
    return s;
}

}  // namespace

TEST_CASE("extension split places the marker between shots k and k+1") {
    Script s = n_shot_script(4);
    Script split = split_for_extension(s, 2, "Fresh troubles arrive.");
    REQUIRE(split.mode_marker.has_value());
    CHECK(split.mode_marker->position == 2);
    const std::string text = serialize_script(split);
    const size_t marker = text.find("<Extension>");
    REQUIRE(marker != std::string::npos);
    CHECK(marker > text.find("<Video2>"));
    CHECK(marker < text.find("<Frame3>"));
}

TEST_CASE("extension split index bounds") {
    Script s = n_shot_script(4);
    CHECK_THROWS_AS(split_for_extension(s, 4, "p"), IndexOutOfRange);
    CHECK_THROWS_AS(split_for_extension(s, 0, "p"), IndexOutOfRange);
}

TEST_CASE("continuation split inserts before the last shot") {
    Script s = n_shot_script(2);
    Script split = split_for_continuation(s, "Continue.");
    REQUIRE(split.mode_marker.has_value());
    CHECK(split.mode_marker->position == 2);
    const std::string text = serialize_script(split);
    CHECK(text.find("<Continuation>") < text.find("<Frame2>"));
    CHECK(text.find("<Continuation>") > text.find("<Video1>"));

    CHECK_THROWS_AS(split_for_continuation(n_shot_script(1), "x"), TooFewShots);
}

TEST_CASE("strip_marker reconstructs the original bytes over seeded scripts") {
    ScriptGenOptions opts;
    opts.min_shots = 2;
    opts.max_shots = 4;
    for (int i = 0; i < 50; ++i) {
        Rng rng(mix_seed(41, i));
        Script s = generate_script(rng, opts).script;
        const std::string original = serialize_script(s);
        const int n = static_cast<int>(s.shots.size());
        const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
        Script ext = split_for_extension(s, k, "New direction.");
        CHECK(serialize_script(strip_marker(ext)) == original);
        Script cont = split_for_continuation(s, continuation_system_prompt());
        CHECK(serialize_script(strip_marker(cont)) == original);
    }
}

TEST_CASE("extractive summary basics") {
    Script s = n_shot_script(1);
    s.shots[0].video_description.runs = {TextRun{"Only one sentence here."}};
    CHECK(extractive_summary(s.shots) == "Only one sentence here.");

    Script two = n_shot_script(2);
    const std::string summary = extractive_summary(two.shots);
    CHECK(summary == "Step 1 happens. Step 2 happens.");

    CHECK_THROWS_AS(extractive_summary({}), EmptyInput);
}

TEST_CASE("extractive summary stays within 40 words over seeded scripts") {
    ScriptGenOptions opts;
    opts.min_shots = 1;
    opts.max_shots = 6;
    for (int i = 0; i < 1000; ++i) {
        Rng rng(mix_seed(99, i));
        Script s = generate_script(rng, opts).script;
        const std::string summary = extractive_summary(s.shots);
        std::istringstream ss(summary);
        std::string w;
        int count = 0;
        while (ss >> w) ++count;
        CHECK(count <= 40);
        CHECK(count > 0);
        CHECK(extractive_summary(s.shots) == summary);
    }
}

TEST_CASE("prompt style sampling is deterministic and near uniform") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(sample_prompt_style(a) == sample_prompt_style(b));

    Rng rng(123);
    int counts[5] = {0, 0, 0, 0, 0};
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) ++counts[sample_prompt_style(rng)];
    for (int s = 1; s <= 4; ++s) {
        const double freq = static_cast<double>(counts[s]) / draws;
        CHECK(freq > 0.22);
        CHECK(freq < 0.28);
    }
}

TEST_CASE("every 100-draw window contains all four styles") {
    Rng rng(5);
    std::vector<int> stream(100000);
    for (int& v : stream) v = sample_prompt_style(rng);
    for (size_t w = 0; w + 100 <= stream.size(); w += 100) {
        std::set<int> seen(stream.begin() + w, stream.begin() + w + 100);
        CHECK(seen.size() == 4);
    }
}

TEST_CASE("parse/serialize round-trip over 1000 seeded synthetic scripts") {
    ScriptGenOptions opts;
    opts.max_shots = 4;
    opts.max_characters = 4;
    for (int i = 0; i < 1000; ++i) {
        Rng rng(mix_seed(2024, i));
        Script s = generate_script(rng, opts).script;
        const std::string text = serialize_script(s);
        auto parsed = parse_script(text);
        REQUIRE(parsed.ok());
        CHECK(*parsed.script == s);
        CHECK(serialize_script(*parsed.script) == text);
    }
}

TEST_CASE("planted dialogue spans match extraction exactly") {
    ScriptGenOptions opts;
    opts.max_shots = 5;
    opts.dialogue_prob = 0.8;
    for (int i = 0; i < 200; ++i) {
        Rng rng(mix_seed(77, i));
        auto gen = generate_script(rng, opts);
        auto extracted = extract_dialogue(gen.script);
        REQUIRE(extracted.size() == gen.planted_dialogue.size());
        for (size_t k = 0; k < extracted.size(); ++k) {
            CHECK(extracted[k].first == gen.planted_dialogue[k].first);
            CHECK(extracted[k].second == gen.planted_dialogue[k].second);
        }
    }
}

TEST_CASE("mutation suite: every planted bad reference is detected, nothing else") {
    ScriptGenOptions opts;
    opts.max_shots = 4;
    for (int i = 0; i < 100; ++i) {
        Rng rng(mix_seed(31337, i));
        Script s = generate_script(rng, opts).script;
        int planted = 0;
        for (auto& shot : s.shots) {
            for (auto& run : shot.frame_description.runs) {
                if (auto* ref = std::get_if<EntityRef>(&run)) {
                    if (rng.below(2) == 0) {
                        ref->index += 50;
                        ++planted;
                    }
                }
            }
        }
        auto diags = validate_refs(s);
        CHECK(static_cast<int>(diags.size()) == planted);
        for (const auto& d : diags) CHECK(d.code == DiagCode::UnresolvedReference);

        const std::string text = serialize_script(s);
        auto parsed = parse_script(text);
        if (planted == 0) {
            CHECK(parsed.ok());
        } else {
            int unresolved = 0;
            for (const auto& d : parsed.diagnostics)
                if (d.code == DiagCode::UnresolvedReference) ++unresolved;
            CHECK(unresolved == planted);
            CHECK(parsed.diagnostics.size() == static_cast<size_t>(planted));
        }
    }
}

TEST_CASE("synthetic corpus: zero counts give empty collections") {
    CorpusConfig cfg;
    cfg.seed = 1;
    Corpus corpus = make_synthetic_corpus(cfg);
    CHECK(corpus.interleaved.empty());
    CHECK(corpus.text_scripts.empty());
    CHECK(corpus.image_pairs.empty());
}

TEST_CASE("synthetic corpus is byte-identical for equal seeds") {
    CorpusConfig cfg;
    cfg.interleaved_count = 5;
    cfg.text_count = 5;
    cfg.pair_count = 3;
    cfg.seed = 9;
    Corpus a = make_synthetic_corpus(cfg);
    Corpus b = make_synthetic_corpus(cfg);
    REQUIRE(a.interleaved.size() == b.interleaved.size());
    for (size_t i = 0; i < a.interleaved.size(); ++i) {
        CHECK(serialize_script(a.interleaved[i].script) == serialize_script(b.interleaved[i].script));
        REQUIRE(a.interleaved[i].keyframes.size() == b.interleaved[i].keyframes.size());
        for (size_t k = 0; k < a.interleaved[i].keyframes.size(); ++k) {
            CHECK(a.interleaved[i].keyframes[k].pixels == b.interleaved[i].keyframes[k].pixels);
        }
    }
    for (size_t i = 0; i < a.text_scripts.size(); ++i) {
        CHECK(serialize_script(a.text_scripts[i].script) == serialize_script(b.text_scripts[i].script));
    }
}

TEST_CASE("100 interleaved samples all pass validate_refs") {
    CorpusConfig cfg;
    cfg.interleaved_count = 100;
    cfg.seed = 4242;
    Corpus corpus = make_synthetic_corpus(cfg);
    REQUIRE(corpus.interleaved.size() == 100);
    int passing = 0;
    for (const auto& sample : corpus.interleaved) {
        if (validate_refs(sample.script).empty()) ++passing;
        CHECK(sample.keyframes.size() == sample.script.shots.size());
    }
    CHECK(passing == 100);
}

TEST_CASE("keyframe pixels depend only on entities, shot index and seed") {
    std::vector<EntityRef> refs = {{EntityKind::Character, 1, {}}, {EntityKind::Environment, 2, {}}};
    Image a = render_keyframe(refs, 3, 11, 64);
    Image b = render_keyframe(refs, 3, 11, 64);
    CHECK(a.pixels == b.pixels);
    std::vector<EntityRef> swapped = {refs[1], refs[0]};
    CHECK(render_keyframe(swapped, 3, 11, 64).pixels == a.pixels);

    Image other_shot = render_keyframe(refs, 4, 11, 64);
    CHECK(other_shot.pixels != a.pixels);
    Image other_refs = render_keyframe({{EntityKind::Character, 2, {}}}, 3, 11, 64);
    CHECK(other_refs.pixels != a.pixels);
}

TEST_CASE("corpus writes and reloads through the manifest") {
    CorpusConfig cfg;
    cfg.interleaved_count = 3;
    cfg.text_count = 2;
    cfg.pair_count = 2;
    cfg.seed = 77;
    Corpus corpus = make_synthetic_corpus(cfg);
    const std::string dir = "/tmp/director_corpus_test";
    std::filesystem::remove_all(dir);
    write_corpus(corpus, dir);
    Corpus loaded = load_corpus(dir);
    REQUIRE(loaded.interleaved.size() == 3);
    REQUIRE(loaded.text_scripts.size() == 2);
    REQUIRE(loaded.image_pairs.size() == 2);
    for (size_t i = 0; i < loaded.interleaved.size(); ++i) {
        CHECK(loaded.interleaved[i].script == corpus.interleaved[i].script);
        REQUIRE(loaded.interleaved[i].keyframes.size() == corpus.interleaved[i].keyframes.size());
        // PPM quantization is the only loss
        for (size_t k = 0; k < loaded.interleaved[i].keyframes.size(); ++k) {
            const auto& got = loaded.interleaved[i].keyframes[k].pixels;
            const auto& want = corpus.interleaved[i].keyframes[k].pixels;
            REQUIRE(got.size() == want.size());
            for (size_t p = 0; p < got.size(); ++p) CHECK(std::abs(got[p] - want[p]) < 1.0 / 255.0);
        }
    }
}
