#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "director/common.hpp"
#include "director/script.hpp"

namespace director::data {

class IndexOutOfRange : public std::out_of_range {
public:
    explicit IndexOutOfRange(const std::string& what) : std::out_of_range(what) {}
};
class TooFewShots : public std::invalid_argument {
public:
    explicit TooFewShots(const std::string& what) : std::invalid_argument(what) {}
};
class EmptyInput : public std::invalid_argument {
public:
    explicit EmptyInput(const std::string& what) : std::invalid_argument(what) {}
};

// Inserts an <Extension> marker after shot k together with a fresh user
// prompt; the original script is recoverable byte-exactly via strip_marker.
script::Script split_for_extension(const script::Script& s, int k, const std::string& prompt);

// Inserts a <Continuation> marker with a system prompt before the last shot.
script::Script split_for_continuation(const script::Script& s, const std::string& system_prompt);

script::Script strip_marker(const script::Script& s);

// Deterministic stand-in for an LLM summarizer: first sentence of each
// video description in shot order, truncated to at most 40 words.
std::string extractive_summary(const std::vector<script::Shot>& shots);

// Uniform over {1,2,3,4}.
int sample_prompt_style(Rng& rng);

struct ScriptGenOptions {
    int min_shots = 1;
    int max_shots = 3;
    int min_characters = 1;
    int max_characters = 3;
    int min_environments = 1;
    int max_environments = 2;
    int vocab_size = 64;
    double dialogue_prob = 0.5;
    double sfx_prob = 0.2;
    int extra_words = 0;  // padding words appended to each description
};

struct GeneratedScript {
    script::Script script;
    // ground truth for the dialogue-extraction oracle
    std::vector<std::pair<int, script::DialogueSpan>> planted_dialogue;
};

GeneratedScript generate_script(Rng& rng, const ScriptGenOptions& opts);

// Renders the keyframe for one shot: one colored glyph per referenced
// entity at a position fixed by its index, plus a shot-index strip.
Image render_keyframe(const std::vector<script::EntityRef>& entities, int shot_index, std::uint64_t seed,
                      int image_size);

struct CorpusConfig {
    int interleaved_count = 0;
    int text_count = 0;
    int pair_count = 0;
    ScriptGenOptions gen;
    int image_size = 64;
    std::uint64_t seed = 0;
};

struct CorpusSample {
    std::string id;
    script::Script script;
    std::vector<Image> keyframes;  // one per shot; empty for text-only samples
};

struct Corpus {
    std::vector<CorpusSample> interleaved;
    std::vector<CorpusSample> text_scripts;
    std::vector<CorpusSample> image_pairs;
};

// Deterministic per seed. Every emitted script passes validate_refs.
Corpus make_synthetic_corpus(const CorpusConfig& cfg);

// One directory per subset, scripts as .script files, keyframes as binary
// PPM, plus a manifest listing ids and relative paths.
void write_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

}  // namespace director::data
