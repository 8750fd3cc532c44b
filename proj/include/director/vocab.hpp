#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "director/script.hpp"

namespace director::seq {

class UnknownToken : public std::runtime_error {
public:
    explicit UnknownToken(const std::string& what) : std::runtime_error(what) {}
};

// Byte-level vocabulary with single ids for every script special token.
// ids 0..255 are raw bytes; special tokens, then bos/eos/img, follow.
struct Vocabulary {
    int max_entities = 0;
    int max_shots = 0;

    int user_id = 0;
    int extension_id = 0;
    int continuation_id = 0;
    int dialogue_open_id = 0;
    int dialogue_close_id = 0;
    int first_character_id = 0;    // <Character1>
    int first_environment_id = 0;  // <Environment1>
    int first_frame_id = 0;        // <Frame1>
    int first_video_id = 0;        // <Video1>
    int bos_id = 0;
    int eos_id = 0;
    int img_id = 0;  // placeholder id carried at VIT/VAE positions

    int size_ = 0;

    int size() const { return size_; }
    int character_id(int index) const;
    int environment_id(int index) const;
    int frame_id(int index) const;
    int video_id(int index) const;

    // Printable form of any id (bytes render as themselves).
    std::string token_string(int id) const;
};

Vocabulary make_vocabulary(int max_entities, int max_shots);

struct TokenizedText {
    std::vector<int> ids;
    std::vector<size_t> offsets;  // byte offset of each token in the source text
};

// Greedy lexing: special tokens map to single ids, everything else to byte
// ids. Throws UnknownToken for a special spelling outside the vocabulary
// bounds (e.g. <Character9> with max_entities 8).
TokenizedText tokenize_text(const std::string& text, const Vocabulary& v);

// Inverse of tokenize_text; bos/eos/img render as empty strings.
std::string detokenize(const std::vector<int>& ids, const Vocabulary& v);

// tokenize_text over the canonical serialization of s.
TokenizedText tokenize_script(const script::Script& s, const Vocabulary& v);

}  // namespace director::seq
