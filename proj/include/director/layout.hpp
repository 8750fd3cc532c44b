#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "director/common.hpp"
#include "director/script.hpp"
#include "director/vocab.hpp"

namespace director::seq {

class MissingKeyframe : public std::runtime_error {
public:
    explicit MissingKeyframe(const std::string& what) : std::runtime_error(what) {}
};
class BadShotIndex : public std::out_of_range {
public:
    explicit BadShotIndex(const std::string& what) : std::out_of_range(what) {}
};

enum class Role { TEXT, ID_PROMPT, VIT, VAE_COND, VAE_GEN };

const char* role_name(Role role);

// One keyframe image plus its encoded forms. The encoded fields are filled
// by the model-side encoders; the layout only needs token counts.
struct Keyframe {
    int shot = 0;
    Image pixels;
    std::vector<double> vit_tokens;  // vit_count x vit_width, row-major
    int vit_count = 0;
    int vit_width = 0;
    Latent vae_latents;  // channels = 16, h = H/8, w = W/8
};

struct Split {
    Role role = Role::TEXT;
    int start = 0;
    int length = 0;
    int shot = 0;                             // 0 for the global prefix
    std::vector<script::EntityRef> entities;  // ID_PROMPT splits only
};

struct LayoutConfig {
    int image_size = 64;
    int vit_patch = 8;
    int latent_downsample = 8;
    int latent_channels = 16;
    int patch_size = 2;  // 2x2 latent patch embedding
    bool use_id_prompts = true;
    // The generated shot carries a ViT split by default; training and
    // inference paths disable this so the model never conditions on a
    // clean encoding of the image it is asked to produce.
    bool include_gen_vit = true;

    int vit_grid() const { return image_size / vit_patch; }
    int vit_tokens() const { return vit_grid() * vit_grid(); }
    int latent_hw() const { return image_size / latent_downsample; }
    int vae_grid() const { return latent_hw() / patch_size; }
    int vae_tokens() const { return vae_grid() * vae_grid(); }
    int patch_dim() const { return latent_channels * patch_size * patch_size; }
    int vit_patch_dim() const { return vit_patch * vit_patch * 3; }

    void validate() const;
};

struct SequenceLayout {
    std::vector<Split> splits;
    int total = 0;
    std::vector<int> token_ids;  // per position; img placeholder at vision positions
    std::vector<Role> roles;     // per position
    int gen_shot = 0;            // 0 when the layout has no generation target
};

// Entities referenced in a shot's frame description: unique, characters
// ascending then environments ascending.
std::vector<script::EntityRef> shot_id_entities(const script::Shot& shot);

// ID-prompt token ids for one shot: <FrameN>, then <CharacterJ>..., then
// <EnvironmentK>... for exactly the entities referenced by the shot.
std::vector<int> id_prompt_tokens(const script::Shot& shot, const Vocabulary& v);

// Interleaved sequence: global text, then per shot its text, ID prompt,
// ViT block, ID prompt, VAE block. Shots before gen_shot carry clean
// VAE_COND latents, shot gen_shot carries the noised VAE_GEN block.
SequenceLayout layout_interleaved(const script::Script& s, const std::vector<Keyframe>& frames, const Vocabulary& v,
                                  int gen_shot, const LayoutConfig& cfg);

// Whole serialized script as one causal TEXT split: bos + text + eos.
SequenceLayout layout_text_only(const script::Script& s, const Vocabulary& v);

// A TEXT-only layout over raw token ids (decode loop helper).
SequenceLayout layout_from_token_ids(const std::vector<int>& ids);

// Throws std::logic_error when split spans fail to partition the range or
// per-position tags disagree with their owning split.
void check_layout(const SequenceLayout& layout);

// "split#: role shot=[i] span=[start,len] entities=[...]" per line.
std::string dump_layout(const SequenceLayout& layout);

}  // namespace director::seq
