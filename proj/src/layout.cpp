#include "director/layout.hpp"

#include <algorithm>
#include <set>

namespace director::seq {

const char* role_name(Role role) {
    switch (role) {
        case Role::TEXT: return "TEXT";
        case Role::ID_PROMPT: return "ID_PROMPT";
        case Role::VIT: return "VIT";
        case Role::VAE_COND: return "VAE_COND";
        case Role::VAE_GEN: return "VAE_GEN";
    }
    return "?";
}

void LayoutConfig::validate() const {
    if (image_size <= 0 || image_size % vit_patch != 0 || image_size % latent_downsample != 0) {
        throw std::invalid_argument("image size must divide by the patch and downsample factors");
    }
    if (latent_hw() % patch_size != 0) {
        throw std::invalid_argument("latent grid must divide by the patch size");
    }
}

std::vector<script::EntityRef> shot_id_entities(const script::Shot& shot) {
    std::set<std::pair<int, int>> seen;
    for (const auto& run : shot.frame_description.runs) {
        if (const auto* ref = std::get_if<script::EntityRef>(&run)) {
            seen.insert({ref->kind == script::EntityKind::Character ? 0 : 1, ref->index});
        }
    }
    std::vector<script::EntityRef> out;
    for (const auto& [kind, index] : seen) {
        out.push_back(script::EntityRef{
            kind == 0 ? script::EntityKind::Character : script::EntityKind::Environment, index, {}});
    }
    return out;
}

std::vector<int> id_prompt_tokens(const script::Shot& shot, const Vocabulary& v) {
    std::vector<int> ids = {v.frame_id(shot.index)};
    for (const auto& ref : shot_id_entities(shot)) {
        ids.push_back(ref.kind == script::EntityKind::Character ? v.character_id(ref.index)
                                                                : v.environment_id(ref.index));
    }
    return ids;
}

namespace {

void append_split(SequenceLayout& layout, Role role, int shot, const std::vector<int>& ids,
                  std::vector<script::EntityRef> entities = {}) {
    Split split;
    split.role = role;
    split.start = layout.total;
    split.length = static_cast<int>(ids.size());
    split.shot = shot;
    split.entities = std::move(entities);
    layout.splits.push_back(std::move(split));
    layout.token_ids.insert(layout.token_ids.end(), ids.begin(), ids.end());
    layout.roles.insert(layout.roles.end(), ids.size(), role);
    layout.total += static_cast<int>(ids.size());
}

const script::Shot& shot_at(const script::Script& s, int index) {
    for (const auto& shot : s.shots)
        if (shot.index == index) return shot;
    throw BadShotIndex("no shot with index " + std::to_string(index));
}

}  // namespace

SequenceLayout layout_interleaved(const script::Script& s, const std::vector<Keyframe>& frames, const Vocabulary& v,
                                  int gen_shot, const LayoutConfig& cfg) {
    cfg.validate();
    const int n = static_cast<int>(s.shots.size());
    if (gen_shot < 1 || gen_shot > n) {
        throw BadShotIndex("gen_shot " + std::to_string(gen_shot) + " not in [1, " + std::to_string(n) + "]");
    }
    const int frames_needed = cfg.include_gen_vit ? gen_shot : gen_shot - 1;
    for (int i = 1; i <= frames_needed; ++i) {
        const bool covered = static_cast<int>(frames.size()) >= i && frames[i - 1].shot == i;
        if (!covered) throw MissingKeyframe("keyframes must cover shots 1.." + std::to_string(frames_needed));
    }

    SequenceLayout layout;
    layout.gen_shot = gen_shot;

    std::vector<int> global_ids = {v.bos_id};
    const auto global_tok = tokenize_text(script::serialize_global_chunk(s), v);
    global_ids.insert(global_ids.end(), global_tok.ids.begin(), global_tok.ids.end());
    append_split(layout, Role::TEXT, 0, global_ids);

    const std::vector<int> img_vit(cfg.vit_tokens(), v.img_id);
    const std::vector<int> img_vae(cfg.vae_tokens(), v.img_id);
    for (int i = 1; i <= gen_shot; ++i) {
        const script::Shot& shot = shot_at(s, i);
        auto text_ids = tokenize_text(script::serialize_shot_chunk(s, i), v).ids;
        if (i == n) text_ids.push_back(v.eos_id);
        append_split(layout, Role::TEXT, i, text_ids);

        const auto id_ids = id_prompt_tokens(shot, v);
        const auto entities = shot_id_entities(shot);
        const bool want_vit = i < gen_shot || cfg.include_gen_vit;
        if (want_vit) {
            if (cfg.use_id_prompts) append_split(layout, Role::ID_PROMPT, i, id_ids, entities);
            append_split(layout, Role::VIT, i, img_vit);
        }
        if (cfg.use_id_prompts) append_split(layout, Role::ID_PROMPT, i, id_ids, entities);
        append_split(layout, i < gen_shot ? Role::VAE_COND : Role::VAE_GEN, i, img_vae);
    }
    check_layout(layout);
    return layout;
}

SequenceLayout layout_text_only(const script::Script& s, const Vocabulary& v) {
    SequenceLayout layout;
    std::vector<int> ids = {v.bos_id};
    const auto tok = tokenize_script(s, v);
    ids.insert(ids.end(), tok.ids.begin(), tok.ids.end());
    ids.push_back(v.eos_id);
    append_split(layout, Role::TEXT, 0, ids);
    return layout;
}

SequenceLayout layout_from_token_ids(const std::vector<int>& ids) {
    SequenceLayout layout;
    append_split(layout, Role::TEXT, 0, ids);
    return layout;
}

void check_layout(const SequenceLayout& layout) {
    int cursor = 0;
    for (const Split& split : layout.splits) {
        if (split.start != cursor || split.length <= 0) {
            throw std::logic_error("split spans must be contiguous, non-overlapping, and non-empty");
        }
        cursor += split.length;
        for (int p = split.start; p < split.start + split.length; ++p) {
            if (layout.roles[p] != split.role) throw std::logic_error("per-position role disagrees with its split");
        }
    }
    if (cursor != layout.total || static_cast<int>(layout.token_ids.size()) != layout.total ||
        static_cast<int>(layout.roles.size()) != layout.total) {
        throw std::logic_error("split spans must cover the whole sequence");
    }
    // every vision split must be directly preceded by its ID prompt when
    // ID prompts are present at all
    for (size_t i = 0; i < layout.splits.size(); ++i) {
        const Split& split = layout.splits[i];
        if (split.role == Role::ID_PROMPT) {
            const bool next_is_vision = i + 1 < layout.splits.size() &&
                                        (layout.splits[i + 1].role == Role::VIT ||
                                         layout.splits[i + 1].role == Role::VAE_COND ||
                                         layout.splits[i + 1].role == Role::VAE_GEN) &&
                                        layout.splits[i + 1].shot == split.shot;
            if (!next_is_vision) throw std::logic_error("ID prompt split must precede a vision split of its shot");
        }
    }
}

std::string dump_layout(const SequenceLayout& layout) {
    std::string out;
    for (size_t i = 0; i < layout.splits.size(); ++i) {
        const Split& split = layout.splits[i];
        out += std::to_string(i) + ": " + role_name(split.role) + " shot=[" + std::to_string(split.shot) +
               "] span=[" + std::to_string(split.start) + "," + std::to_string(split.length) + "] entities=[";
        for (size_t e = 0; e < split.entities.size(); ++e) {
            if (e) out += ",";
            out += (split.entities[e].kind == script::EntityKind::Character ? "C" : "E") +
                   std::to_string(split.entities[e].index);
        }
        out += "]\n";
    }
    return out;
}

}  // namespace director::seq
