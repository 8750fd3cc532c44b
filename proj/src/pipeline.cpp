#include "director/pipeline.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <set>
#include <sstream>

namespace director::data {

namespace fs = std::filesystem;
using script::AnnotatedText;
using script::DialogueSpan;
using script::EntityDef;
using script::EntityKind;
using script::EntityRef;
using script::MarkerMode;
using script::ModeMarker;
using script::Script;
using script::Shot;
using script::SpanCategory;
using script::TextRun;

script::Script split_for_extension(const Script& s, int k, const std::string& prompt) {
    const int n = static_cast<int>(s.shots.size());
    if (k < 1 || k >= n) {
        throw IndexOutOfRange("extension split index " + std::to_string(k) + " not in [1, " + std::to_string(n - 1) +
                              "]");
    }
    if (s.mode_marker) throw script::InvariantViolation("script already carries a split marker");
    Script out = s;
    out.mode_marker = ModeMarker{MarkerMode::Extension, k, prompt, {}};
    return out;
}

script::Script split_for_continuation(const Script& s, const std::string& system_prompt) {
    const int n = static_cast<int>(s.shots.size());
    if (n < 2) throw TooFewShots("continuation requires at least 2 shots, got " + std::to_string(n));
    if (s.mode_marker) throw script::InvariantViolation("script already carries a split marker");
    Script out = s;
    out.mode_marker = ModeMarker{MarkerMode::Continuation, n, system_prompt, {}};
    return out;
}

script::Script strip_marker(const Script& s) {
    Script out = s;
    out.mode_marker.reset();
    return out;
}

std::string extractive_summary(const std::vector<Shot>& shots) {
    if (shots.empty()) throw EmptyInput("extractive_summary: no shots");
    std::vector<const Shot*> order;
    for (const Shot& shot : shots) order.push_back(&shot);
    std::sort(order.begin(), order.end(), [](const Shot* a, const Shot* b) { return a->index < b->index; });
    std::string joined;
    for (const Shot* shot : order) {
        std::string flat = script::flatten_text(shot->video_description);
        const size_t stop = flat.find_first_of(".!?");
        if (stop != std::string::npos) flat = flat.substr(0, stop + 1);
        if (!joined.empty()) joined += ' ';
        joined += flat;
    }
    std::istringstream ss(joined);
    std::string word, out;
    int count = 0;
    while (ss >> word && count < 40) {
        if (count) out += ' ';
        out += word;
        ++count;
    }
    return out;
}

int sample_prompt_style(Rng& rng) {
    return 1 + static_cast<int>(rng.below(4));
}

namespace {

// Pseudo-word list: distinct lowercase syllable combinations.
std::string make_word(int i) {
    static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
    static const char* vowels[] = {"a", "e", "i", "o", "u"};
    constexpr int n_on = 14, n_vo = 5;
    std::string w;
    int v = i;
    do {
        w += onsets[v % n_on];
        w += vowels[(v / n_on) % n_vo];
        v /= n_on * n_vo;
    } while (v > 0);
    return w;
}

std::string sentence(Rng& rng, int vocab, int min_words, int max_words) {
    const int n = static_cast<int>(rng.range(min_words, max_words));
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += make_word(static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab))));
    }
    out += '.';
    return out;
}

AnnotatedText annotated_with_refs(Rng& rng, const ScriptGenOptions& opts, const std::vector<EntityRef>& refs) {
    AnnotatedText out;
    std::string lead = sentence(rng, opts.vocab_size, 2, 4);
    lead.pop_back();  // refs attach mid-sentence, keep the period for the tail
    out.runs.push_back(TextRun{lead});
    for (const EntityRef& ref : refs) {
        out.runs.push_back(ref);
        std::string tail = " " + sentence(rng, opts.vocab_size, 1, 3);
        tail.pop_back();
        out.runs.push_back(TextRun{tail});
    }
    std::string close = ".";
    if (opts.extra_words > 0) {
        // padding length varies per shot so entity references land at
        // unpredictable absolute positions
        const int n_extra = static_cast<int>(rng.range(opts.extra_words / 2, opts.extra_words));
        close = ". ";
        for (int i = 0; i < n_extra; ++i) {
            if (i) close += ' ';
            close += make_word(static_cast<int>(rng.below(static_cast<std::uint64_t>(opts.vocab_size))));
        }
        close += '.';
    }
    std::get<TextRun>(out.runs.back()).text += close;
    return out;
}

}  // namespace

GeneratedScript generate_script(Rng& rng, const ScriptGenOptions& opts) {
    GeneratedScript gen;
    Script& s = gen.script;
    s.prompt_style = sample_prompt_style(rng);
    s.user_prompt = sentence(rng, opts.vocab_size, 4, 9);

    const int n_chars = static_cast<int>(rng.range(opts.min_characters, opts.max_characters));
    const int n_envs = static_cast<int>(rng.range(opts.min_environments, opts.max_environments));
    for (int i = 1; i <= n_chars; ++i) {
        EntityDef def;
        def.kind = EntityKind::Character;
        def.index = i;
        def.caption = sentence(rng, opts.vocab_size, 3, 7);
        def.short_caption = make_word(static_cast<int>(rng.below(static_cast<std::uint64_t>(opts.vocab_size)))) +
                            " " + make_word(static_cast<int>(rng.below(static_cast<std::uint64_t>(opts.vocab_size))));
        s.characters.push_back(def);
    }
    for (int i = 1; i <= n_envs; ++i) {
        EntityDef def;
        def.kind = EntityKind::Environment;
        def.index = i;
        def.caption = sentence(rng, opts.vocab_size, 3, 7);
        def.short_caption = make_word(static_cast<int>(rng.below(static_cast<std::uint64_t>(opts.vocab_size))));
        s.environments.push_back(def);
    }

    const int n_shots = static_cast<int>(rng.range(opts.min_shots, opts.max_shots));
    for (int i = 1; i <= n_shots; ++i) {
        Shot shot;
        shot.index = i;

        // each shot references a non-empty subset of the declared entities
        std::vector<EntityRef> refs;
        const int n_refs = static_cast<int>(rng.range(1, std::min(3, n_chars + n_envs)));
        std::set<std::pair<int, int>> seen;
        while (static_cast<int>(refs.size()) < n_refs) {
            const bool is_char = n_envs == 0 || (n_chars > 0 && rng.below(2) == 0);
            const int limit = is_char ? n_chars : n_envs;
            const int index = static_cast<int>(rng.range(1, limit));
            if (!seen.insert({is_char ? 0 : 1, index}).second) continue;
            refs.push_back(EntityRef{is_char ? EntityKind::Character : EntityKind::Environment, index, {}});
        }
        shot.frame_description = annotated_with_refs(rng, opts, refs);

        AnnotatedText video;
        video.runs.push_back(TextRun{sentence(rng, opts.vocab_size, 3, 7)});
        if (rng.unit() < opts.dialogue_prob) {
            DialogueSpan span;
            span.category = rng.unit() < opts.sfx_prob ? SpanCategory::SoundEffect : SpanCategory::Dialogue;
            span.content = sentence(rng, opts.vocab_size, 2, 5);
            std::get<TextRun>(video.runs.back()).text += " ";
            video.runs.push_back(span);
            gen.planted_dialogue.emplace_back(i, span);
        }
        shot.video_description = video;
        s.shots.push_back(shot);
    }
    return gen;
}

namespace {

std::array<double, 3> entity_color(std::uint64_t seed, EntityKind kind, int index) {
    const std::uint64_t h = mix_seed(seed, (kind == EntityKind::Character ? 1000 : 2000) + index);
    // bright, saturated, and far from the background range
    return {0.45 + 0.55 * ((h >> 0) % 256) / 255.0, 0.45 + 0.55 * ((h >> 8) % 256) / 255.0,
            0.45 + 0.55 * ((h >> 16) % 256) / 255.0};
}

}  // namespace

Image render_keyframe(const std::vector<EntityRef>& entities, int shot_index, std::uint64_t seed, int image_size) {
    Image img(image_size, image_size);
    const std::uint64_t bg = mix_seed(seed, 3000 + shot_index);
    for (int c = 0; c < 3; ++c) {
        const double v = 0.10 + 0.15 * ((bg >> (8 * c)) % 256) / 255.0;
        for (int y = 0; y < image_size; ++y)
            for (int x = 0; x < image_size; ++x) img.at(y, x, c) = v;
    }

    // shot-index strip: one bright tick per shot along the top edge
    const int tick = std::max(1, image_size / 16);
    for (int t = 0; t < shot_index && (2 * t + 1) * tick < image_size; ++t) {
        for (int y = 0; y < tick; ++y)
            for (int x = 2 * t * tick; x < (2 * t + 1) * tick; ++x)
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.95;
    }

    std::vector<EntityRef> sorted = entities;
    std::sort(sorted.begin(), sorted.end(), [](const EntityRef& a, const EntityRef& b) {
        return std::make_pair(static_cast<int>(a.kind), a.index) < std::make_pair(static_cast<int>(b.kind), b.index);
    });
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    // each entity owns one full grid cell: characters on the second row,
    // environments on the third, slot by index; a present entity floods its
    // cell with its color so identity carries most of the image variance
    const int cell = image_size / 4;
    for (const EntityRef& ref : sorted) {
        const auto color = entity_color(seed, ref.kind, ref.index);
        const int slot = (ref.index - 1) % 4;
        const int x0 = slot * cell;
        const int y0 = ref.kind == EntityKind::Character ? cell : 2 * cell;
        for (int y = y0; y < y0 + cell; ++y)
            for (int x = x0; x < x0 + cell; ++x)
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
        // environments keep a horizontal notch so the two kinds stay
        // visually distinct even at the same slot
        if (ref.kind == EntityKind::Environment) {
            for (int x = x0; x < x0 + cell; ++x)
                for (int c = 0; c < 3; ++c) img.at(y0 + cell / 2, x, c) = 0.05;
        }
    }
    return img;
}

namespace {

std::vector<EntityRef> frame_refs(const Shot& shot) {
    std::vector<EntityRef> refs;
    for (const auto& run : shot.frame_description.runs) {
        if (const auto* ref = std::get_if<EntityRef>(&run)) refs.push_back(*ref);
    }
    return refs;
}

std::string sample_id(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%04d", prefix, i);
    return buf;
}

}  // namespace

Corpus make_synthetic_corpus(const CorpusConfig& cfg) {
    Corpus corpus;

    for (int i = 0; i < cfg.interleaved_count; ++i) {
        Rng rng(mix_seed(cfg.seed, 10000 + i));
        auto gen = generate_script(rng, cfg.gen);
        CorpusSample sample;
        sample.id = sample_id("il", i);
        sample.script = std::move(gen.script);
        for (const Shot& shot : sample.script.shots) {
            sample.keyframes.push_back(render_keyframe(frame_refs(shot), shot.index, cfg.seed, cfg.image_size));
        }
        corpus.interleaved.push_back(std::move(sample));
    }

    for (int i = 0; i < cfg.text_count; ++i) {
        Rng rng(mix_seed(cfg.seed, 20000 + i));
        auto gen = generate_script(rng, cfg.gen);
        Script s = std::move(gen.script);
        const int n = static_cast<int>(s.shots.size());
        const int split_kind = static_cast<int>(rng.below(3));
        if (split_kind == 0 && n >= 2) {
            const int k = static_cast<int>(rng.range(1, n - 1));
            std::vector<Shot> tail(s.shots.begin() + k, s.shots.end());
            s = split_for_extension(s, k, extractive_summary(tail));
        } else if (split_kind == 1 && n >= 2) {
            s = split_for_continuation(s, script::continuation_system_prompt());
        }
        CorpusSample sample;
        sample.id = sample_id("tx", i);
        sample.script = std::move(s);
        corpus.text_scripts.push_back(std::move(sample));
    }

    for (int i = 0; i < cfg.pair_count; ++i) {
        Rng rng(mix_seed(cfg.seed, 30000 + i));
        ScriptGenOptions pair_opts = cfg.gen;
        pair_opts.min_shots = pair_opts.max_shots = 1;
        pair_opts.min_characters = 1;
        pair_opts.max_characters = std::max(1, cfg.gen.max_characters);
        auto gen = generate_script(rng, pair_opts);
        CorpusSample sample;
        sample.id = sample_id("pr", i);
        sample.script = std::move(gen.script);
        sample.keyframes.push_back(
            render_keyframe(frame_refs(sample.script.shots[0]), 1, cfg.seed, cfg.image_size));
        corpus.image_pairs.push_back(std::move(sample));
    }
    return corpus;
}

namespace {

const char* subset_dir(int subset) {
    switch (subset) {
        case 0: return "interleaved";
        case 1: return "text";
        default: return "pairs";
    }
}

const std::vector<CorpusSample>& subset_of(const Corpus& c, int subset) {
    switch (subset) {
        case 0: return c.interleaved;
        case 1: return c.text_scripts;
        default: return c.image_pairs;
    }
}

std::vector<CorpusSample>& subset_of(Corpus& c, int subset) {
    switch (subset) {
        case 0: return c.interleaved;
        case 1: return c.text_scripts;
        default: return c.image_pairs;
    }
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::string& dir) {
    fs::create_directories(dir);
    std::string manifest;
    for (int subset = 0; subset < 3; ++subset) {
        fs::create_directories(fs::path(dir) / subset_dir(subset));
        for (const CorpusSample& sample : subset_of(corpus, subset)) {
            const std::string rel_script = std::string(subset_dir(subset)) + "/" + sample.id + ".script";
            write_file((fs::path(dir) / rel_script).string(), script::serialize_script(sample.script));
            manifest += std::string(subset_dir(subset)) + " " + sample.id + " " + rel_script + " " +
                        std::to_string(sample.keyframes.size());
            for (size_t k = 0; k < sample.keyframes.size(); ++k) {
                const std::string rel_frame =
                    std::string(subset_dir(subset)) + "/" + sample.id + "_shot" + std::to_string(k + 1) + ".ppm";
                write_file((fs::path(dir) / rel_frame).string(), encode_ppm(sample.keyframes[k]));
                manifest += " " + rel_frame;
            }
            manifest += "\n";
        }
    }
    write_file((fs::path(dir) / "manifest.txt").string(), manifest);
}

Corpus load_corpus(const std::string& dir) {
    Corpus corpus;
    const std::string manifest = read_file((fs::path(dir) / "manifest.txt").string());
    for (const std::string& line : split_lines(manifest)) {
        if (trim(line).empty()) continue;
        std::istringstream ss(line);
        std::string subset, id, rel_script;
        size_t n_frames = 0;
        ss >> subset >> id >> rel_script >> n_frames;
        CorpusSample sample;
        sample.id = id;
        auto parsed = script::parse_script(read_file((fs::path(dir) / rel_script).string()));
        if (!parsed.ok()) throw std::runtime_error("corpus script fails to parse: " + rel_script);
        sample.script = std::move(*parsed.script);
        for (size_t k = 0; k < n_frames; ++k) {
            std::string rel_frame;
            ss >> rel_frame;
            sample.keyframes.push_back(decode_ppm(read_file((fs::path(dir) / rel_frame).string())));
        }
        const int which = subset == "interleaved" ? 0 : subset == "text" ? 1 : 2;
        subset_of(corpus, which).push_back(std::move(sample));
    }
    return corpus;
}

}  // namespace director::data
