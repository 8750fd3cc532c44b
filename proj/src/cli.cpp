#include "director/cli.hpp"

#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "director/mask.hpp"
#include "director/train.hpp"

namespace director::cli {

namespace fs = std::filesystem;

namespace {

// line-oriented key=value files; '#' starts a comment
std::map<std::string, std::string> read_config(const std::string& path) {
    std::map<std::string, std::string> kv;
    for (const std::string& raw : split_lines(read_file(path))) {
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("config line without '=': " + line);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

int cfg_int(const std::map<std::string, std::string>& kv, const std::string& key, int fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stoi(it->second);
}

double cfg_double(const std::map<std::string, std::string>& kv, const std::string& key, double fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stod(it->second);
}

std::string cfg_str(const std::map<std::string, std::string>& kv, const std::string& key,
                    const std::string& fallback = {}) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

void print_diagnostics(const std::string& path, const std::vector<script::Diagnostic>& diags) {
    for (const auto& d : diags) std::cout << path << ":" << d.format() << "\n";
}

script::ParseResult parse_file(const std::string& path) { return script::parse_script(read_file(path)); }

model::MoTConfig model_config_from(const std::map<std::string, std::string>& kv) {
    model::MoTConfig cfg;
    cfg.layers = cfg_int(kv, "layers", cfg.layers);
    cfg.width = cfg_int(kv, "width", cfg.width);
    cfg.heads = cfg_int(kv, "heads", cfg.heads);
    cfg.ffn_mult = cfg_int(kv, "ffn_mult", cfg.ffn_mult);
    cfg.max_entities = cfg_int(kv, "max_entities", cfg.max_entities);
    cfg.max_shots = cfg_int(kv, "max_shots", cfg.max_shots);
    cfg.image_size = cfg_int(kv, "image_size", cfg.image_size);
    cfg.vit_slot_width = cfg_int(kv, "vit_slot_width", cfg.vit_slot_width);
    cfg.time_width = cfg_int(kv, "time_width", cfg.time_width);
    cfg.max_positions = cfg_int(kv, "max_positions", cfg.max_positions);
    return cfg;
}

train::TrainConfig train_config_from(const std::map<std::string, std::string>& kv, std::uint64_t seed) {
    train::TrainConfig cfg;
    cfg.learning_rate = cfg_double(kv, "learning_rate", cfg.learning_rate);
    cfg.stage1_steps = cfg_int(kv, "stage1_steps", cfg.stage1_steps);
    cfg.stage2_steps = cfg_int(kv, "stage2_steps", cfg.stage2_steps);
    cfg.batch_size = cfg_int(kv, "batch_size", cfg.batch_size);
    cfg.lambda_rf = cfg_double(kv, "lambda_rf", cfg.lambda_rf);
    cfg.mix_text = cfg_int(kv, "mix_text", cfg.mix_text);
    cfg.mix_interleaved = cfg_int(kv, "mix_interleaved", cfg.mix_interleaved);
    cfg.mix_pairs = cfg_int(kv, "mix_pairs", cfg.mix_pairs);
    cfg.use_id_prompts = cfg_int(kv, "use_id_prompts", 1) != 0;
    cfg.seed = seed;
    return cfg;
}

int cmd_validate(const std::string& path) {
    auto result = parse_file(path);
    if (result.ok()) return 0;
    print_diagnostics(path, result.diagnostics);
    return 1;
}

int cmd_canonicalize(const std::string& path) {
    auto result = parse_file(path);
    if (!result.ok()) {
        print_diagnostics(path, result.diagnostics);
        return 1;
    }
    std::cout << script::serialize_script(*result.script);
    return 0;
}

int cmd_split(const std::string& path, const std::string& mode, int at) {
    auto result = parse_file(path);
    if (!result.ok()) {
        print_diagnostics(path, result.diagnostics);
        return 1;
    }
    script::Script split;
    if (mode == "ext") {
        const auto& shots = result.script->shots;
        if (at < 1 || at >= static_cast<int>(shots.size())) {
            std::cerr << "split: --at must be in [1, shots-1]\n";
            return 1;
        }
        std::vector<script::Shot> tail(shots.begin() + at, shots.end());
        split = data::split_for_extension(*result.script, at, data::extractive_summary(tail));
    } else {
        if (result.script->shots.size() < 2) {
            std::cerr << "split: continuation needs at least 2 shots\n";
            return 1;
        }
        split = data::split_for_continuation(*result.script, script::continuation_system_prompt());
    }
    std::cout << script::serialize_script(split);
    return 0;
}

int cmd_mask(const std::string& path, int gen_shot, bool no_id_prompts) {
    auto result = parse_file(path);
    if (!result.ok()) {
        print_diagnostics(path, result.diagnostics);
        return 1;
    }
    const auto& s = *result.script;
    seq::LayoutConfig lc;
    lc.use_id_prompts = !no_id_prompts;
    auto v = seq::make_vocabulary(8, std::max(8, static_cast<int>(s.shots.size())));
    std::vector<seq::Keyframe> frames;
    for (const auto& shot : s.shots) {
        seq::Keyframe f;
        f.shot = shot.index;
        f.pixels = Image(lc.image_size, lc.image_size);
        frames.push_back(std::move(f));
    }
    auto layout = seq::layout_interleaved(s, frames, v, gen_shot, lc);
    auto mask = attn::compile_mask(layout);
    std::cout << seq::dump_layout(layout) << "\n" << attn::render_mask(mask);
    return 0;
}

int cmd_corpus_gen(const std::string& config_path) {
    const auto kv = read_config(config_path);
    data::CorpusConfig cfg;
    cfg.interleaved_count = cfg_int(kv, "interleaved", 0);
    cfg.text_count = cfg_int(kv, "text", 0);
    cfg.pair_count = cfg_int(kv, "pairs", 0);
    cfg.image_size = cfg_int(kv, "image_size", 64);
    cfg.seed = static_cast<std::uint64_t>(cfg_int(kv, "seed", 0));
    cfg.gen.min_shots = cfg_int(kv, "min_shots", cfg.gen.min_shots);
    cfg.gen.max_shots = cfg_int(kv, "max_shots", cfg.gen.max_shots);
    cfg.gen.min_characters = cfg_int(kv, "min_characters", cfg.gen.min_characters);
    cfg.gen.max_characters = cfg_int(kv, "max_characters", cfg.gen.max_characters);
    cfg.gen.min_environments = cfg_int(kv, "min_environments", cfg.gen.min_environments);
    cfg.gen.max_environments = cfg_int(kv, "max_environments", cfg.gen.max_environments);
    cfg.gen.vocab_size = cfg_int(kv, "vocab_size", cfg.gen.vocab_size);
    const std::string out_dir = cfg_str(kv, "out_dir");
    if (out_dir.empty()) {
        std::cerr << "corpus config needs out_dir=\n";
        return 2;
    }
    data::write_corpus(data::make_synthetic_corpus(cfg), out_dir);
    std::cout << "wrote corpus to " << out_dir << "\n";
    return 0;
}

int cmd_train(int stage, const std::string& config_path, std::uint64_t seed) {
    const auto kv = read_config(config_path);
    const std::string corpus_dir = cfg_str(kv, "corpus_dir");
    const std::string out_ckpt = cfg_str(kv, "out_checkpoint", "model.ckpt");
    if (corpus_dir.empty()) {
        std::cerr << "train config needs corpus_dir=\n";
        return 2;
    }
    auto corpus = data::load_corpus(corpus_dir);
    auto tcfg = train_config_from(kv, seed);

    model::ModelParams params = cfg_str(kv, "init_checkpoint").empty()
                                    ? model::init_model(model_config_from(kv), seed)
                                    : model::load_checkpoint(cfg_str(kv, "init_checkpoint"));
    train::TrainResult result = stage == 1 ? train::train_stage1(std::move(params), corpus, tcfg)
                                           : train::train_stage2(std::move(params), corpus, tcfg);
    model::save_checkpoint(result.params, out_ckpt);
    const std::string trace_path = cfg_str(kv, "trace_file");
    if (!trace_path.empty()) write_file(trace_path, train::format_loss_trace(result.trace));
    if (!result.trace.empty()) {
        const auto& last = result.trace.back();
        std::cout << "final step " << last.step << " ntp=" << last.ntp << " rf=" << last.rf << "\n";
    }
    std::cout << "wrote checkpoint to " << out_ckpt << "\n";
    return 0;
}

int cmd_sample(const std::string& ckpt, const std::string& prompt_file, const std::string& out_dir, int style,
               int ode_steps, int max_new, std::uint64_t seed) {
    auto params = model::load_checkpoint(ckpt);
    const std::string prompt = trim(read_file(prompt_file));
    train::InferOptions opts;
    opts.prompt_style = style;
    opts.ode_steps = ode_steps;
    opts.max_new_tokens = max_new;
    opts.seed = seed;
    try {
        auto result = train::infer_script_pipeline(params, prompt, std::nullopt, train::InferMode::Draft, opts);
        std::cout << result.generated_text;
        if (!out_dir.empty()) {
            fs::create_directories(out_dir);
            write_file((fs::path(out_dir) / "generated.script").string(), result.generated_text);
            for (const auto& frame : result.keyframes) {
                write_file((fs::path(out_dir) / ("shot" + std::to_string(frame.shot) + ".ppm")).string(),
                           encode_ppm(frame.pixels));
            }
        }
        return 0;
    } catch (const train::MalformedGeneration& e) {
        std::cerr << "generation failed: " << e.what() << "\n";
        for (const auto& d : e.diagnostics) std::cerr << "<generated>:" << d.format() << "\n";
        return 1;
    }
}

int cmd_gradcheck(std::uint64_t seed) {
    // tiny but complete model: both experts, masked attention, QK-Norm,
    // connector and patch embedding all under the finite-difference probe
    model::MoTConfig cfg;
    cfg.layers = 2;
    cfg.width = 16;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.image_size = 16;
    cfg.vit_patch = 8;
    cfg.vit_slot_width = 8;
    cfg.time_width = 8;
    cfg.max_entities = 2;
    cfg.max_shots = 2;
    cfg.max_positions = 256;
    auto params = model::init_model(cfg, seed);

    auto v = seq::make_vocabulary(cfg.max_entities, cfg.max_shots);
    data::ScriptGenOptions gen_opts;
    gen_opts.min_shots = gen_opts.max_shots = 2;
    gen_opts.max_characters = 2;
    gen_opts.max_environments = 1;
    gen_opts.vocab_size = 16;
    Rng gen_rng(mix_seed(seed, 5));
    auto sample = data::generate_script(gen_rng, gen_opts);
    data::CorpusSample cs;
    cs.script = sample.script;
    for (const auto& shot : cs.script.shots) {
        cs.keyframes.push_back(data::render_keyframe(seq::shot_id_entities(shot), shot.index, seed, cfg.image_size));
    }
    Rng noise(mix_seed(seed, 6));
    auto batch = train::build_interleaved_batch(cs, cfg, v, 2, noise);

    auto f = [&](nn::Tape& tape, nn::ParamBinder& binder) {
        auto out = model::forward(tape, binder, params, batch.inputs());
        auto ntp = train::ntp_loss(out.text_logits, batch.text_targets);
        auto rf = train::rf_loss(out.velocity, batch.velocity_target);
        return nn::add(ntp, rf);
    };
    Rng rng(mix_seed(seed, 7));
    auto report = nn::grad_check(f, 1e-4, 1e-5, rng, 6);
    std::cout << report.format();
    return report.pass ? 0 : 1;
}

int cmd_demo_rf(int steps, std::uint64_t seed) {
    train::Rf2dConfig cfg;
    cfg.seed = seed;
    if (steps > 0) cfg.steps = steps;
    auto m = train::train_rf2d(cfg);
    Rng rng(mix_seed(seed, 21));
    auto samples = train::sample_rf2d(m, 2000, 64, rng);
    Rng ring_rng(mix_seed(seed, 22));
    auto target = train::sample_ring(2000, ring_rng, cfg.ring_radius, cfg.ring_std);
    const double ed = train::energy_distance(samples, target);

    Rng pair_rng(mix_seed(seed, 23));
    auto coarse = train::sample_rf2d(m, 512, 8, pair_rng);
    Rng pair_rng2(mix_seed(seed, 23));
    auto fine = train::sample_rf2d(m, 512, 64, pair_rng2);
    double diff = 0.0, norm = 0.0;
    for (size_t i = 0; i < coarse.size(); ++i) {
        diff += std::hypot(coarse[i][0] - fine[i][0], coarse[i][1] - fine[i][1]);
        norm += std::hypot(fine[i][0], fine[i][1]);
    }
    std::cout << "energy_distance=" << ed << "\n";
    std::cout << "few_step_gap=" << diff / norm << "\n";
    return ed < 0.05 ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"multimodal script and keyframe model toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // --seed may appear after the subcommand
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "global random seed");

    std::string script_path, mode = "ext", config_path, ckpt_path, prompt_file, out_dir;
    int at = 1, gen_shot = 1, stage = 1, style = 1, ode_steps = 16, max_new = 1024, demo_steps = 0;
    bool no_id_prompts = false;

    auto* validate = app.add_subcommand("validate", "parse a script and report diagnostics");
    validate->add_option("script", script_path)->required();

    auto* canonicalize = app.add_subcommand("canonicalize", "print the canonical form of a script");
    canonicalize->add_option("script", script_path)->required();

    auto* split = app.add_subcommand("split", "insert an extension or continuation marker");
    split->add_option("--mode", mode, "ext|cont")->required()->check(CLI::IsMember({"ext", "cont"}));
    split->add_option("--at", at, "shot index for ext mode");
    split->add_option("script", script_path)->required();

    auto* mask = app.add_subcommand("mask", "emit the layout dump and P1 attention mask");
    mask->add_option("script", script_path)->required();
    mask->add_option("--gen-shot", gen_shot)->required();
    mask->add_flag("--no-id-prompts", no_id_prompts, "drop ID prompt splits");

    auto* corpus = app.add_subcommand("corpus", "corpus utilities");
    auto* corpus_gen = corpus->add_subcommand("gen", "generate a synthetic corpus");
    corpus_gen->add_option("config", config_path)->required();

    auto* tr = app.add_subcommand("train", "run a training stage");
    tr->add_option("--stage", stage)->required()->check(CLI::IsMember({1, 2}));
    tr->add_option("config", config_path)->required();

    auto* sample = app.add_subcommand("sample", "draft a script and keyframes from a prompt");
    sample->add_option("checkpoint", ckpt_path)->required();
    sample->add_option("--prompt-file", prompt_file)->required();
    sample->add_option("--out", out_dir);
    sample->add_option("--style", style);
    sample->add_option("--ode-steps", ode_steps);
    sample->add_option("--max-new", max_new);

    app.add_subcommand("gradcheck", "finite-difference check of the full model");

    auto* demo = app.add_subcommand("demo-rf", "2D rectified-flow sanity run");
    demo->add_option("--steps", demo_steps);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (validate->parsed()) return cmd_validate(script_path);
        if (canonicalize->parsed()) return cmd_canonicalize(script_path);
        if (split->parsed()) return cmd_split(script_path, mode, at);
        if (mask->parsed()) return cmd_mask(script_path, gen_shot, no_id_prompts);
        if (corpus->parsed() && corpus_gen->parsed()) return cmd_corpus_gen(config_path);
        if (tr->parsed()) return cmd_train(stage, config_path, seed);
        if (sample->parsed()) return cmd_sample(ckpt_path, prompt_file, out_dir, style, ode_steps, max_new, seed);
        if (app.get_subcommand("gradcheck")->parsed()) return cmd_gradcheck(seed);
        if (demo->parsed()) return cmd_demo_rf(demo_steps, seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << app.help();
    return 2;
}

}  // namespace director::cli
