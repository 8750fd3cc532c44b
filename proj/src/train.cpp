#include "director/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "director/mask.hpp"

namespace director::train {

using model::ModelParams;
using model::MoTConfig;
using model::TokenInputs;
using nn::Value;
using seq::Role;
using seq::SequenceLayout;

// --- rectified flow examples -------------------------------------------------

RFExample make_rf_example(const std::vector<double>& x1, Rng& rng) {
    RFExample ex;
    ex.x1 = x1;
    ex.x0.resize(x1.size());
    for (double& v : ex.x0) v = rng.normal();
    ex.t = rng.unit();
    ex.xt.resize(x1.size());
    ex.target.resize(x1.size());
    for (size_t i = 0; i < x1.size(); ++i) {
        ex.xt[i] = (1.0 - ex.t) * ex.x0[i] + ex.t * ex.x1[i];
        ex.target[i] = ex.x1[i] - ex.x0[i];
    }
    return ex;
}

// --- losses -------------------------------------------------------------------

nn::Value ntp_loss(nn::Value logits, const std::vector<int>& targets) {
    bool any = false;
    for (int t : targets) any = any || t >= 0;
    if (!any) throw EmptyTargets("no text-loss positions in this batch");
    return nn::nll_of_logits(logits, targets);
}

nn::Value rf_loss(nn::Value velocity, const std::vector<double>& target) {
    if (target.empty()) throw MissingVelocityTargets("no velocity targets in this batch");
    return nn::mse_to_const(velocity, target);
}

std::vector<int> text_targets_for(const SequenceLayout& layout) {
    std::vector<int> targets(layout.total, -1);
    for (int p = 1; p < layout.total; ++p) {
        if (layout.roles[p] == Role::TEXT) targets[p - 1] = layout.token_ids[p];
    }
    return targets;
}

// --- batches ------------------------------------------------------------------

model::TokenInputs TrainBatch::inputs() const {
    TokenInputs in;
    in.layout = &layout;
    in.mask = mask;
    in.vit_rows = vit_rows;
    in.vae_rows = vae_rows;
    in.gen_time = t;
    in.has_gen_time = has_rf;
    return in;
}

TrainBatch build_interleaved_batch(const data::CorpusSample& sample, const MoTConfig& cfg, const seq::Vocabulary& v,
                                   int gen_shot, Rng& rng, bool use_id_prompts) {
    seq::LayoutConfig lc = cfg.layout_config();
    lc.use_id_prompts = use_id_prompts;
    lc.include_gen_vit = false;  // the generated image is never its own context

    std::vector<seq::Keyframe> frames;
    for (size_t i = 0; i < sample.keyframes.size(); ++i) {
        seq::Keyframe f;
        f.shot = static_cast<int>(i) + 1;
        f.pixels = sample.keyframes[i];
        frames.push_back(std::move(f));
    }

    TrainBatch batch;
    batch.layout = seq::layout_interleaved(sample.script, frames, v, gen_shot, lc);
    batch.mask = std::make_shared<attn::AttentionMask>(attn::compile_mask(batch.layout));
    batch.text_targets = text_targets_for(batch.layout);

    for (size_t si = 0; si < batch.layout.splits.size(); ++si) {
        const seq::Split& split = batch.layout.splits[si];
        if (split.role == Role::VIT) {
            batch.vit_rows[static_cast<int>(si)] = model::vit_stub_encode(sample.keyframes[split.shot - 1], cfg);
        } else if (split.role == Role::VAE_COND) {
            batch.vae_rows[static_cast<int>(si)] =
                model::patchify_latent(model::vae_stub_encode(sample.keyframes[split.shot - 1], cfg), cfg.patch_size);
        } else if (split.role == Role::VAE_GEN) {
            const auto x1 =
                model::patchify_latent(model::vae_stub_encode(sample.keyframes[split.shot - 1], cfg), cfg.patch_size);
            RFExample ex = make_rf_example(x1, rng);
            batch.vae_rows[static_cast<int>(si)] = ex.xt;
            batch.velocity_target = ex.target;
            batch.t = ex.t;
            batch.has_rf = true;
        }
    }
    return batch;
}

TrainBatch build_text_batch(const script::Script& s, const seq::Vocabulary& v) {
    TrainBatch batch;
    batch.layout = seq::layout_text_only(s, v);
    batch.mask = std::make_shared<attn::AttentionMask>(attn::compile_mask(batch.layout));
    batch.text_targets = text_targets_for(batch.layout);
    return batch;
}

// --- optimizer ------------------------------------------------------------------

void adam_update(std::vector<double>& value, const std::vector<double>& grad, AdamSlot& slot, double lr, double beta1,
                 double beta2, double eps) {
    if (slot.m.empty()) {
        slot.m.assign(value.size(), 0.0);
        slot.v.assign(value.size(), 0.0);
    }
    ++slot.t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(slot.t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(slot.t));
    for (size_t i = 0; i < value.size(); ++i) {
        slot.m[i] = beta1 * slot.m[i] + (1.0 - beta1) * grad[i];
        slot.v[i] = beta2 * slot.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        value[i] -= lr * (slot.m[i] / c1) / (std::sqrt(slot.v[i] / c2) + eps);
    }
}

GradRoute route_all(const ModelParams& params) {
    GradRoute route;
    for (const auto& p : params.params) route.update.insert(p.name);
    return route;
}

GradRoute route_stage2_text(const ModelParams& params) {
    GradRoute route;
    for (const auto& name : params.names_in_subset(model::Subset::Understanding)) route.update.insert(name);
    route.update.insert("tok_embed");
    route.update.insert("pos_embed");
    route.update.insert("text_head.w");
    route.update.insert("text_head.b");
    return route;
}

GradRoute route_stage2_generation(const ModelParams& params) {
    GradRoute route;
    for (const auto& name : params.names_in_subset(model::Subset::Generation)) route.update.insert(name);
    route.update.insert("vel_head.w");
    route.update.insert("vel_head.b");
    route.detach_understanding = true;
    return route;
}

void adam_step(ModelParams& params, const std::unordered_map<std::string, std::vector<double>>& grads,
               const TrainConfig& cfg, AdamState& state, const GradRoute& route) {
    for (const std::string& name : route.update) {
        auto it = grads.find(name);
        if (it == grads.end()) continue;
        adam_update(params.at(name).value, it->second, state.slots[name], cfg.learning_rate, cfg.adam_beta1,
                    cfg.adam_beta2, cfg.adam_eps);
    }
}

// --- training loops -----------------------------------------------------------

namespace {

std::unordered_map<std::string, std::vector<double>> collect_grads(const nn::ParamBinder& binder) {
    std::unordered_map<std::string, std::vector<double>> grads;
    for (const auto& entry : binder.entries()) {
        auto [it, fresh] = grads.try_emplace(entry.name, entry.node->grad);
        if (!fresh) {
            for (size_t i = 0; i < it->second.size(); ++i) it->second[i] += entry.node->grad[i];
        }
    }
    return grads;
}

struct StepLoss {
    double ntp = 0.0;
    double rf = 0.0;
};

}  // namespace

std::string format_loss_trace(const std::vector<LossTraceRow>& trace) {
    std::ostringstream ss;
    for (const auto& row : trace) {
        ss << row.step << "," << row.ntp << "," << row.rf << "," << row.subset << "\n";
    }
    return ss.str();
}

TrainResult train_stage1(ModelParams params, const data::Corpus& corpus, const TrainConfig& cfg) {
    if (corpus.interleaved.empty()) throw std::invalid_argument("stage 1 needs interleaved samples");
    const auto v = seq::make_vocabulary(params.cfg.max_entities, params.cfg.max_shots);
    AdamState state;
    std::vector<LossTraceRow> trace;
    Rng pick_rng(mix_seed(cfg.seed, 101));
    Rng noise_rng(mix_seed(cfg.seed, 102));

    for (int step = 0; step < cfg.stage1_steps; ++step) {
        nn::Tape tape;
        nn::ParamBinder binder(tape);
        StepLoss acc;
        Value total = tape.scalar(0.0);
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& sample = corpus.interleaved[pick_rng.below(corpus.interleaved.size())];
            const int n = static_cast<int>(sample.script.shots.size());
            const int gen_shot = 1 + static_cast<int>(pick_rng.below(static_cast<std::uint64_t>(n)));
            TrainBatch batch = build_interleaved_batch(sample, params.cfg, v, gen_shot, noise_rng, cfg.use_id_prompts);
            auto out = model::forward(tape, binder, params, batch.inputs());
            Value ntp = ntp_loss(out.text_logits, batch.text_targets);
            Value rf = rf_loss(out.velocity, batch.velocity_target);
            acc.ntp += ntp.scalar();
            acc.rf += rf.scalar();
            total = nn::add(total, nn::add(ntp, nn::scale(rf, cfg.lambda_rf)));
        }
        total = nn::scale(total, 1.0 / cfg.batch_size);
        tape.backward(total);
        adam_step(params, collect_grads(binder), cfg, state, route_all(params));
        trace.push_back(LossTraceRow{step, acc.ntp / cfg.batch_size, acc.rf / cfg.batch_size, "interleaved"});
    }
    return TrainResult{std::move(params), std::move(trace)};
}

TrainResult train_stage2(ModelParams params, const data::Corpus& corpus, const TrainConfig& cfg) {
    // round-robin schedule over the three subsets by the configured ratios
    std::vector<int> pattern;
    for (int i = 0; i < cfg.mix_text; ++i) pattern.push_back(0);
    for (int i = 0; i < cfg.mix_interleaved; ++i) pattern.push_back(1);
    for (int i = 0; i < cfg.mix_pairs; ++i) pattern.push_back(2);
    if (pattern.empty()) throw std::invalid_argument("stage 2 has no subsets enabled");
    if ((cfg.mix_text > 0 && corpus.text_scripts.empty()) || (cfg.mix_interleaved > 0 && corpus.interleaved.empty()) ||
        (cfg.mix_pairs > 0 && corpus.image_pairs.empty())) {
        throw std::invalid_argument("a stage-2 subset with nonzero mix ratio is empty");
    }

    const auto v = seq::make_vocabulary(params.cfg.max_entities, params.cfg.max_shots);
    AdamState state;
    std::vector<LossTraceRow> trace;
    Rng pick_rng(mix_seed(cfg.seed, 201));
    Rng noise_rng(mix_seed(cfg.seed, 202));
    const GradRoute text_route = route_stage2_text(params);
    const GradRoute gen_route = route_stage2_generation(params);

    for (int step = 0; step < cfg.stage2_steps; ++step) {
        const int kind = pattern[step % pattern.size()];
        nn::Tape tape;
        nn::ParamBinder binder(tape);
        if (kind == 0) {
            const auto& sample = corpus.text_scripts[pick_rng.below(corpus.text_scripts.size())];
            TrainBatch batch = build_text_batch(sample.script, v);
            auto out = model::forward(tape, binder, params, batch.inputs());
            Value loss = ntp_loss(out.text_logits, batch.text_targets);
            tape.backward(loss);
            adam_step(params, collect_grads(binder), cfg, state, text_route);
            trace.push_back(LossTraceRow{step, loss.scalar(), 0.0, "text"});
        } else {
            const auto& pool = kind == 1 ? corpus.interleaved : corpus.image_pairs;
            const auto& sample = pool[pick_rng.below(pool.size())];
            const int n = static_cast<int>(sample.script.shots.size());
            const int gen_shot = 1 + static_cast<int>(pick_rng.below(static_cast<std::uint64_t>(n)));
            TrainBatch batch = build_interleaved_batch(sample, params.cfg, v, gen_shot, noise_rng, cfg.use_id_prompts);
            model::ForwardOptions opts;
            opts.detach_understanding = true;
            auto out = model::forward(tape, binder, params, batch.inputs(), opts);
            Value loss = rf_loss(out.velocity, batch.velocity_target);
            tape.backward(loss);
            adam_step(params, collect_grads(binder), cfg, state, gen_route);
            trace.push_back(LossTraceRow{step, 0.0, loss.scalar(), kind == 1 ? "interleaved" : "pairs"});
        }
    }
    return TrainResult{std::move(params), std::move(trace)};
}

// --- sampling and inference -----------------------------------------------------

std::vector<double> euler_integrate(
    const std::function<std::vector<double>(const std::vector<double>&, double)>& velocity, std::vector<double> x0,
    int steps) {
    if (steps < 1) throw std::invalid_argument("euler_integrate needs at least one step");
    std::vector<double> x = std::move(x0);
    const double dt = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        const auto vel = velocity(x, t);
        for (size_t i = 0; i < x.size(); ++i) x[i] += dt * vel[i];
    }
    return x;
}

Latent sample_ode(ModelParams& params, const script::Script& s, const std::vector<seq::Keyframe>& prior, int gen_shot,
                  const seq::Vocabulary& v, int steps, Rng& rng, bool use_id_prompts) {
    const MoTConfig& cfg = params.cfg;
    seq::LayoutConfig lc = cfg.layout_config();
    lc.use_id_prompts = use_id_prompts;
    lc.include_gen_vit = false;

    auto layout = seq::layout_interleaved(s, prior, v, gen_shot, lc);
    auto mask = std::make_shared<attn::AttentionMask>(attn::compile_mask(layout));

    // fixed conditioning rows; only the generation block changes per step
    std::map<int, std::vector<double>> vit_rows, vae_rows;
    int gen_split = -1;
    for (size_t si = 0; si < layout.splits.size(); ++si) {
        const seq::Split& split = layout.splits[si];
        if (split.role == Role::VIT) {
            vit_rows[static_cast<int>(si)] = model::vit_stub_encode(prior[split.shot - 1].pixels, cfg);
        } else if (split.role == Role::VAE_COND) {
            vae_rows[static_cast<int>(si)] =
                model::patchify_latent(model::vae_stub_encode(prior[split.shot - 1].pixels, cfg), cfg.patch_size);
        } else if (split.role == Role::VAE_GEN) {
            gen_split = static_cast<int>(si);
        }
    }
    if (gen_split < 0) throw MissingVelocityTargets("layout has no generation block");

    const size_t latent_dim = static_cast<size_t>(lc.vae_tokens()) * cfg.patch_dim();
    std::vector<double> x0(latent_dim);
    for (double& x : x0) x = rng.normal();

    auto field = [&](const std::vector<double>& x, double t) {
        nn::Tape tape;
        nn::ParamBinder binder(tape);
        TokenInputs inputs;
        inputs.layout = &layout;
        inputs.mask = mask;
        inputs.vit_rows = vit_rows;
        inputs.vae_rows = vae_rows;
        inputs.vae_rows[gen_split] = x;
        inputs.gen_time = t;
        inputs.has_gen_time = true;
        auto out = model::forward(tape, binder, params, inputs);
        return out.velocity.data();
    };
    const auto endpoint = euler_integrate(field, std::move(x0), steps);
    return model::unpatchify_latent(endpoint, cfg);
}

std::vector<int> greedy_decode(ModelParams& params, const seq::Vocabulary& v, std::vector<int> prefix,
                               int max_new_tokens) {
    std::vector<int> ids = std::move(prefix);
    for (int produced = 0; produced < max_new_tokens; ++produced) {
        if (static_cast<int>(ids.size()) >= params.cfg.max_positions) break;
        auto layout = seq::layout_from_token_ids(ids);
        auto mask = std::make_shared<attn::AttentionMask>(attn::compile_mask(layout));
        nn::Tape tape;
        nn::ParamBinder binder(tape);
        TokenInputs inputs;
        inputs.layout = &layout;
        inputs.mask = mask;
        auto out = model::forward(tape, binder, params, inputs);
        const int n = layout.total;
        const int V = params.cfg.vocab_size();
        const double* row = out.text_logits.data().data() + static_cast<size_t>(n - 1) * V;
        int best = 0;
        for (int j = 1; j < V; ++j)
            if (row[j] > row[best]) best = j;
        ids.push_back(best);
        if (best == v.eos_id) break;
    }
    return ids;
}

InferenceResult infer_script_pipeline(ModelParams& params, const std::string& prompt,
                                      const std::optional<script::Script>& base, InferMode mode,
                                      const InferOptions& opts) {
    const auto v = seq::make_vocabulary(params.cfg.max_entities, params.cfg.max_shots);

    std::string prefix_text;
    if (mode == InferMode::Draft) {
        script::Script pure;
        pure.user_prompt = prompt;
        pure.prompt_style = opts.prompt_style;
        prefix_text = script::serialize_script(pure);
    } else {
        if (!base) throw std::invalid_argument("extension/continuation requires a base script");
        prefix_text = script::serialize_script(*base);
        if (mode == InferMode::Extension) {
            prefix_text += "\n<Extension>\n" + prompt + "\n";
        } else {
            prefix_text += "\n<Continuation>\n" + script::continuation_system_prompt() + "\n";
        }
    }

    std::vector<int> prefix_ids = {v.bos_id};
    const auto tok = seq::tokenize_text(prefix_text, v);
    prefix_ids.insert(prefix_ids.end(), tok.ids.begin(), tok.ids.end());

    const auto ids = greedy_decode(params, v, prefix_ids, opts.max_new_tokens);
    const std::string text = seq::detokenize(ids, v);

    auto parsed = script::parse_script(text);
    if (!parsed.ok()) {
        throw MalformedGeneration("decoded text fails to parse as a script", parsed.diagnostics);
    }
    InferenceResult result;
    result.generated_text = text;
    result.script = std::move(*parsed.script);

    if (mode != InferMode::Draft) {
        const int base_shots = static_cast<int>(base->shots.size());
        const int got_shots = static_cast<int>(result.script.shots.size());
        if (got_shots <= base_shots) {
            throw MalformedGeneration("generation added no new shot", {});
        }
    }

    Rng noise_rng(mix_seed(opts.seed, 301));
    for (const auto& shot : result.script.shots) {
        Latent latent = sample_ode(params, result.script, result.keyframes, shot.index, v, opts.ode_steps, noise_rng,
                                   opts.use_id_prompts);
        seq::Keyframe frame;
        frame.shot = shot.index;
        frame.pixels = model::vae_stub_decode(latent, params.cfg);
        frame.vae_latents = std::move(latent);
        result.keyframes.push_back(std::move(frame));
    }
    return result;
}

// --- 2D rectified-flow study ---------------------------------------------------

std::vector<std::array<double, 2>> sample_ring(int count, Rng& rng, double radius, double std) {
    std::vector<std::array<double, 2>> out(count);
    for (auto& p : out) {
        const int mode = static_cast<int>(rng.below(8));
        const double ang = 2.0 * M_PI * mode / 8.0;
        p[0] = radius * std::cos(ang) + std * rng.normal();
        p[1] = radius * std::sin(ang) + std * rng.normal();
    }
    return out;
}

namespace {

// rows: [batch, 2 + time_width] -> [batch, 2]
Value rf2d_forward(const Rf2dConfig& cfg, const std::function<Value(const std::string&, std::vector<int>)>& bind,
                   Value rows) {
    Value h1 = nn::gelu(nn::add_rowvec(nn::matmul(rows, bind("w1", {2 + cfg.time_width, cfg.hidden})),
                                       bind("b1", {cfg.hidden})));
    Value h2 =
        nn::gelu(nn::add_rowvec(nn::matmul(h1, bind("w2", {cfg.hidden, cfg.hidden})), bind("b2", {cfg.hidden})));
    return nn::add_rowvec(nn::matmul(h2, bind("w3", {cfg.hidden, 2})), bind("b3", {2}));
}

std::vector<double> rf2d_input_rows(const Rf2dConfig& cfg, const std::vector<std::array<double, 2>>& x,
                                    const std::vector<double>& t) {
    const int dim = 2 + cfg.time_width;
    std::vector<double> rows(x.size() * dim);
    for (size_t i = 0; i < x.size(); ++i) {
        rows[i * dim] = x[i][0];
        rows[i * dim + 1] = x[i][1];
        const auto tf = model::time_features(t[i], cfg.time_width);
        std::copy(tf.begin(), tf.end(), rows.begin() + i * dim + 2);
    }
    return rows;
}

}  // namespace

Rf2dModel train_rf2d(const Rf2dConfig& cfg) {
    Rf2dModel m;
    m.cfg = cfg;
    Rng init(mix_seed(cfg.seed, 11));
    auto init_tensor = [&init](size_t n, double std) {
        std::vector<double> v(n);
        for (double& x : v) x = init.normal() * std;
        return v;
    };
    const int in_dim = 2 + cfg.time_width;
    m.params["w1"] = init_tensor(static_cast<size_t>(in_dim) * cfg.hidden, 1.0 / std::sqrt(in_dim));
    m.params["b1"] = std::vector<double>(cfg.hidden, 0.0);
    m.params["w2"] = init_tensor(static_cast<size_t>(cfg.hidden) * cfg.hidden, 1.0 / std::sqrt(cfg.hidden));
    m.params["b2"] = std::vector<double>(cfg.hidden, 0.0);
    m.params["w3"] = init_tensor(static_cast<size_t>(cfg.hidden) * 2, 1.0 / std::sqrt(cfg.hidden));
    m.params["b3"] = std::vector<double>(2, 0.0);

    AdamState state;
    Rng data_rng(mix_seed(cfg.seed, 12));
    for (int step = 0; step < cfg.steps; ++step) {
        auto x1 = sample_ring(cfg.batch, data_rng, cfg.ring_radius, cfg.ring_std);
        std::vector<std::array<double, 2>> xt(cfg.batch);
        std::vector<double> t(cfg.batch);
        std::vector<double> target(static_cast<size_t>(cfg.batch) * 2);
        for (int i = 0; i < cfg.batch; ++i) {
            const double x0x = data_rng.normal(), x0y = data_rng.normal();
            t[i] = data_rng.unit();
            xt[i][0] = (1.0 - t[i]) * x0x + t[i] * x1[i][0];
            xt[i][1] = (1.0 - t[i]) * x0y + t[i] * x1[i][1];
            target[static_cast<size_t>(i) * 2] = x1[i][0] - x0x;
            target[static_cast<size_t>(i) * 2 + 1] = x1[i][1] - x0y;
        }
        nn::Tape tape;
        nn::ParamBinder binder(tape);
        auto bind = [&](const std::string& name, std::vector<int> shape) {
            return binder.bind(name, std::move(shape), &m.params.at(name));
        };
        Value rows = tape.constant({cfg.batch, 2 + cfg.time_width}, rf2d_input_rows(cfg, xt, t));
        Value loss = nn::mse_to_const(rf2d_forward(cfg, bind, rows), target);
        tape.backward(loss);
        for (const auto& entry : binder.entries()) {
            adam_update(*entry.storage, entry.node->grad, state.slots[entry.name], cfg.learning_rate, 0.9, 0.999,
                        1e-8);
        }
    }
    return m;
}

std::vector<std::array<double, 2>> sample_rf2d(const Rf2dModel& m, int count, int euler_steps, Rng& rng) {
    const Rf2dConfig& cfg = m.cfg;
    std::vector<std::array<double, 2>> x(count);
    for (auto& p : x) {
        p[0] = rng.normal();
        p[1] = rng.normal();
    }
    const double dt = 1.0 / euler_steps;
    for (int k = 0; k < euler_steps; ++k) {
        const double t = static_cast<double>(k) / euler_steps;
        nn::Tape tape;
        auto bind = [&](const std::string& name, std::vector<int> shape) {
            return tape.constant(std::move(shape), m.params.at(name));
        };
        std::vector<double> tvec(count, t);
        Value rows = tape.constant({count, 2 + cfg.time_width}, rf2d_input_rows(cfg, x, tvec));
        Value vel = rf2d_forward(cfg, bind, rows);
        for (int i = 0; i < count; ++i) {
            x[i][0] += dt * vel.data()[static_cast<size_t>(i) * 2];
            x[i][1] += dt * vel.data()[static_cast<size_t>(i) * 2 + 1];
        }
    }
    return x;
}

double energy_distance(const std::vector<std::array<double, 2>>& a, const std::vector<std::array<double, 2>>& b) {
    auto dist = [](const std::array<double, 2>& p, const std::array<double, 2>& q) {
        const double dx = p[0] - q[0], dy = p[1] - q[1];
        return std::sqrt(dx * dx + dy * dy);
    };
    double cross = 0.0, within_a = 0.0, within_b = 0.0;
    for (const auto& p : a)
        for (const auto& q : b) cross += dist(p, q);
    cross /= static_cast<double>(a.size()) * b.size();
    for (const auto& p : a)
        for (const auto& q : a) within_a += dist(p, q);
    within_a /= static_cast<double>(a.size()) * a.size();
    for (const auto& p : b)
        for (const auto& q : b) within_b += dist(p, q);
    within_b /= static_cast<double>(b.size()) * b.size();
    return 2.0 * cross - within_a - within_b;
}

}  // namespace director::train
