#pragma once

#include <array>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "director/model.hpp"
#include "director/pipeline.hpp"

namespace director::train {

class EmptyTargets : public std::runtime_error {
public:
    explicit EmptyTargets(const std::string& what) : std::runtime_error(what) {}
};
class MissingVelocityTargets : public std::runtime_error {
public:
    explicit MissingVelocityTargets(const std::string& what) : std::runtime_error(what) {}
};
class MalformedGeneration : public std::runtime_error {
public:
    MalformedGeneration(const std::string& what, std::vector<script::Diagnostic> diags)
        : std::runtime_error(what), diagnostics(std::move(diags)) {}
    std::vector<script::Diagnostic> diagnostics;
};

// --- rectified flow examples -------------------------------------------------

// One linear-interpolation training point: xt = (1-t) x0 + t x1 and the
// straight-line velocity target x1 - x0.
struct RFExample {
    std::vector<double> x0;
    std::vector<double> x1;
    std::vector<double> xt;
    std::vector<double> target;  // x1 - x0
    double t = 0.0;
};

RFExample make_rf_example(const std::vector<double>& x1, Rng& rng);

// --- losses -------------------------------------------------------------------

// Mean negative log-likelihood over positions with target >= 0; targets sit
// at TEXT positions (excluding ID prompts and the sequence start), shifted
// so logits at p predict the token at p+1.
nn::Value ntp_loss(nn::Value logits, const std::vector<int>& targets);

// Mean squared error between the predicted velocity rows and x1 - x0.
nn::Value rf_loss(nn::Value velocity, const std::vector<double>& target);

// Per-position targets for a layout (-1 where no loss applies).
std::vector<int> text_targets_for(const seq::SequenceLayout& layout);

// --- batches ------------------------------------------------------------------

struct TrainBatch {
    seq::SequenceLayout layout;
    std::shared_ptr<attn::AttentionMask> mask;
    std::vector<int> text_targets;
    std::map<int, std::vector<double>> vit_rows;
    std::map<int, std::vector<double>> vae_rows;
    std::vector<double> velocity_target;  // patched rows; empty when no VAE_GEN
    double t = 0.0;
    bool has_rf = false;

    model::TokenInputs inputs() const;
};

TrainBatch build_interleaved_batch(const data::CorpusSample& sample, const model::MoTConfig& cfg,
                                   const seq::Vocabulary& v, int gen_shot, Rng& rng, bool use_id_prompts = true);
TrainBatch build_text_batch(const script::Script& s, const seq::Vocabulary& v);

// --- optimizer and routing ----------------------------------------------------

struct TrainConfig {
    double learning_rate = 1e-5;  // paper-schedule default; desk runs override
    int stage1_steps = 30000;     // paper-schedule default
    int stage2_steps = 10000;     // paper-schedule default
    int batch_size = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double lambda_rf = 1.0;  // stage-1 weight on the flow loss
    int mix_text = 1;        // stage-2 round-robin ratios
    int mix_interleaved = 1;
    int mix_pairs = 1;
    bool use_id_prompts = true;
    std::uint64_t seed = 0;
};

struct AdamSlot {
    std::vector<double> m, v;
    long t = 0;
};
struct AdamState {
    std::unordered_map<std::string, AdamSlot> slots;
};

void adam_update(std::vector<double>& value, const std::vector<double>& grad, AdamSlot& slot, double lr, double beta1,
                 double beta2, double eps);

// Which parameter subsets a step may update, and whether the understanding
// branch is cut out of the backward graph.
struct GradRoute {
    std::set<std::string> update;
    bool detach_understanding = false;
};

GradRoute route_all(const model::ModelParams& params);
GradRoute route_stage2_text(const model::ModelParams& params);
GradRoute route_stage2_generation(const model::ModelParams& params);

// Applies Adam restricted to the route's update set. Parameters outside the
// set stay bitwise identical.
void adam_step(model::ModelParams& params, const std::unordered_map<std::string, std::vector<double>>& grads,
               const TrainConfig& cfg, AdamState& state, const GradRoute& route);

// --- training loops -----------------------------------------------------------

struct LossTraceRow {
    int step = 0;
    double ntp = 0.0;
    double rf = 0.0;
    std::string subset;
};

std::string format_loss_trace(const std::vector<LossTraceRow>& trace);

struct TrainResult {
    model::ModelParams params;
    std::vector<LossTraceRow> trace;
};

// Stage 1, Interleaved Concept Learning: joint ntp + lambda * rf updates of
// all parameters on the interleaved subset.
TrainResult train_stage1(model::ModelParams params, const data::Corpus& corpus, const TrainConfig& cfg);

// Stage 2, Disentangled Expert Learning: text batches update the
// understanding expert via ntp; interleaved and pair batches update the
// generation expert via rf with the understanding branch detached.
TrainResult train_stage2(model::ModelParams params, const data::Corpus& corpus, const TrainConfig& cfg);

// --- sampling and inference -----------------------------------------------------

// Plain Euler integration of dx/dt = velocity(x, t) from t=0 to t=1.
std::vector<double> euler_integrate(const std::function<std::vector<double>(const std::vector<double>&, double)>& velocity,
                                    std::vector<double> x0, int steps);

// Integrates the model's velocity field to produce the latent for
// `gen_shot`, conditioned on the script text and all prior keyframes.
Latent sample_ode(model::ModelParams& params, const script::Script& s, const std::vector<seq::Keyframe>& prior,
                  int gen_shot, const seq::Vocabulary& v, int steps, Rng& rng, bool use_id_prompts = true);

// Greedy next-token decoding until eos or the budget runs out.
std::vector<int> greedy_decode(model::ModelParams& params, const seq::Vocabulary& v, std::vector<int> prefix,
                               int max_new_tokens);

enum class InferMode { Draft, Extension, Continuation };

struct InferOptions {
    int ode_steps = 16;
    int max_new_tokens = 1024;
    std::uint64_t seed = 0;
    int prompt_style = 1;
    bool use_id_prompts = true;
};

struct InferenceResult {
    script::Script script;
    std::vector<seq::Keyframe> keyframes;
    std::string generated_text;
};

// Decodes a script from the prompt (plus optional base script for
// extension/continuation), then generates keyframes shot by shot.
InferenceResult infer_script_pipeline(model::ModelParams& params, const std::string& prompt,
                                      const std::optional<script::Script>& base, InferMode mode,
                                      const InferOptions& opts);

// --- 2D rectified-flow study ---------------------------------------------------

// Standard normal to 8-Gaussian ring, used to validate the flow objective
// and the straightness of the learned trajectories.
struct Rf2dConfig {
    int hidden = 96;
    int steps = 3000;
    int batch = 256;
    double learning_rate = 2e-3;
    int time_width = 16;
    double ring_radius = 2.0;
    double ring_std = 0.15;
    std::uint64_t seed = 0;
};

struct Rf2dModel {
    Rf2dConfig cfg;
    std::unordered_map<std::string, std::vector<double>> params;
};

std::vector<std::array<double, 2>> sample_ring(int count, Rng& rng, double radius, double std);

Rf2dModel train_rf2d(const Rf2dConfig& cfg);

// Euler-integrates `count` samples from N(0, I); returns endpoints.
std::vector<std::array<double, 2>> sample_rf2d(const Rf2dModel& m, int count, int euler_steps, Rng& rng);

// Energy distance between two samples: 2 E|X-Y| - E|X-X'| - E|Y-Y'|,
// computed brute force over all pairs.
double energy_distance(const std::vector<std::array<double, 2>>& a, const std::vector<std::array<double, 2>>& b);

}  // namespace director::train
