#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "director/common.hpp"
#include "director/layout.hpp"
#include "director/tensor.hpp"

namespace director::model {

class BadDimensions : public std::runtime_error {
public:
    explicit BadDimensions(const std::string& what) : std::runtime_error(what) {}
};
class MissingTimeInput : public std::runtime_error {
public:
    explicit MissingTimeInput(const std::string& what) : std::runtime_error(what) {}
};
class OutOfRange : public std::out_of_range {
public:
    explicit OutOfRange(const std::string& what) : std::out_of_range(what) {}
};

struct MoTConfig {
    int layers = 2;
    int width = 64;
    int heads = 4;
    int ffn_mult = 4;
    int max_entities = 8;
    int max_shots = 8;
    int image_size = 64;
    int latent_channels = 16;
    int latent_downsample = 8;
    int patch_size = 2;
    int vit_patch = 8;
    int vit_slot_width = 32;
    int time_width = 32;
    int max_positions = 1024;

    int head_dim() const { return width / heads; }
    int ffn_width() const { return width * ffn_mult; }
    int patch_dim() const { return latent_channels * patch_size * patch_size; }
    int vocab_size() const { return 256 + 5 + 2 * max_entities + 2 * max_shots + 3; }
    seq::LayoutConfig layout_config() const;
    void validate() const;

    bool operator==(const MoTConfig&) const = default;
};

// Which of the three disjoint parameter subsets a tensor belongs to.
enum class Subset { Shared, Understanding, Generation };

struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
    Subset subset = Subset::Shared;

    size_t count() const { return value.size(); }
};

struct ModelParams {
    MoTConfig cfg;
    std::vector<Param> params;
    std::unordered_map<std::string, size_t> index;

    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    size_t total_count() const;
    std::vector<std::string> names_in_subset(Subset subset) const;
};

ModelParams init_model(const MoTConfig& cfg, std::uint64_t seed);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// --- frozen stand-in encoders ----------------------------------------------

// Understanding-side encoder: non-overlapping pixel patches through a fixed
// seeded projection. Rows = vit token count, cols = vit_slot_width.
std::vector<double> vit_stub_encode(const Image& img, const MoTConfig& cfg);

// Generation-side codec: per 8x8 pixel block, the first latent_channels
// coordinates of a fixed orthonormal transform. decode is the transpose,
// so decode(z) lies in the codec subspace and encode(decode(z)) == z.
Latent vae_stub_encode(const Image& img, const MoTConfig& cfg);
Image vae_stub_decode(const Latent& z, const MoTConfig& cfg);

// Latent grid <-> per-token rows after 2x2 patch flattening.
std::vector<double> patchify_latent(const Latent& z, int patch_size);
Latent unpatchify_latent(const std::vector<double>& rows, const MoTConfig& cfg);

// Sinusoidal features of t in [0,1]; throws OutOfRange otherwise.
std::vector<double> time_features(double t, int width);

// --- forward pass ------------------------------------------------------------

// Numeric payload accompanying a layout: token ids for text positions,
// encoder rows for vision splits (keyed by split index), and the flow time
// for the generation block.
struct TokenInputs {
    const seq::SequenceLayout* layout = nullptr;
    std::shared_ptr<const attn::AttentionMask> mask;
    std::map<int, std::vector<double>> vit_rows;  // split idx -> vit_tokens x slot_width
    std::map<int, std::vector<double>> vae_rows;  // split idx -> vae_tokens x patch_dim
    double gen_time = 0.0;
    bool has_gen_time = false;
};

struct ForwardOptions {
    // Stage-2 stop-gradient: understanding-routed rows are detached from
    // the attention keys/values so no gradient reaches text, ID-prompt or
    // ViT inputs nor any understanding-expert parameter.
    bool detach_understanding = false;
};

struct ForwardOutput {
    nn::Value text_logits;  // n x V
    nn::Value velocity;     // vae_gen tokens x patch_dim, when present
    bool has_velocity = false;
    nn::Value hidden;  // n x width, post final norm
};

ForwardOutput forward(nn::Tape& tape, nn::ParamBinder& binder, ModelParams& params,
                      const TokenInputs& inputs, const ForwardOptions& opts = {});

}  // namespace director::model
