#include "director/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace director::model {

using nn::Value;

seq::LayoutConfig MoTConfig::layout_config() const {
    seq::LayoutConfig lc;
    lc.image_size = image_size;
    lc.vit_patch = vit_patch;
    lc.latent_downsample = latent_downsample;
    lc.latent_channels = latent_channels;
    lc.patch_size = patch_size;
    return lc;
}

void MoTConfig::validate() const {
    if (width <= 0 || heads <= 0 || width % heads != 0) throw BadDimensions("width must divide by head count");
    if (layers <= 0) throw BadDimensions("layer count must be positive");
    layout_config().validate();
    if (latent_channels > latent_downsample * latent_downsample * 3) {
        throw BadDimensions("latent channels exceed the per-block pixel dimension");
    }
    if (time_width < 2 || time_width % 2 != 0) throw BadDimensions("time width must be even and >= 2");
}

Param& ModelParams::at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw std::out_of_range("no parameter named " + name);
    return params[it->second];
}

const Param& ModelParams::at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw std::out_of_range("no parameter named " + name);
    return params[it->second];
}

size_t ModelParams::total_count() const {
    size_t n = 0;
    for (const Param& p : params) n += p.count();
    return n;
}

std::vector<std::string> ModelParams::names_in_subset(Subset subset) const {
    std::vector<std::string> names;
    for (const Param& p : params)
        if (p.subset == subset) names.push_back(p.name);
    return names;
}

namespace {

size_t count_of(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

void add_param(ModelParams& mp, const std::string& name, std::vector<int> shape, Subset subset, Rng& rng,
               double stddev) {
    Param p;
    p.name = name;
    p.shape = std::move(shape);
    p.subset = subset;
    p.value.resize(count_of(p.shape));
    for (double& v : p.value) v = stddev == 0.0 ? 0.0 : rng.normal() * stddev;
    mp.index[p.name] = mp.params.size();
    mp.params.push_back(std::move(p));
}

void add_ones(ModelParams& mp, const std::string& name, int dim, Subset subset) {
    Param p;
    p.name = name;
    p.shape = {dim};
    p.subset = subset;
    p.value.assign(static_cast<size_t>(dim), 1.0);
    mp.index[p.name] = mp.params.size();
    mp.params.push_back(std::move(p));
}

void add_expert_layers(ModelParams& mp, const std::string& prefix, Subset subset, const MoTConfig& cfg, Rng& rng) {
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(cfg.width));
    const double ffn_std = 1.0 / std::sqrt(static_cast<double>(cfg.ffn_width()));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string base = prefix + std::to_string(l) + ".";
        add_ones(mp, base + "attn_norm", cfg.width, subset);
        add_param(mp, base + "wq", {cfg.width, cfg.width}, subset, rng, proj_std);
        add_param(mp, base + "wk", {cfg.width, cfg.width}, subset, rng, proj_std);
        add_param(mp, base + "wv", {cfg.width, cfg.width}, subset, rng, proj_std);
        add_param(mp, base + "wo", {cfg.width, cfg.width}, subset, rng, proj_std);
        add_ones(mp, base + "ffn_norm", cfg.width, subset);
        add_param(mp, base + "w1", {cfg.width, cfg.ffn_width()}, subset, rng, proj_std);
        add_param(mp, base + "w2", {cfg.ffn_width(), cfg.width}, subset, rng, ffn_std);
    }
    add_ones(mp, prefix + "final_norm", cfg.width, subset);
}

}  // namespace

ModelParams init_model(const MoTConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams mp;
    mp.cfg = cfg;

    // each subset draws from its own stream so experts start independent
    Rng shared_rng(mix_seed(seed, 0));
    Rng und_rng(mix_seed(seed, 1));
    Rng gen_rng(mix_seed(seed, 2));

    const double embed_std = 0.02;
    const double head_std = 1.0 / std::sqrt(static_cast<double>(cfg.width));

    add_param(mp, "tok_embed", {cfg.vocab_size(), cfg.width}, Subset::Shared, shared_rng, embed_std);
    add_param(mp, "pos_embed", {cfg.max_positions, cfg.width}, Subset::Shared, shared_rng, embed_std);
    add_param(mp, "text_head.w", {cfg.width, cfg.vocab_size()}, Subset::Shared, shared_rng, head_std);
    add_param(mp, "text_head.b", {cfg.vocab_size()}, Subset::Shared, shared_rng, 0.0);
    add_param(mp, "vel_head.w", {cfg.width + cfg.time_width, cfg.patch_dim()}, Subset::Shared, shared_rng,
              head_std);
    add_param(mp, "vel_head.b", {cfg.patch_dim()}, Subset::Shared, shared_rng, 0.0);

    add_expert_layers(mp, "und.", Subset::Understanding, cfg, und_rng);
    add_param(mp, "conn.w1", {cfg.vit_slot_width, cfg.width}, Subset::Understanding, und_rng,
              1.0 / std::sqrt(static_cast<double>(cfg.vit_slot_width)));
    add_param(mp, "conn.b1", {cfg.width}, Subset::Understanding, und_rng, 0.0);
    add_param(mp, "conn.w2", {cfg.width, cfg.width}, Subset::Understanding, und_rng, head_std);
    add_param(mp, "conn.b2", {cfg.width}, Subset::Understanding, und_rng, 0.0);

    add_expert_layers(mp, "gen.", Subset::Generation, cfg, gen_rng);
    add_param(mp, "patch.w", {cfg.patch_dim(), cfg.width}, Subset::Generation, gen_rng,
              1.0 / std::sqrt(static_cast<double>(cfg.patch_dim())));
    add_param(mp, "patch.b", {cfg.width}, Subset::Generation, gen_rng, 0.0);
    add_param(mp, "time.w", {cfg.time_width, cfg.width}, Subset::Generation, gen_rng,
              1.0 / std::sqrt(static_cast<double>(cfg.time_width)));
    add_param(mp, "time.b", {cfg.width}, Subset::Generation, gen_rng, 0.0);
    // multiplicative time gate on the generation hidden states; starts as identity
    add_param(mp, "time.gate_w", {cfg.time_width + 3, cfg.width}, Subset::Generation, gen_rng, 0.0);
    add_ones(mp, "time.gate_b", cfg.width, Subset::Generation);
    // time-gated skip from the noised latent to the velocity, plus a
    // per-token output bias; together they span the straight-flow field's
    // linear-in-latent and constant-per-token parts
    add_param(mp, "skip.w", {cfg.patch_dim(), cfg.patch_dim()}, Subset::Generation, gen_rng, 0.0);
    add_param(mp, "skip.gate_w", {cfg.time_width + 3, cfg.patch_dim()}, Subset::Generation, gen_rng, 0.0);
    add_ones(mp, "skip.gate_b", cfg.patch_dim(), Subset::Generation);
    const int vae_tokens = cfg.layout_config().vae_tokens();
    add_param(mp, "gen_bias.tokens", {vae_tokens, cfg.patch_dim()}, Subset::Generation, gen_rng, 0.0);
    add_param(mp, "gen_bias.gate_w", {cfg.time_width + 3, cfg.patch_dim()}, Subset::Generation, gen_rng, 0.0);
    add_ones(mp, "gen_bias.gate_b", cfg.patch_dim(), Subset::Generation);
    return mp;
}

// --- checkpoint io -----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'M', 'O', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

std::uint32_t get_u32(const std::string& in, size_t& pos) {
    if (pos + 4 > in.size()) throw std::runtime_error("checkpoint truncated");
    std::uint32_t v;
    std::memcpy(&v, in.data() + pos, 4);
    pos += 4;
    return v;
}

std::vector<int> config_fields(const MoTConfig& cfg) {
    return {cfg.layers,          cfg.width,      cfg.heads,          cfg.ffn_mult,  cfg.max_entities,
            cfg.max_shots,       cfg.image_size, cfg.latent_channels, cfg.latent_downsample,
            cfg.patch_size,      cfg.vit_patch,  cfg.vit_slot_width, cfg.time_width, cfg.max_positions};
}

void apply_config_fields(MoTConfig& cfg, const std::vector<int>& f) {
    cfg.layers = f[0];
    cfg.width = f[1];
    cfg.heads = f[2];
    cfg.ffn_mult = f[3];
    cfg.max_entities = f[4];
    cfg.max_shots = f[5];
    cfg.image_size = f[6];
    cfg.latent_channels = f[7];
    cfg.latent_downsample = f[8];
    cfg.patch_size = f[9];
    cfg.vit_patch = f[10];
    cfg.vit_slot_width = f[11];
    cfg.time_width = f[12];
    cfg.max_positions = f[13];
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    const auto fields = config_fields(params.cfg);
    put_u32(out, static_cast<std::uint32_t>(fields.size()));
    for (int f : fields) put_u32(out, static_cast<std::uint32_t>(f));
    put_u32(out, static_cast<std::uint32_t>(params.params.size()));
    for (const Param& p : params.params) {
        put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out += p.name;
        put_u32(out, static_cast<std::uint32_t>(p.subset));
        put_u32(out, static_cast<std::uint32_t>(p.shape.size()));
        for (int d : p.shape) put_u32(out, static_cast<std::uint32_t>(d));
        const size_t bytes = p.value.size() * sizeof(double);
        const size_t at = out.size();
        out.resize(at + bytes);
        std::memcpy(out.data() + at, p.value.data(), bytes);
    }
    write_file(path, out);
}

ModelParams load_checkpoint(const std::string& path) {
    const std::string in = read_file(path);
    size_t pos = 0;
    if (in.size() < 8 || std::memcmp(in.data(), kMagic, 4) != 0) throw std::runtime_error("not a checkpoint file");
    pos = 4;
    if (get_u32(in, pos) != kVersion) throw std::runtime_error("unsupported checkpoint version");
    const std::uint32_t n_fields = get_u32(in, pos);
    std::vector<int> fields(n_fields);
    for (auto& f : fields) f = static_cast<int>(get_u32(in, pos));
    ModelParams mp;
    apply_config_fields(mp.cfg, fields);
    const std::uint32_t n_params = get_u32(in, pos);
    for (std::uint32_t i = 0; i < n_params; ++i) {
        Param p;
        const std::uint32_t name_len = get_u32(in, pos);
        if (pos + name_len > in.size()) throw std::runtime_error("checkpoint truncated");
        p.name = in.substr(pos, name_len);
        pos += name_len;
        p.subset = static_cast<Subset>(get_u32(in, pos));
        const std::uint32_t ndim = get_u32(in, pos);
        p.shape.resize(ndim);
        size_t count = 1;
        for (auto& d : p.shape) {
            d = static_cast<int>(get_u32(in, pos));
            count *= static_cast<size_t>(d);
        }
        const size_t bytes = count * sizeof(double);
        if (pos + bytes > in.size()) throw std::runtime_error("checkpoint truncated");
        p.value.resize(count);
        std::memcpy(p.value.data(), in.data() + pos, bytes);
        pos += bytes;
        mp.index[p.name] = mp.params.size();
        mp.params.push_back(std::move(p));
    }
    if (pos != in.size()) throw std::runtime_error("trailing bytes in checkpoint");
    return mp;
}

// --- frozen encoders ---------------------------------------------------------

namespace {

constexpr std::uint64_t kVitSeed = 0xD1CE0001;
constexpr std::uint64_t kVaeSeed = 0xD1CE0002;

// First `rows` rows of an orthonormal basis of R^dim: per-channel DC
// components first, the rest random and Gram-Schmidt orthogonalized.
std::vector<double> codec_basis(int rows, int dim) {
    std::vector<std::vector<double>> basis;
    const int per_channel = dim / 3;
    for (int c = 0; c < 3 && static_cast<int>(basis.size()) < rows; ++c) {
        std::vector<double> v(dim, 0.0);
        const double w = 1.0 / std::sqrt(static_cast<double>(per_channel));
        for (int i = 0; i < per_channel; ++i) v[static_cast<size_t>(i) * 3 + c] = w;
        basis.push_back(std::move(v));
    }
    Rng rng(kVaeSeed);
    while (static_cast<int>(basis.size()) < rows) {
        std::vector<double> v(dim);
        for (double& x : v) x = rng.normal();
        for (const auto& b : basis) {
            double dot = 0.0;
            for (int i = 0; i < dim; ++i) dot += v[i] * b[i];
            for (int i = 0; i < dim; ++i) v[i] -= dot * b[i];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-6) continue;  // re-draw on a degenerate vector
        for (double& x : v) x /= norm;
        basis.push_back(std::move(v));
    }
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(rows) * dim);
    for (const auto& b : basis) flat.insert(flat.end(), b.begin(), b.end());
    return flat;
}

}  // namespace

std::vector<double> vit_stub_encode(const Image& img, const MoTConfig& cfg) {
    if (img.height != cfg.image_size || img.width != cfg.image_size) {
        throw BadDimensions("vit_stub_encode: image does not match the configured size");
    }
    const int patch = cfg.vit_patch;
    const int grid = cfg.image_size / patch;
    const int in_dim = patch * patch * 3;
    const int out_dim = cfg.vit_slot_width;

    // fixed projection, frozen across the project lifetime
    Rng rng(kVitSeed);
    std::vector<double> proj(static_cast<size_t>(in_dim) * out_dim);
    const double std = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& v : proj) v = rng.normal() * std;

    std::vector<double> out(static_cast<size_t>(grid) * grid * out_dim, 0.0);
    std::vector<double> patch_vec(in_dim);
    for (int py = 0; py < grid; ++py) {
        for (int px = 0; px < grid; ++px) {
            int at = 0;
            for (int y = 0; y < patch; ++y)
                for (int x = 0; x < patch; ++x)
                    for (int c = 0; c < 3; ++c) patch_vec[at++] = img.at(py * patch + y, px * patch + x, c);
            double* row = out.data() + (static_cast<size_t>(py) * grid + px) * out_dim;
            for (int i = 0; i < in_dim; ++i) {
                const double v = patch_vec[i];
                if (v == 0.0) continue;
                const double* prow = proj.data() + static_cast<size_t>(i) * out_dim;
                for (int j = 0; j < out_dim; ++j) row[j] += v * prow[j];
            }
        }
    }
    return out;
}

Latent vae_stub_encode(const Image& img, const MoTConfig& cfg) {
    if (img.height != cfg.image_size || img.width != cfg.image_size) {
        throw BadDimensions("vae_stub_encode: image does not match the configured size");
    }
    const int block = cfg.latent_downsample;
    const int grid = cfg.image_size / block;
    const int dim = block * block * 3;
    const auto basis = codec_basis(cfg.latent_channels, dim);

    Latent z(cfg.latent_channels, grid, grid);
    std::vector<double> vec(dim);
    for (int by = 0; by < grid; ++by) {
        for (int bx = 0; bx < grid; ++bx) {
            int at = 0;
            for (int y = 0; y < block; ++y)
                for (int x = 0; x < block; ++x)
                    for (int c = 0; c < 3; ++c) vec[at++] = img.at(by * block + y, bx * block + x, c);
            for (int ch = 0; ch < cfg.latent_channels; ++ch) {
                const double* row = basis.data() + static_cast<size_t>(ch) * dim;
                double dot = 0.0;
                for (int i = 0; i < dim; ++i) dot += row[i] * vec[i];
                z.at(ch, by, bx) = dot;
            }
        }
    }
    return z;
}

Image vae_stub_decode(const Latent& z, const MoTConfig& cfg) {
    const int block = cfg.latent_downsample;
    const int grid = cfg.image_size / block;
    if (z.channels != cfg.latent_channels || z.height != grid || z.width != grid) {
        throw BadDimensions("vae_stub_decode: latent does not match the configured shape");
    }
    const int dim = block * block * 3;
    const auto basis = codec_basis(cfg.latent_channels, dim);

    Image img(cfg.image_size, cfg.image_size);
    std::vector<double> vec(dim);
    for (int by = 0; by < grid; ++by) {
        for (int bx = 0; bx < grid; ++bx) {
            std::fill(vec.begin(), vec.end(), 0.0);
            for (int ch = 0; ch < cfg.latent_channels; ++ch) {
                const double* row = basis.data() + static_cast<size_t>(ch) * dim;
                const double zv = z.at(ch, by, bx);
                if (zv == 0.0) continue;
                for (int i = 0; i < dim; ++i) vec[i] += zv * row[i];
            }
            int at = 0;
            for (int y = 0; y < block; ++y)
                for (int x = 0; x < block; ++x)
                    for (int c = 0; c < 3; ++c) img.at(by * block + y, bx * block + x, c) = vec[at++];
        }
    }
    return img;
}

std::vector<double> patchify_latent(const Latent& z, int patch_size) {
    const int gh = z.height / patch_size, gw = z.width / patch_size;
    const int dim = z.channels * patch_size * patch_size;
    std::vector<double> rows(static_cast<size_t>(gh) * gw * dim);
    size_t at = 0;
    for (int py = 0; py < gh; ++py)
        for (int px = 0; px < gw; ++px)
            for (int c = 0; c < z.channels; ++c)
                for (int dy = 0; dy < patch_size; ++dy)
                    for (int dx = 0; dx < patch_size; ++dx)
                        rows[at++] = z.at(c, py * patch_size + dy, px * patch_size + dx);
    return rows;
}

Latent unpatchify_latent(const std::vector<double>& rows, const MoTConfig& cfg) {
    const int hw = cfg.image_size / cfg.latent_downsample;
    const int p = cfg.patch_size;
    const int gh = hw / p, gw = hw / p;
    if (rows.size() != static_cast<size_t>(gh) * gw * cfg.patch_dim()) {
        throw BadDimensions("unpatchify_latent: row payload does not match the configured shape");
    }
    Latent z(cfg.latent_channels, hw, hw);
    size_t at = 0;
    for (int py = 0; py < gh; ++py)
        for (int px = 0; px < gw; ++px)
            for (int c = 0; c < cfg.latent_channels; ++c)
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < p; ++dx) z.at(c, py * p + dy, px * p + dx) = rows[at++];
    return z;
}

// gate basis: the sinusoidal features plus a constant and two rational
// terms, so time-dependent gains with a pole near t=1 are representable
static std::vector<double> gate_features(double t, int width) {
    auto out = time_features(t, width);
    out.push_back(1.0);
    out.push_back(1.0 / (1.0 - 0.95 * t));
    out.push_back(1.0 / (1.0 - 0.995 * t));
    return out;
}

std::vector<double> time_features(double t, int width) {
    if (!(t >= 0.0 && t <= 1.0)) throw OutOfRange("time must lie in [0,1]");
    const int half = width / 2;
    std::vector<double> out(static_cast<size_t>(width));
    for (int i = 0; i < half; ++i) {
        const double freq = half > 1 ? std::exp(std::log(1000.0) * i / (half - 1)) : 1.0;
        out[i] = std::sin(t * freq);
        out[half + i] = std::cos(t * freq);
    }
    return out;
}

// --- forward pass ------------------------------------------------------------

namespace {

struct BoundExpertLayer {
    Value attn_norm, wq, wk, wv, wo, ffn_norm, w1, w2;
};

struct BoundModel {
    Value tok_embed, pos_embed, text_head_w, text_head_b, vel_head_w, vel_head_b;
    std::vector<BoundExpertLayer> und, gen;
    Value und_final, gen_final;
    Value conn_w1, conn_b1, conn_w2, conn_b2;
    Value patch_w, patch_b, time_w, time_b, time_gate_w, time_gate_b;
    Value skip_w, skip_gate_w, skip_gate_b, gen_bias_tokens, gen_bias_gate_w, gen_bias_gate_b;
};

BoundModel bind_model(nn::ParamBinder& binder, ModelParams& mp) {
    auto bind = [&binder, &mp](const std::string& name) {
        Param& p = mp.at(name);
        return binder.bind(name, p.shape, &p.value);
    };
    BoundModel b;
    b.tok_embed = bind("tok_embed");
    b.pos_embed = bind("pos_embed");
    b.text_head_w = bind("text_head.w");
    b.text_head_b = bind("text_head.b");
    b.vel_head_w = bind("vel_head.w");
    b.vel_head_b = bind("vel_head.b");
    for (const char* prefix : {"und.", "gen."}) {
        auto& layers = prefix[0] == 'u' ? b.und : b.gen;
        for (int l = 0; l < mp.cfg.layers; ++l) {
            const std::string base = std::string(prefix) + std::to_string(l) + ".";
            BoundExpertLayer bl;
            bl.attn_norm = bind(base + "attn_norm");
            bl.wq = bind(base + "wq");
            bl.wk = bind(base + "wk");
            bl.wv = bind(base + "wv");
            bl.wo = bind(base + "wo");
            bl.ffn_norm = bind(base + "ffn_norm");
            bl.w1 = bind(base + "w1");
            bl.w2 = bind(base + "w2");
            layers.push_back(bl);
        }
    }
    b.und_final = bind("und.final_norm");
    b.gen_final = bind("gen.final_norm");
    b.conn_w1 = bind("conn.w1");
    b.conn_b1 = bind("conn.b1");
    b.conn_w2 = bind("conn.w2");
    b.conn_b2 = bind("conn.b2");
    b.patch_w = bind("patch.w");
    b.patch_b = bind("patch.b");
    b.time_w = bind("time.w");
    b.time_b = bind("time.b");
    b.time_gate_w = bind("time.gate_w");
    b.time_gate_b = bind("time.gate_b");
    b.skip_w = bind("skip.w");
    b.skip_gate_w = bind("skip.gate_w");
    b.skip_gate_b = bind("skip.gate_b");
    b.gen_bias_tokens = bind("gen_bias.tokens");
    b.gen_bias_gate_w = bind("gen_bias.gate_w");
    b.gen_bias_gate_b = bind("gen_bias.gate_b");
    return b;
}

bool understanding_role(seq::Role role) {
    return role == seq::Role::TEXT || role == seq::Role::ID_PROMPT || role == seq::Role::VIT;
}

}  // namespace

ForwardOutput forward(nn::Tape& tape, nn::ParamBinder& binder, ModelParams& params,
                      const TokenInputs& inputs, const ForwardOptions& opts) {
    const MoTConfig& cfg = params.cfg;
    const seq::SequenceLayout& layout = *inputs.layout;
    const int n = layout.total;
    if (n <= 0) throw nn::ShapeMismatch("empty sequence");
    if (n > cfg.max_positions) throw BadDimensions("sequence longer than the position table");
    if (!inputs.mask || inputs.mask->n != n) throw nn::ShapeMismatch("mask size does not match sequence");

    BoundModel b = bind_model(binder, params);
    Value gen_latents;
    bool has_gen_latents = false;

    std::vector<int> rows_u, rows_g;
    for (int p = 0; p < n; ++p) (understanding_role(layout.roles[p]) ? rows_u : rows_g).push_back(p);

    // input embeddings: tokens for text/id rows, encoders for vision rows
    std::vector<int> text_positions, text_ids;
    for (int p = 0; p < n; ++p) {
        if (layout.roles[p] == seq::Role::TEXT || layout.roles[p] == seq::Role::ID_PROMPT) {
            text_positions.push_back(p);
            text_ids.push_back(layout.token_ids[p]);
        }
    }
    Value x = scatter_rows(select_rows(b.tok_embed, text_ids), text_positions, n);

    for (size_t si = 0; si < layout.splits.size(); ++si) {
        const seq::Split& split = layout.splits[si];
        std::vector<int> positions(split.length);
        for (int i = 0; i < split.length; ++i) positions[i] = split.start + i;
        if (split.role == seq::Role::VIT) {
            auto it = inputs.vit_rows.find(static_cast<int>(si));
            if (it == inputs.vit_rows.end()) throw nn::ShapeMismatch("missing vit rows for split");
            if (it->second.size() != static_cast<size_t>(split.length) * cfg.vit_slot_width) {
                throw nn::ShapeMismatch("vit rows have the wrong shape");
            }
            Value slots = tape.constant({split.length, cfg.vit_slot_width}, it->second);
            Value h1 = gelu(add_rowvec(matmul(slots, b.conn_w1), b.conn_b1));
            Value h2 = add_rowvec(matmul(h1, b.conn_w2), b.conn_b2);
            x = add(x, scatter_rows(h2, positions, n));
        } else if (split.role == seq::Role::VAE_COND || split.role == seq::Role::VAE_GEN) {
            auto it = inputs.vae_rows.find(static_cast<int>(si));
            if (it == inputs.vae_rows.end()) throw nn::ShapeMismatch("missing vae rows for split");
            if (it->second.size() != static_cast<size_t>(split.length) * cfg.patch_dim()) {
                throw nn::ShapeMismatch("vae rows have the wrong shape");
            }
            Value latents = tape.constant({split.length, cfg.patch_dim()}, it->second);
            Value embedded = add_rowvec(matmul(latents, b.patch_w), b.patch_b);
            if (split.role == seq::Role::VAE_GEN) {
                gen_latents = latents;
                has_gen_latents = true;
                if (!inputs.has_gen_time) throw MissingTimeInput("VAE_GEN split requires a time value");
                Value tf = tape.constant({1, cfg.time_width}, time_features(inputs.gen_time, cfg.time_width));
                Value tvec = reshape(add_rowvec(matmul(tf, b.time_w), b.time_b), {cfg.width});
                embedded = add_rowvec(embedded, tvec);
            }
            x = add(x, scatter_rows(embedded, positions, n));
        }
    }

    std::vector<int> iota(n);
    for (int p = 0; p < n; ++p) iota[p] = p;
    Value h = add(x, select_rows(b.pos_embed, iota));

    const double attn_scale = std::sqrt(static_cast<double>(cfg.head_dim()));

    for (int l = 0; l < cfg.layers; ++l) {
        // per-token expert routing for the attention projections
        auto project = [&](const std::vector<int>& rows, const BoundExpertLayer& ex, bool detach_kv, Value& q,
                           Value& k, Value& v) {
            Value xn = rmsnorm(select_rows(h, rows), ex.attn_norm);
            q = matmul(xn, ex.wq);
            k = matmul(xn, ex.wk);
            v = matmul(xn, ex.wv);
            if (detach_kv) {
                k = nn::detach(k);
                v = nn::detach(v);
            }
        };
        Value q, k, v;
        if (!rows_u.empty() && !rows_g.empty()) {
            Value qu, ku, vu, qg, kg, vg;
            project(rows_u, b.und[l], opts.detach_understanding, qu, ku, vu);
            project(rows_g, b.gen[l], false, qg, kg, vg);
            q = add(scatter_rows(qu, rows_u, n), scatter_rows(qg, rows_g, n));
            k = add(scatter_rows(ku, rows_u, n), scatter_rows(kg, rows_g, n));
            v = add(scatter_rows(vu, rows_u, n), scatter_rows(vg, rows_g, n));
        } else {
            const auto& rows = rows_u.empty() ? rows_g : rows_u;
            const auto& ex = rows_u.empty() ? b.gen[l] : b.und[l];
            Value q1, k1, v1;
            project(rows, ex, opts.detach_understanding && !rows_u.empty(), q1, k1, v1);
            q = scatter_rows(q1, rows, n);
            k = scatter_rows(k1, rows, n);
            v = scatter_rows(v1, rows, n);
        }

        // shared multimodal attention with QK-Norm under the compiled mask
        std::vector<Value> head_outs;
        for (int hh = 0; hh < cfg.heads; ++hh) {
            Value qh = l2_normalize(slice_cols(q, hh * cfg.head_dim(), cfg.head_dim()));
            Value kh = l2_normalize(slice_cols(k, hh * cfg.head_dim(), cfg.head_dim()));
            Value vh = slice_cols(v, hh * cfg.head_dim(), cfg.head_dim());
            Value scores = scale(matmul(qh, transpose(kh)), attn_scale);
            Value attn = masked_softmax(scores, inputs.mask);
            head_outs.push_back(matmul(attn, vh));
        }
        Value attn_out = concat_cols(head_outs);

        if (!rows_u.empty()) h = add(h, scatter_rows(matmul(select_rows(attn_out, rows_u), b.und[l].wo), rows_u, n));
        if (!rows_g.empty()) h = add(h, scatter_rows(matmul(select_rows(attn_out, rows_g), b.gen[l].wo), rows_g, n));

        auto ffn = [&](const std::vector<int>& rows, const BoundExpertLayer& ex) {
            Value xn = rmsnorm(select_rows(h, rows), ex.ffn_norm);
            Value out = matmul(gelu(matmul(xn, ex.w1)), ex.w2);
            return scatter_rows(out, rows, n);
        };
        if (!rows_u.empty()) h = add(h, ffn(rows_u, b.und[l]));
        if (!rows_g.empty()) h = add(h, ffn(rows_g, b.gen[l]));
    }

    // per-expert final norm, shared output heads
    Value hn;
    if (!rows_u.empty() && !rows_g.empty()) {
        hn = add(scatter_rows(rmsnorm(select_rows(h, rows_u), b.und_final), rows_u, n),
                 scatter_rows(rmsnorm(select_rows(h, rows_g), b.gen_final), rows_g, n));
    } else if (rows_g.empty()) {
        hn = scatter_rows(rmsnorm(select_rows(h, rows_u), b.und_final), rows_u, n);
    } else {
        hn = scatter_rows(rmsnorm(select_rows(h, rows_g), b.gen_final), rows_g, n);
    }

    ForwardOutput out;
    out.hidden = hn;
    out.text_logits = add_rowvec(matmul(hn, b.text_head_w), b.text_head_b);

    std::vector<int> gen_positions;
    for (const seq::Split& split : layout.splits) {
        if (split.role == seq::Role::VAE_GEN) {
            for (int i = 0; i < split.length; ++i) gen_positions.push_back(split.start + i);
        }
    }
    if (!gen_positions.empty()) {
        // velocity reads the pre-norm residual stream: the stream is linear
        // in the noised latent, and the straight-flow field is a
        // time-gated linear map of it, so a time-driven gate plus direct
        // time features make the field representable
        const auto tf = time_features(inputs.gen_time, cfg.time_width);
        Value tfv = tape.constant({1, cfg.time_width}, tf);
        const auto gf = gate_features(inputs.gen_time, cfg.time_width);
        Value gfv = tape.constant({1, cfg.time_width + 3}, gf);
        Value gate = reshape(add_rowvec(matmul(gfv, b.time_gate_w), b.time_gate_b), {cfg.width});
        Value gated = mul_rowvec(select_rows(h, gen_positions), gate);
        std::vector<double> tf_rows;
        for (size_t r = 0; r < gen_positions.size(); ++r) tf_rows.insert(tf_rows.end(), tf.begin(), tf.end());
        Value time_cols = tape.constant({static_cast<int>(gen_positions.size()), cfg.time_width}, tf_rows);
        Value head_in = nn::concat_cols({gated, time_cols});
        Value vel = add_rowvec(matmul(head_in, b.vel_head_w), b.vel_head_b);
        if (has_gen_latents && gen_latents.rows() == static_cast<int>(gen_positions.size())) {
            Value skip_gate = reshape(add_rowvec(matmul(gfv, b.skip_gate_w), b.skip_gate_b), {cfg.patch_dim()});
            vel = add(vel, mul_rowvec(matmul(gen_latents, b.skip_w), skip_gate));
            Value bias_gate = reshape(add_rowvec(matmul(gfv, b.gen_bias_gate_w), b.gen_bias_gate_b),
                                      {cfg.patch_dim()});
            vel = add(vel, mul_rowvec(b.gen_bias_tokens, bias_gate));
        }
        out.velocity = vel;
        out.has_velocity = true;
    }
    return out;
}

}  // namespace director::model
