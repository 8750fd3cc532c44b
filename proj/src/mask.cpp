#include "director/mask.hpp"

#include <sstream>

namespace director::attn {

using seq::Role;
using seq::SequenceLayout;
using seq::Split;

namespace {

bool is_vision(Role role) { return role == Role::VIT || role == Role::VAE_COND || role == Role::VAE_GEN; }

void validate_spans(const SequenceLayout& layout) {
    int cursor = 0;
    for (const Split& split : layout.splits) {
        if (split.start != cursor || split.length <= 0) throw InvalidLayout("split spans must tile the sequence");
        cursor += split.length;
    }
    if (cursor != layout.total) throw InvalidLayout("split spans must cover the whole sequence");
    if (layout.total <= 0) throw InvalidLayout("empty layout");
}

}  // namespace

AttentionMask compile_mask(const SequenceLayout& layout) {
    validate_spans(layout);
    const auto& splits = layout.splits;
    const int m = static_cast<int>(splits.size());

    // group ids: an ID_PROMPT split fuses with the vision split right after it
    std::vector<int> group(m);
    for (int i = 0; i < m; ++i) group[i] = i;
    for (int i = 0; i + 1 < m; ++i) {
        if (splits[i].role == Role::ID_PROMPT && is_vision(splits[i + 1].role)) group[i + 1] = group[i];
    }

    AttentionMask mask(layout.total);
    for (int qi = 0; qi < m; ++qi) {
        const Split& qs = splits[qi];
        for (int ki = 0; ki < m; ++ki) {
            const Split& ks = splits[ki];
            if (ki < qi || (ki != qi && group[ki] == group[qi])) {
                // earlier split, or forward within the same vision group
                for (int q = qs.start; q < qs.start + qs.length; ++q)
                    for (int k = ks.start; k < ks.start + ks.length; ++k) mask.set(q, k, true);
            } else if (ki == qi) {
                if (qs.role == Role::TEXT) {
                    for (int q = qs.start; q < qs.start + qs.length; ++q)
                        for (int k = ks.start; k <= q; ++k) mask.set(q, k, true);
                } else {
                    for (int q = qs.start; q < qs.start + qs.length; ++q)
                        for (int k = ks.start; k < ks.start + ks.length; ++k) mask.set(q, k, true);
                }
            }
        }
    }
    return mask;
}

AttentionMask oracle_mask(const SequenceLayout& layout) {
    validate_spans(layout);

    // per-pair evaluation from first principles, no shared machinery
    auto split_of = [&layout](int pos) {
        for (size_t i = 0; i < layout.splits.size(); ++i) {
            const Split& s = layout.splits[i];
            if (pos >= s.start && pos < s.start + s.length) return static_cast<int>(i);
        }
        throw InvalidLayout("position outside every split");
    };
    auto vision_like = [](Role r) { return r == Role::VIT || r == Role::VAE_COND || r == Role::VAE_GEN; };
    auto paired = [&layout, &vision_like](int a, int b) {
        // a and b form an (ID_PROMPT, vision) adjacency in either order
        const int lo = a < b ? a : b;
        const int hi = a < b ? b : a;
        if (hi != lo + 1) return false;
        return layout.splits[lo].role == Role::ID_PROMPT && vision_like(layout.splits[hi].role);
    };

    AttentionMask mask(layout.total);
    for (int q = 0; q < layout.total; ++q) {
        for (int k = 0; k < layout.total; ++k) {
            const int sq = split_of(q);
            const int sk = split_of(k);
            bool allowed = false;
            if (sk < sq) {
                allowed = true;
            } else if (sk == sq) {
                allowed = layout.splits[sq].role == Role::TEXT ? (k <= q) : true;
            } else {
                allowed = paired(sq, sk);
            }
            mask.set(q, k, allowed);
        }
    }
    return mask;
}

std::string render_mask(const AttentionMask& m) {
    std::string out = "P1\n" + std::to_string(m.n) + " " + std::to_string(m.n) + "\n";
    for (int q = 0; q < m.n; ++q) {
        for (int k = 0; k < m.n; ++k) {
            if (k) out += ' ';
            out += m.at(q, k) ? '1' : '0';
        }
        out += '\n';
    }
    return out;
}

AttentionMask parse_mask(const std::string& text) {
    std::istringstream ss(text);
    std::string magic;
    ss >> magic;
    if (magic != "P1") throw std::runtime_error("parse_mask: expected P1 bitmap");
    int w = 0, h = 0;
    ss >> w >> h;
    if (w != h || w <= 0) throw std::runtime_error("parse_mask: expected a square bitmap");
    AttentionMask m(w);
    for (int q = 0; q < h; ++q) {
        for (int k = 0; k < w; ++k) {
            int bit = 0;
            if (!(ss >> bit) || (bit != 0 && bit != 1)) throw std::runtime_error("parse_mask: bad bit");
            m.set(q, k, bit == 1);
        }
    }
    return m;
}

}  // namespace director::attn
