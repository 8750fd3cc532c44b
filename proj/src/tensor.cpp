#include "director/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace director::nn {

namespace {

size_t shape_count(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeMismatch("non-positive dimension");
        n *= static_cast<size_t>(d);
    }
    return n;
}

void check_same_tape(Value a, Value b) {
    if (a.node()->tape != b.node()->tape) throw std::logic_error("operands belong to different tapes");
}

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace

double Value::scalar() const {
    if (size() != 1) throw NonScalarLoss("expected a scalar, got shape " + shape_str(shape()));
    return data()[0];
}

Node* Tape::make_node(std::vector<int> shape, bool requires_grad) {
    auto node = std::make_unique<Node>();
    node->shape = std::move(shape);
    node->value.assign(shape_count(node->shape), 0.0);
    node->grad.assign(node->value.size(), 0.0);
    node->requires_grad = requires_grad;
    node->tape = this;
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
}

Value Tape::leaf(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    const size_t n = shape_count(shape);
    if (data.size() != n) throw ShapeMismatch("leaf data size does not match shape " + shape_str(shape));
    Node* node = make_node(std::move(shape), requires_grad);
    node->value = std::move(data);
    return Value(node);
}

void Tape::backward(Value loss) {
    if (loss.size() != 1) throw NonScalarLoss("backward requires a scalar loss");
    // interior gradients are per-pass scratch; only leaves accumulate
    for (auto& node : nodes_) {
        if (node->backward) std::fill(node->grad.begin(), node->grad.end(), 0.0);
    }
    loss.node()->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& node = **it;
        if (node.backward && node.requires_grad) node.backward(node);
    }
}

void backward(Value loss) { loss.node()->tape->backward(loss); }

// --- elementwise and structural ops ----------------------------------------

Value matmul(Value a, Value b) {
    check_same_tape(a, b);
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows()) {
        throw ShapeMismatch("matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const int m = a.rows(), kk = a.cols(), n = b.cols();
    Node* out = a.node()->tape->make_node({m, n}, a.requires_grad() || b.requires_grad());
    const double* av = a.data().data();
    const double* bv = b.data().data();
    double* ov = out->value.data();
    for (int i = 0; i < m; ++i) {
        for (int k = 0; k < kk; ++k) {
            const double aik = av[i * kk + k];
            if (aik == 0.0) continue;
            const double* brow = bv + static_cast<size_t>(k) * n;
            double* orow = ov + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    Node* an = a.node();
    Node* bn = b.node();
    out->backward = [an, bn, m, kk, n](Node& self) {
        const double* g = self.grad.data();
        if (an->requires_grad) {
            double* ag = an->grad.data();
            const double* bv = bn->value.data();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double gij = g[i * n + j];
                    if (gij == 0.0) continue;
                    const double* brow = bv + static_cast<size_t>(j);
                    for (int k = 0; k < kk; ++k) ag[i * kk + k] += gij * brow[static_cast<size_t>(k) * n];
                }
        }
        if (bn->requires_grad) {
            double* bg = bn->grad.data();
            const double* av = an->value.data();
            for (int i = 0; i < m; ++i)
                for (int k = 0; k < kk; ++k) {
                    const double aik = av[i * kk + k];
                    if (aik == 0.0) continue;
                    const double* grow = g + static_cast<size_t>(i) * n;
                    double* brow = bg + static_cast<size_t>(k) * n;
                    for (int j = 0; j < n; ++j) brow[j] += aik * grow[j];
                }
        }
    };
    return Value(out);
}

Value transpose(Value a) {
    if (a.shape().size() != 2) throw ShapeMismatch("transpose expects a matrix");
    const int m = a.rows(), n = a.cols();
    Node* out = a.node()->tape->make_node({n, m}, a.requires_grad());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->value[static_cast<size_t>(j) * m + i] = a.data()[static_cast<size_t>(i) * n + j];
    Node* an = a.node();
    out->backward = [an, m, n](Node& self) {
        if (!an->requires_grad) return;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                an->grad[static_cast<size_t>(i) * n + j] += self.grad[static_cast<size_t>(j) * m + i];
    };
    return Value(out);
}

Value add(Value a, Value b) {
    check_same_tape(a, b);
    if (a.shape() != b.shape()) {
        throw ShapeMismatch("add " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Node* out = a.node()->tape->make_node(a.shape(), a.requires_grad() || b.requires_grad());
    for (size_t i = 0; i < out->size(); ++i) out->value[i] = a.data()[i] + b.data()[i];
    Node* an = a.node();
    Node* bn = b.node();
    out->backward = [an, bn](Node& self) {
        if (an->requires_grad)
            for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < self.size(); ++i) bn->grad[i] += self.grad[i];
    };
    return Value(out);
}

Value add_rowvec(Value a, Value b) {
    check_same_tape(a, b);
    if (a.shape().size() != 2 || b.shape().size() != 1 || a.cols() != b.shape()[0]) {
        throw ShapeMismatch("add_rowvec " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
    }
    const int m = a.rows(), d = a.cols();
    Node* out = a.node()->tape->make_node(a.shape(), a.requires_grad() || b.requires_grad());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) out->value[static_cast<size_t>(i) * d + j] = a.data()[static_cast<size_t>(i) * d + j] + b.data()[j];
    Node* an = a.node();
    Node* bn = b.node();
    out->backward = [an, bn, m, d](Node& self) {
        if (an->requires_grad)
            for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i];
        if (bn->requires_grad)
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < d; ++j) bn->grad[j] += self.grad[static_cast<size_t>(i) * d + j];
    };
    return Value(out);
}

Value mul(Value a, Value b) {
    check_same_tape(a, b);
    if (a.shape() != b.shape()) throw ShapeMismatch("mul shapes differ");
    Node* out = a.node()->tape->make_node(a.shape(), a.requires_grad() || b.requires_grad());
    for (size_t i = 0; i < out->size(); ++i) out->value[i] = a.data()[i] * b.data()[i];
    Node* an = a.node();
    Node* bn = b.node();
    out->backward = [an, bn](Node& self) {
        if (an->requires_grad)
            for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < self.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
    };
    return Value(out);
}

Value mul_rowvec(Value a, Value b) {
    check_same_tape(a, b);
    if (a.shape().size() != 2 || b.shape().size() != 1 || a.cols() != b.shape()[0]) {
        throw ShapeMismatch("mul_rowvec " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
    }
    const int m = a.rows(), d = a.cols();
    Node* out = a.node()->tape->make_node(a.shape(), a.requires_grad() || b.requires_grad());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j)
            out->value[static_cast<size_t>(i) * d + j] = a.data()[static_cast<size_t>(i) * d + j] * b.data()[j];
    Node* an = a.node();
    Node* bn = b.node();
    out->backward = [an, bn, m, d](Node& self) {
        if (an->requires_grad) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < d; ++j)
                    an->grad[static_cast<size_t>(i) * d + j] +=
                        self.grad[static_cast<size_t>(i) * d + j] * bn->value[j];
        }
        if (bn->requires_grad) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < d; ++j)
                    bn->grad[j] += self.grad[static_cast<size_t>(i) * d + j] * an->value[static_cast<size_t>(i) * d + j];
        }
    };
    return Value(out);
}

Value scale(Value a, double c) {
    Node* out = a.node()->tape->make_node(a.shape(), a.requires_grad());
    for (size_t i = 0; i < out->size(); ++i) out->value[i] = a.data()[i] * c;
    Node* an = a.node();
    out->backward = [an, c](Node& self) {
        if (!an->requires_grad) return;
        for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i] * c;
    };
    return Value(out);
}

Value reshape(Value a, std::vector<int> shape) {
    if (shape_count(shape) != a.size()) throw ShapeMismatch("reshape changes element count");
    Node* out = a.node()->tape->make_node(std::move(shape), a.requires_grad());
    out->value = a.data();
    Node* an = a.node();
    out->backward = [an](Node& self) {
        if (!an->requires_grad) return;
        for (size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i];
    };
    return Value(out);
}

Value slice_cols(Value a, int col0, int width) {
    if (a.shape().size() != 2 || col0 < 0 || width <= 0 || col0 + width > a.cols()) {
        throw ShapeMismatch("slice_cols out of range");
    }
    const int m = a.rows(), d = a.cols();
    Node* out = a.node()->tape->make_node({m, width}, a.requires_grad());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < width; ++j)
            out->value[static_cast<size_t>(i) * width + j] = a.data()[static_cast<size_t>(i) * d + col0 + j];
    Node* an = a.node();
    out->backward = [an, m, d, col0, width](Node& self) {
        if (!an->requires_grad) return;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < width; ++j)
                an->grad[static_cast<size_t>(i) * d + col0 + j] += self.grad[static_cast<size_t>(i) * width + j];
    };
    return Value(out);
}

Value concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_cols of nothing");
    const int m = parts[0].rows();
    int total = 0;
    bool rg = false;
    for (const Value& p : parts) {
        if (p.shape().size() != 2 || p.rows() != m) throw ShapeMismatch("concat_cols row mismatch");
        total += p.cols();
        rg = rg || p.requires_grad();
    }
    Node* out = parts[0].node()->tape->make_node({m, total}, rg);
    int at = 0;
    for (const Value& p : parts) {
        const int d = p.cols();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < d; ++j)
                out->value[static_cast<size_t>(i) * total + at + j] = p.data()[static_cast<size_t>(i) * d + j];
        at += d;
    }
    std::vector<Node*> nodes;
    for (const Value& p : parts) nodes.push_back(p.node());
    out->backward = [nodes, m, total](Node& self) {
        int at = 0;
        for (Node* p : nodes) {
            const int d = p->cols();
            if (p->requires_grad) {
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < d; ++j)
                        p->grad[static_cast<size_t>(i) * d + j] += self.grad[static_cast<size_t>(i) * total + at + j];
            }
            at += d;
        }
    };
    return Value(out);
}

Value select_rows(Value a, std::vector<int> idx) {
    if (a.shape().size() != 2) throw ShapeMismatch("select_rows expects a matrix");
    const int m = a.rows(), d = a.cols();
    for (int r : idx)
        if (r < 0 || r >= m) throw ShapeMismatch("select_rows index out of range");
    Node* out = a.node()->tape->make_node({static_cast<int>(idx.size()), d}, a.requires_grad());
    for (size_t r = 0; r < idx.size(); ++r)
        std::memcpy(out->value.data() + r * d, a.data().data() + static_cast<size_t>(idx[r]) * d, sizeof(double) * d);
    Node* an = a.node();
    out->backward = [an, idx = std::move(idx), d](Node& self) {
        if (!an->requires_grad) return;
        for (size_t r = 0; r < idx.size(); ++r)
            for (int j = 0; j < d; ++j) an->grad[static_cast<size_t>(idx[r]) * d + j] += self.grad[r * d + j];
    };
    return Value(out);
}

Value scatter_rows(Value rows, std::vector<int> idx, int total_rows) {
    if (rows.shape().size() != 2 || static_cast<int>(idx.size()) != rows.rows()) {
        throw ShapeMismatch("scatter_rows index count mismatch");
    }
    const int d = rows.cols();
    for (int r : idx)
        if (r < 0 || r >= total_rows) throw ShapeMismatch("scatter_rows index out of range");
    Node* out = rows.node()->tape->make_node({total_rows, d}, rows.requires_grad());
    for (size_t r = 0; r < idx.size(); ++r)
        std::memcpy(out->value.data() + static_cast<size_t>(idx[r]) * d, rows.data().data() + r * d,
                    sizeof(double) * d);
    Node* rn = rows.node();
    out->backward = [rn, idx = std::move(idx), d](Node& self) {
        if (!rn->requires_grad) return;
        for (size_t r = 0; r < idx.size(); ++r)
            for (int j = 0; j < d; ++j) rn->grad[r * d + j] += self.grad[static_cast<size_t>(idx[r]) * d + j];
    };
    return Value(out);
}

Value gelu(Value a) {
    Node* out = a.node()->tape->make_node(a.shape(), a.requires_grad());
    for (size_t i = 0; i < out->size(); ++i) {
        const double x = a.data()[i];
        out->value[i] = 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
    }
    Node* an = a.node();
    out->backward = [an](Node& self) {
        if (!an->requires_grad) return;
        for (size_t i = 0; i < self.size(); ++i) {
            const double x = an->value[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
            const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
            an->grad[i] += self.grad[i] * (cdf + x * pdf);
        }
    };
    return Value(out);
}

Value rmsnorm(Value x, Value gain) {
    check_same_tape(x, gain);
    if (x.shape().size() != 2 || gain.shape().size() != 1 || gain.shape()[0] != x.cols()) {
        throw ShapeMismatch("rmsnorm expects [m,d] and gain [d]");
    }
    constexpr double kEps = 1e-8;
    const int m = x.rows(), d = x.cols();
    Node* out = x.node()->tape->make_node(x.shape(), x.requires_grad() || gain.requires_grad());
    std::vector<double> inv_rms(m);
    for (int i = 0; i < m; ++i) {
        double ss = 0.0;
        for (int j = 0; j < d; ++j) {
            const double v = x.data()[static_cast<size_t>(i) * d + j];
            ss += v * v;
        }
        inv_rms[i] = 1.0 / std::sqrt(ss / d + kEps);
        for (int j = 0; j < d; ++j) {
            out->value[static_cast<size_t>(i) * d + j] =
                x.data()[static_cast<size_t>(i) * d + j] * inv_rms[i] * gain.data()[j];
        }
    }
    Node* xn = x.node();
    Node* gn = gain.node();
    out->backward = [xn, gn, m, d, inv_rms = std::move(inv_rms)](Node& self) {
        for (int i = 0; i < m; ++i) {
            const double r = inv_rms[i];
            const double* xv = xn->value.data() + static_cast<size_t>(i) * d;
            const double* g = self.grad.data() + static_cast<size_t>(i) * d;
            if (gn->requires_grad) {
                for (int j = 0; j < d; ++j) gn->grad[j] += g[j] * xv[j] * r;
            }
            if (xn->requires_grad) {
                double dot = 0.0;
                for (int j = 0; j < d; ++j) dot += g[j] * gn->value[j] * xv[j];
                const double scale = dot * r * r * r / d;
                double* xg = xn->grad.data() + static_cast<size_t>(i) * d;
                for (int j = 0; j < d; ++j) xg[j] += g[j] * gn->value[j] * r - xv[j] * scale;
            }
        }
    };
    return Value(out);
}

Value l2_normalize(Value x) {
    if (x.shape().size() != 2) throw ShapeMismatch("l2_normalize expects a matrix");
    const int m = x.rows(), d = x.cols();
    Node* out = x.node()->tape->make_node(x.shape(), x.requires_grad());
    std::vector<double> inv_norm(m);
    for (int i = 0; i < m; ++i) {
        double ss = 0.0;
        for (int j = 0; j < d; ++j) {
            const double v = x.data()[static_cast<size_t>(i) * d + j];
            ss += v * v;
        }
        if (ss == 0.0) throw ShapeMismatch("l2_normalize of a zero row");
        inv_norm[i] = 1.0 / std::sqrt(ss);
        for (int j = 0; j < d; ++j)
            out->value[static_cast<size_t>(i) * d + j] = x.data()[static_cast<size_t>(i) * d + j] * inv_norm[i];
    }
    Node* xn = x.node();
    out->backward = [xn, m, d, inv_norm = std::move(inv_norm)](Node& self) {
        if (!xn->requires_grad) return;
        for (int i = 0; i < m; ++i) {
            const double r = inv_norm[i];
            const double* xv = xn->value.data() + static_cast<size_t>(i) * d;
            const double* g = self.grad.data() + static_cast<size_t>(i) * d;
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += g[j] * xv[j];
            dot *= r * r;
            double* xg = xn->grad.data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < d; ++j) xg[j] += r * (g[j] - xv[j] * dot * 1.0);
        }
    };
    return Value(out);
}

Value detach(Value a) {
    Node* out = a.node()->tape->make_node(a.shape(), false);
    out->value = a.data();
    return Value(out);
}

Value sum(Value a) {
    Node* out = a.node()->tape->make_node({1}, a.requires_grad());
    double s = 0.0;
    for (double v : a.data()) s += v;
    out->value[0] = s;
    Node* an = a.node();
    out->backward = [an](Node& self) {
        if (!an->requires_grad) return;
        for (size_t i = 0; i < an->size(); ++i) an->grad[i] += self.grad[0];
    };
    return Value(out);
}

Value masked_softmax(Value scores, std::shared_ptr<const attn::AttentionMask> mask) {
    if (scores.shape().size() != 2) throw ShapeMismatch("masked_softmax expects a matrix");
    const int m = scores.rows(), n = scores.cols();
    if (!mask || mask->n != n) throw ShapeMismatch("mask size does not match key count");
    if (m > mask->n) throw ShapeMismatch("more query rows than mask rows");
    Node* out = scores.node()->tape->make_node(scores.shape(), scores.requires_grad());
    for (int i = 0; i < m; ++i) {
        const double* row = scores.data().data() + static_cast<size_t>(i) * n;
        double* orow = out->value.data() + static_cast<size_t>(i) * n;
        double hi = -1e300;
        int admissible = 0;
        for (int j = 0; j < n; ++j) {
            if (mask->at(i, j)) {
                ++admissible;
                hi = std::max(hi, row[j]);
            }
        }
        if (admissible == 0) throw AllMaskedRow("row " + std::to_string(i) + " admits no key");
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            if (mask->at(i, j)) {
                orow[j] = std::exp(row[j] - hi);
                z += orow[j];
            } else {
                orow[j] = 0.0;
            }
        }
        for (int j = 0; j < n; ++j) orow[j] /= z;  // masked entries stay exactly 0.0
    }
    Node* sn = scores.node();
    out->backward = [sn, mask, m, n](Node& self) {
        if (!sn->requires_grad) return;
        for (int i = 0; i < m; ++i) {
            const double* y = self.value.data() + static_cast<size_t>(i) * n;
            const double* g = self.grad.data() + static_cast<size_t>(i) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += g[j] * y[j];
            double* sg = sn->grad.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                if (mask->at(i, j)) sg[j] += y[j] * (g[j] - dot);
            }
        }
    };
    return Value(out);
}

Value mse_to_const(Value pred, const std::vector<double>& target) {
    if (pred.size() != target.size()) throw ShapeMismatch("mse target size mismatch");
    Node* out = pred.node()->tape->make_node({1}, pred.requires_grad());
    const double inv = 1.0 / static_cast<double>(pred.size());
    double s = 0.0;
    for (size_t i = 0; i < target.size(); ++i) {
        const double d = pred.data()[i] - target[i];
        s += d * d;
    }
    out->value[0] = s * inv;
    Node* pn = pred.node();
    out->backward = [pn, target, inv](Node& self) {
        if (!pn->requires_grad) return;
        for (size_t i = 0; i < target.size(); ++i) {
            pn->grad[i] += self.grad[0] * 2.0 * inv * (pn->value[i] - target[i]);
        }
    };
    return Value(out);
}

Value nll_of_logits(Value logits, const std::vector<int>& targets) {
    if (logits.shape().size() != 2 || static_cast<int>(targets.size()) != logits.rows()) {
        throw ShapeMismatch("nll_of_logits expects [m,V] logits and m targets");
    }
    const int m = logits.rows(), V = logits.cols();
    int valid = 0;
    for (int t : targets) {
        if (t >= V) throw ShapeMismatch("target id out of vocabulary range");
        if (t >= 0) ++valid;
    }
    if (valid == 0) throw std::invalid_argument("nll_of_logits: no target positions");
    Node* out = logits.node()->tape->make_node({1}, logits.requires_grad());
    std::vector<double> log_z(m, 0.0);
    double loss = 0.0;
    for (int i = 0; i < m; ++i) {
        if (targets[i] < 0) continue;
        const double* row = logits.data().data() + static_cast<size_t>(i) * V;
        double top = row[0];
        for (int j = 1; j < V; ++j) top = std::max(top, row[j]);
        double z = 0.0;
        for (int j = 0; j < V; ++j) z += std::exp(row[j] - top);
        log_z[i] = std::log(z) + top;
        loss -= row[targets[i]] - log_z[i];
    }
    out->value[0] = loss / valid;
    Node* ln = logits.node();
    out->backward = [ln, targets, m, V, valid, log_z = std::move(log_z)](Node& self) {
        if (!ln->requires_grad) return;
        const double gscale = self.grad[0] / valid;
        for (int i = 0; i < m; ++i) {
            if (targets[i] < 0) continue;
            const double* row = ln->value.data() + static_cast<size_t>(i) * V;
            double* g = ln->grad.data() + static_cast<size_t>(i) * V;
            for (int j = 0; j < V; ++j) {
                const double p = std::exp(row[j] - log_z[i]);
                g[j] += gscale * (p - (j == targets[i] ? 1.0 : 0.0));
            }
        }
    };
    return Value(out);
}

// --- gradient checking -------------------------------------------------------

Value ParamBinder::bind(const std::string& name, std::vector<int> shape, std::vector<double>* storage) {
    Value v = tape_->leaf(std::move(shape), *storage, true);
    entries_.push_back(Entry{name, storage, v.node()});
    return v;
}

std::string GradCheckReport::format() const {
    std::ostringstream ss;
    for (const auto& item : items) {
        ss << (item.pass ? "  ok  " : " FAIL ") << item.name << "  max_rel_err=" << item.max_rel_err
           << "  (checked " << item.checked << " components)\n";
    }
    ss << (pass ? "PASS" : "FAIL") << "  worst relative error " << worst << "\n";
    return ss.str();
}

GradCheckReport grad_check(const BoundLoss& f, double tolerance, double step, Rng& rng, int samples_per_tensor) {
    GradCheckReport report;

    Tape tape;
    ParamBinder binder(tape);
    Value loss = f(tape, binder);
    tape.backward(loss);

    auto eval = [&f]() {
        Tape t;
        ParamBinder b(t);
        return f(t, b).scalar();
    };

    report.worst = 0.0;
    report.pass = true;
    for (const auto& entry : binder.entries()) {
        GradCheckItem item;
        item.name = entry.name;
        const size_t count = entry.storage->size();
        std::vector<size_t> picks;
        if (static_cast<int>(count) <= samples_per_tensor) {
            for (size_t i = 0; i < count; ++i) picks.push_back(i);
        } else {
            for (int i = 0; i < samples_per_tensor; ++i) picks.push_back(rng.below(count));
        }
        for (size_t j : picks) {
            const double saved = (*entry.storage)[j];
            (*entry.storage)[j] = saved + step;
            const double up = eval();
            (*entry.storage)[j] = saved - step;
            const double down = eval();
            (*entry.storage)[j] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double analytic = entry.node->grad[j];
            const double rel =
                std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-4});
            item.max_rel_err = std::max(item.max_rel_err, rel);
            ++item.checked;
        }
        item.pass = item.max_rel_err < tolerance;
        report.worst = std::max(report.worst, item.max_rel_err);
        report.pass = report.pass && item.pass;
        report.items.push_back(std::move(item));
    }
    return report;
}

}  // namespace director::nn
