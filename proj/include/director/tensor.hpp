#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "director/common.hpp"
#include "director/mask.hpp"

namespace director::nn {

class ShapeMismatch : public std::runtime_error {
public:
    explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};
class AllMaskedRow : public std::runtime_error {
public:
    explicit AllMaskedRow(const std::string& what) : std::runtime_error(what) {}
};
class NonScalarLoss : public std::runtime_error {
public:
    explicit NonScalarLoss(const std::string& what) : std::runtime_error(what) {}
};

class Tape;

struct Node {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::function<void(Node&)> backward;  // scatters this node's grad into its parents
    Tape* tape = nullptr;

    size_t size() const { return value.size(); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

// Handle to a tape-owned node. Cheap to copy; the tape owns storage.
class Value {
public:
    Value() = default;
    explicit Value(Node* node) : node_(node) {}

    Node* node() const { return node_; }
    const std::vector<int>& shape() const { return node_->shape; }
    const std::vector<double>& data() const { return node_->value; }
    std::vector<double>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    size_t size() const { return node_->size(); }
    int rows() const { return node_->rows(); }
    int cols() const { return node_->cols(); }
    double scalar() const;

private:
    Node* node_ = nullptr;
};

// Records operations in execution order; single-threaded, one per training
// step. backward() may be called repeatedly and accumulates into leaves.
class Tape {
public:
    Value leaf(std::vector<int> shape, std::vector<double> data, bool requires_grad);
    Value constant(std::vector<int> shape, std::vector<double> data) {
        return leaf(std::move(shape), std::move(data), false);
    }
    Value scalar(double v) { return constant({1}, {v}); }

    Node* make_node(std::vector<int> shape, bool requires_grad);
    void backward(Value loss);
    size_t node_count() const { return nodes_.size(); }

private:
    std::vector<std::unique_ptr<Node>> nodes_;
};

// --- operations ------------------------------------------------------------

Value matmul(Value a, Value b);
Value transpose(Value a);
Value add(Value a, Value b);         // identical shapes
Value add_rowvec(Value a, Value b);  // [m,d] + [d], broadcast over rows
Value mul(Value a, Value b);         // elementwise
Value mul_rowvec(Value a, Value b);  // [m,d] * [d], broadcast over rows
Value scale(Value a, double c);
Value reshape(Value a, std::vector<int> shape);
Value slice_cols(Value a, int col0, int width);
Value concat_cols(const std::vector<Value>& parts);
Value select_rows(Value a, std::vector<int> idx);
Value scatter_rows(Value rows, std::vector<int> idx, int total_rows);
Value gelu(Value a);
Value rmsnorm(Value x, Value gain);  // row-wise over the last dimension
Value l2_normalize(Value x);         // rows scaled to exactly unit norm
Value detach(Value a);
Value sum(Value a);  // scalar

// Row-wise softmax over admissible keys only; masked positions come out
// exactly zero. Throws AllMaskedRow when a row admits no key.
Value masked_softmax(Value scores, std::shared_ptr<const attn::AttentionMask> mask);

// Mean squared error against a constant target, averaged over all elements.
Value mse_to_const(Value pred, const std::vector<double>& target);

// Mean negative log-likelihood of target ids under row-wise softmax.
// Rows with target < 0 are skipped; at least one row must remain.
Value nll_of_logits(Value logits, const std::vector<int>& targets);

void backward(Value loss);

// --- gradient checking -------------------------------------------------------

// Associates named external parameter storage with tape leaves so that a
// training step (or a finite-difference probe) can find the gradients.
class ParamBinder {
public:
    explicit ParamBinder(Tape& tape) : tape_(&tape) {}

    Value bind(const std::string& name, std::vector<int> shape, std::vector<double>* storage);

    struct Entry {
        std::string name;
        std::vector<double>* storage;
        Node* node;
    };
    const std::vector<Entry>& entries() const { return entries_; }

private:
    Tape* tape_;
    std::vector<Entry> entries_;
};

using BoundLoss = std::function<Value(Tape&, ParamBinder&)>;

struct GradCheckItem {
    std::string name;
    double max_rel_err = 0.0;
    int checked = 0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckItem> items;
    double worst = 0.0;
    bool pass = false;

    std::string format() const;
};

// Central finite differences at the given step against the analytic
// gradients of f. Checks up to samples_per_tensor randomly chosen
// components of each bound tensor.
GradCheckReport grad_check(const BoundLoss& f, double tolerance, double step, Rng& rng, int samples_per_tensor);

}  // namespace director::nn
