#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "kobe/errors.hpp"
#include "kobe/rng.hpp"

// Reverse-mode autodiff over dense float32 tensors of rank <= 3.
// A Tape records primitive applications in topological order; backward()
// walks the record once and accumulates gradients into the Parameters
// reachable from the loss. Tapes are single-owner and reset between steps.

namespace kobe {

struct Shape {
    int8_t rank = 0;
    int d[3] = {0, 0, 0};

    static Shape scalar() { return Shape{}; }
    static Shape vec(int n) { return Shape{1, {n, 0, 0}}; }
    static Shape mat(int r, int c) { return Shape{2, {r, c, 0}}; }
    static Shape cube(int a, int b, int c) { return Shape{3, {a, b, c}}; }

    size_t numel() const {
        size_t n = 1;
        for (int i = 0; i < rank; ++i) n *= static_cast<size_t>(d[i]);
        return n;
    }
    int rows() const { return rank == 2 ? d[0] : (rank == 1 ? 1 : 1); }
    int cols() const { return rank == 2 ? d[1] : (rank == 1 ? d[0] : 1); }
    bool operator==(const Shape& o) const {
        if (rank != o.rank) return false;
        for (int i = 0; i < rank; ++i)
            if (d[i] != o.d[i]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }
    std::string str() const;
};

// Plain dense value, used outside the tape (encoder outputs, checkpoints,
// fixtures). grad is either empty or numel-sized.
struct Tensor {
    Shape shape;
    std::vector<float> v;
    std::vector<float> g;

    Tensor() = default;
    Tensor(Shape s, std::vector<float> values) : shape(s), v(std::move(values)) {}
    static Tensor zeros(Shape s) { return Tensor(s, std::vector<float>(s.numel(), 0.0f)); }
    float& at(int i, int j) { return v[static_cast<size_t>(i) * shape.d[1] + j]; }
    float at(int i, int j) const { return v[static_cast<size_t>(i) * shape.d[1] + j]; }
};

// A named, persistent learnable buffer. Gradients accumulate here across
// backward() calls until zero_grad().
struct Parameter {
    std::string name;
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;

    Parameter() = default;
    Parameter(std::string n, Shape s)
        : name(std::move(n)), shape(s), value(s.numel(), 0.0f), grad(s.numel(), 0.0f) {}

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
    size_t numel() const { return shape.numel(); }
};

enum class Op : uint8_t {
    Leaf,
    Input,
    Matmul,
    MatmulNT,
    Add,
    AddRow,
    AddCol,
    Mul,
    MulRow,
    Scale,
    Relu,
    Softmax,
    ConcatRows,
    ConcatCols,
    SliceRows,
    SliceCols,
    GatherRows,
    LayerNorm,
    MaxRows,
    MaxCols,
    TileRows,
    Reshape,
    Dropout,
    CrossEntropy,
    SumAll,
    Im2Row,
};

class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void reset();

    // -- node creation ------------------------------------------------------
    int leaf(Parameter& p);
    int input(const Shape& s, const float* data);
    int input(const Shape& s, const std::vector<float>& data);
    int constant(const Shape& s, float fill);

    int matmul(int a, int b);     // [m x k] * [k x n]
    int matmul_nt(int a, int b);  // [m x k] * [n x k]^T
    int add(int a, int b);        // same shape
    int add_row(int a, int row);  // [n x d] + [d]
    int add_col(int a, int col);  // [n x m] + [n]
    int mul(int a, int b);        // Hadamard, same shape
    int mul_row(int a, int row);  // [n x d] o [d]
    int scale(int a, float s);
    int relu(int a);
    int softmax(int a, int axis);  // slices along `axis` sum to 1
    int softmax_rows(int a) { return softmax(a, shape(a).rank - 1); }
    int concat_rows(const std::vector<int>& parts);
    int concat_cols(const std::vector<int>& parts);
    int slice_rows(int a, int r0, int r1);
    int slice_cols(int a, int c0, int c1);
    int gather_rows(int table, const std::vector<int>& ids);
    int layer_norm(int x, int gain, int bias);
    int max_rows(int a);  // [n x m] -> [n]
    int max_cols(int a);  // [n x m] -> [m]
    int tile_rows(int a, int n);
    int reshape(int a, const Shape& s);
    int dropout(int a, float rate, Rng& rng);  // rate 0 is the identity
    int cross_entropy_mean(int logits, const std::vector<int>& targets, int ignore_id = -1);
    int sum_all(int a);
    int im2row(int a, int window);  // [n x d] -> [n-w+1 x w*d]

    // -- access -------------------------------------------------------------
    const Shape& shape(int id) const { return nodes_[check(id)].shape; }
    const float* val(int id) const;
    const float* grad(int id) const;
    float scalar_val(int id) const;
    Tensor tensor(int id) const;
    size_t size() const { return nodes_.size(); }

    void backward(int loss);
    bool backward_done() const { return backward_done_; }

  private:
    struct Node {
        Op op;
        bool rg = false;
        Shape shape;
        int in0 = -1, in1 = -1, in2 = -1;
        size_t val = 0;   // offset into vals_ (unused for Leaf)
        size_t aux = 0;   // offset into aux_
        size_t idx = 0;   // offset into ints_
        int nidx = 0;
        float a = 0.0f;
        int i0 = 0, i1 = 0;
        Parameter* param = nullptr;
        std::vector<int> extra;  // concat inputs
    };

    int check(int id) const;
    int push(Node n, size_t numel);
    float* vptr(int id);
    const float* vptr(int id) const;
    float* gptr(int id);
    bool rg_of(int id) const { return nodes_[id].rg; }
    void softmax_slices(const float* x, float* y, int nslice, int len, int stride) const;
    void backward_node(int id);

    std::vector<Node> nodes_;
    std::vector<float> vals_;
    std::vector<float> aux_;
    std::vector<float> grads_;
    std::vector<int> ints_;
    std::unordered_map<const Parameter*, int> leaf_cache_;
    bool backward_done_ = false;
};

// Builds the loss on a fresh tape and returns the loss node id. Must be
// deterministic across calls (no live dropout).
using LossBuilder = std::function<int(Tape&)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    size_t worst_index = 0;
    double analytic = 0.0, numeric = 0.0;
};

// Central-difference check of d(loss)/d(param) for every entry of every
// listed parameter. Error metric: |analytic - numeric| / max(1, |analytic|,
// |numeric|), maximised over entries.
GradCheckReport finite_diff_check(const LossBuilder& f, const std::vector<Parameter*>& params, float eps = 1e-3f);

}  // namespace kobe
