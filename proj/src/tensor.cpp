#include "kobe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "kobe/kernels.hpp"

namespace kobe {

namespace {
constexpr float kNegInf = -std::numeric_limits<float>::infinity();

std::string shapes2(const Shape& a, const Shape& b) { return a.str() + " and " + b.str(); }
}  // namespace

std::string Shape::str() const {
    std::ostringstream os;
    os << '[';
    for (int i = 0; i < rank; ++i) {
        if (i) os << 'x';
        os << d[i];
    }
    os << ']';
    return os.str();
}

int Tape::check(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) throw TapeError("node id not on the active tape");
    return id;
}

void Tape::reset() {
    nodes_.clear();
    vals_.clear();
    aux_.clear();
    grads_.clear();
    ints_.clear();
    leaf_cache_.clear();
    backward_done_ = false;
}

int Tape::push(Node n, size_t numel) {
    if (n.op != Op::Leaf) {
        n.val = vals_.size();
        vals_.resize(vals_.size() + numel);
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size() - 1);
}

float* Tape::vptr(int id) {
    Node& n = nodes_[id];
    return n.op == Op::Leaf ? n.param->value.data() : vals_.data() + n.val;
}

const float* Tape::vptr(int id) const {
    const Node& n = nodes_[id];
    return n.op == Op::Leaf ? n.param->value.data() : vals_.data() + n.val;
}

float* Tape::gptr(int id) {
    Node& n = nodes_[id];
    return n.op == Op::Leaf ? n.param->grad.data() : grads_.data() + n.val;
}

const float* Tape::val(int id) const { return vptr(check(id)); }

const float* Tape::grad(int id) const {
    check(id);
    if (!backward_done_) throw TapeError("grad requested before backward()");
    const Node& n = nodes_[id];
    return n.op == Op::Leaf ? n.param->grad.data() : grads_.data() + n.val;
}

float Tape::scalar_val(int id) const {
    if (shape(id).numel() != 1) throw ContractError("scalar_val on non-scalar node " + shape(id).str());
    return *val(id);
}

Tensor Tape::tensor(int id) const {
    const float* p = val(id);
    return Tensor(shape(id), std::vector<float>(p, p + shape(id).numel()));
}

int Tape::leaf(Parameter& p) {
    auto it = leaf_cache_.find(&p);
    if (it != leaf_cache_.end()) return it->second;
    Node n;
    n.op = Op::Leaf;
    n.rg = true;
    n.shape = p.shape;
    n.param = &p;
    int id = push(std::move(n), 0);
    leaf_cache_.emplace(&p, id);
    return id;
}

int Tape::input(const Shape& s, const float* data) {
    const size_t nel = s.numel();
    Node n;
    n.op = Op::Input;
    n.shape = s;
    int id = push(std::move(n), nel);
    std::memcpy(vptr(id), data, nel * sizeof(float));
    return id;
}

int Tape::input(const Shape& s, const std::vector<float>& data) {
    if (data.size() != s.numel())
        throw ShapeError("input data size " + std::to_string(data.size()) + " does not match " + s.str());
    return input(s, data.data());
}

int Tape::constant(const Shape& s, float fill) {
    const size_t nel = s.numel();
    Node n;
    n.op = Op::Input;
    n.shape = s;
    int id = push(std::move(n), nel);
    std::fill_n(vptr(id), nel, fill);
    return id;
}

int Tape::matmul(int a, int b) {
    const Shape sa = shape(a), sb = shape(b);
    if (sa.rank != 2 || sb.rank != 2) throw ShapeError("matmul requires rank-2 operands, got " + shapes2(sa, sb));
    if (sa.d[1] != sb.d[0]) throw ShapeError("matmul inner dimensions disagree: " + shapes2(sa, sb));
    Node n;
    n.op = Op::Matmul;
    n.rg = rg_of(a) || rg_of(b);
    n.shape = Shape::mat(sa.d[0], sb.d[1]);
    n.in0 = a;
    n.in1 = b;
    int id = push(std::move(n), n.shape.numel());
    kern::active().matmul_nn(vptr(id), vptr(a), vptr(b), sa.d[0], sa.d[1], sb.d[1], false);
    return id;
}

int Tape::matmul_nt(int a, int b) {
    const Shape sa = shape(a), sb = shape(b);
    if (sa.rank != 2 || sb.rank != 2) throw ShapeError("matmul_nt requires rank-2 operands, got " + shapes2(sa, sb));
    if (sa.d[1] != sb.d[1]) throw ShapeError("matmul_nt inner dimensions disagree: " + shapes2(sa, sb));
    Node n;
    n.op = Op::MatmulNT;
    n.rg = rg_of(a) || rg_of(b);
    n.shape = Shape::mat(sa.d[0], sb.d[0]);
    n.in0 = a;
    n.in1 = b;
    int id = push(std::move(n), n.shape.numel());
    kern::active().matmul_nt(vptr(id), vptr(a), vptr(b), sa.d[0], sa.d[1], sb.d[0], false);
    return id;
}

int Tape::add(int a, int b) {
    if (shape(a) != shape(b)) throw ShapeError("add shape mismatch: " + shapes2(shape(a), shape(b)));
    Node n;
    n.op = Op::Add;
    n.rg = rg_of(a) || rg_of(b);
    n.shape = shape(a);
    n.in0 = a;
    n.in1 = b;
    int id = push(std::move(n), n.shape.numel());
    kern::active().add(vptr(id), vptr(a), vptr(b), n.shape.numel());
    return id;
}

int Tape::add_row(int a, int row) {
    const Shape sa = shape(a), sr = shape(row);
    const int cols = sr.rank == 1 ? sr.d[0] : (sr.rank == 2 && sr.d[0] == 1 ? sr.d[1] : -1);
    if (sa.rank != 2 || cols != sa.d[1])
        throw ShapeError("add_row expects [n x d] + [d], got " + shapes2(sa, sr));
    Node n;
    n.op = Op::AddRow;
    n.rg = rg_of(a) || rg_of(row);
    n.shape = sa;
    n.in0 = a;
    n.in1 = row;
    int id = push(std::move(n), n.shape.numel());
    float* y = vptr(id);
    const float* x = vptr(a);
    const float* r = vptr(row);
    for (int i = 0; i < sa.d[0]; ++i) kern::active().add(y + i * cols, x + i * cols, r, cols);
    return id;
}

int Tape::add_col(int a, int col) {
    const Shape sa = shape(a), sc = shape(col);
    const int rows = sc.rank == 1 ? sc.d[0] : (sc.rank == 2 && sc.d[1] == 1 ? sc.d[0] : -1);
    if (sa.rank != 2 || rows != sa.d[0])
        throw ShapeError("add_col expects [n x m] + [n], got " + shapes2(sa, sc));
    Node n;
    n.op = Op::AddCol;
    n.rg = rg_of(a) || rg_of(col);
    n.shape = sa;
    n.in0 = a;
    n.in1 = col;
    int id = push(std::move(n), n.shape.numel());
    float* y = vptr(id);
    const float* x = vptr(a);
    const float* c = vptr(col);
    for (int i = 0; i < sa.d[0]; ++i) {
        const float ci = c[i];
        for (int j = 0; j < sa.d[1]; ++j) y[i * sa.d[1] + j] = x[i * sa.d[1] + j] + ci;
    }
    return id;
}

int Tape::mul(int a, int b) {
    if (shape(a) != shape(b)) throw ShapeError("mul shape mismatch: " + shapes2(shape(a), shape(b)));
    Node n;
    n.op = Op::Mul;
    n.rg = rg_of(a) || rg_of(b);
    n.shape = shape(a);
    n.in0 = a;
    n.in1 = b;
    int id = push(std::move(n), n.shape.numel());
    kern::active().mul(vptr(id), vptr(a), vptr(b), n.shape.numel());
    return id;
}

int Tape::mul_row(int a, int row) {
    const Shape sa = shape(a), sr = shape(row);
    const int cols = sr.rank == 1 ? sr.d[0] : (sr.rank == 2 && sr.d[0] == 1 ? sr.d[1] : -1);
    if (sa.rank != 2 || cols != sa.d[1])
        throw ShapeError("mul_row expects [n x d] o [d], got " + shapes2(sa, sr));
    Node n;
    n.op = Op::MulRow;
    n.rg = rg_of(a) || rg_of(row);
    n.shape = sa;
    n.in0 = a;
    n.in1 = row;
    int id = push(std::move(n), n.shape.numel());
    float* y = vptr(id);
    const float* x = vptr(a);
    const float* r = vptr(row);
    for (int i = 0; i < sa.d[0]; ++i) kern::active().mul(y + i * cols, x + i * cols, r, cols);
    return id;
}

int Tape::scale(int a, float s) {
    Node n;
    n.op = Op::Scale;
    n.rg = rg_of(a);
    n.shape = shape(a);
    n.in0 = a;
    n.a = s;
    int id = push(std::move(n), n.shape.numel());
    kern::active().scale(vptr(id), vptr(a), s, n.shape.numel());
    return id;
}

int Tape::relu(int a) {
    Node n;
    n.op = Op::Relu;
    n.rg = rg_of(a);
    n.shape = shape(a);
    n.in0 = a;
    int id = push(std::move(n), n.shape.numel());
    kern::active().relu(vptr(id), vptr(a), n.shape.numel());
    return id;
}

// Max-subtracted softmax over strided slices. -inf inputs get exact weight 0;
// NaN or +inf inputs are a numeric error.
void Tape::softmax_slices(const float* x, float* y, int nslice, int len, int stride) const {
    for (int s = 0; s < nslice; ++s) {
        const int base = (stride == 1) ? s * len : s;
        float mx = kNegInf;
        for (int i = 0; i < len; ++i) {
            const float v = x[base + i * stride];
            if (std::isnan(v) || v == std::numeric_limits<float>::infinity())
                throw NumericError("softmax input contains NaN or +inf");
            mx = std::max(mx, v);
        }
        if (mx == kNegInf) throw NumericError("softmax slice is entirely masked");
        float z = 0.0f;
        for (int i = 0; i < len; ++i) {
            const float e = std::exp(x[base + i * stride] - mx);
            y[base + i * stride] = e;
            z += e;
        }
        const float inv = 1.0f / z;
        for (int i = 0; i < len; ++i) y[base + i * stride] *= inv;
    }
}

int Tape::softmax(int a, int axis) {
    const Shape sa = shape(a);
    if (sa.rank < 1 || sa.rank > 2) throw ShapeError("softmax supports rank 1 or 2, got " + sa.str());
    if (axis < 0 || axis >= sa.rank) throw ContractError("softmax axis out of range");
    Node n;
    n.op = Op::Softmax;
    n.rg = rg_of(a);
    n.shape = sa;
    n.in0 = a;
    n.i0 = axis;
    int id = push(std::move(n), sa.numel());
    const float* x = vptr(a);
    float* y = vptr(id);
    if (sa.rank == 1) {
        softmax_slices(x, y, 1, sa.d[0], 1);
    } else if (axis == 1) {
        softmax_slices(x, y, sa.d[0], sa.d[1], 1);
    } else {
        softmax_slices(x, y, sa.d[1], sa.d[0], sa.d[1]);
    }
    return id;
}

int Tape::concat_rows(const std::vector<int>& parts) {
    if (parts.empty()) throw ContractError("concat_rows of zero parts");
    int cols = shape(parts[0]).d[1];
    int rows = 0;
    bool rg = false;
    for (int p : parts) {
        const Shape s = shape(p);
        if (s.rank != 2 || s.d[1] != cols)
            throw ShapeError("concat_rows column mismatch: " + shapes2(shape(parts[0]), s));
        rows += s.d[0];
        rg = rg || rg_of(p);
    }
    Node n;
    n.op = Op::ConcatRows;
    n.rg = rg;
    n.shape = Shape::mat(rows, cols);
    n.extra = parts;
    int id = push(std::move(n), n.shape.numel());
    float* y = vptr(id);
    for (int p : parts) {
        const size_t nel = shape(p).numel();
        std::memcpy(y, vptr(p), nel * sizeof(float));
        y += nel;
    }
    return id;
}

int Tape::concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw ContractError("concat_cols of zero parts");
    int rows = shape(parts[0]).d[0];
    int cols = 0;
    bool rg = false;
    for (int p : parts) {
        const Shape s = shape(p);
        if (s.rank != 2 || s.d[0] != rows)
            throw ShapeError("concat_cols row mismatch: " + shapes2(shape(parts[0]), s));
        cols += s.d[1];
        rg = rg || rg_of(p);
    }
    Node n;
    n.op = Op::ConcatCols;
    n.rg = rg;
    n.shape = Shape::mat(rows, cols);
    n.extra = parts;
    int id = push(std::move(n), n.shape.numel());
    float* y = vptr(id);
    int at = 0;
    for (int p : parts) {
        const int pc = shape(p).d[1];
        const float* x = vptr(p);
        for (int i = 0; i < rows; ++i) std::memcpy(y + i * cols + at, x + i * pc, pc * sizeof(float));
        at += pc;
    }
    return id;
}

int Tape::slice_rows(int a, int r0, int r1) {
    const Shape sa = shape(a);
    if (sa.rank != 2) throw ShapeError("slice_rows requires rank 2, got " + sa.str());
    if (r0 < 0 || r1 > sa.d[0] || r0 >= r1) throw ContractError("slice_rows bounds invalid");
    Node n;
    n.op = Op::SliceRows;
    n.rg = rg_of(a);
    n.shape = Shape::mat(r1 - r0, sa.d[1]);
    n.in0 = a;
    n.i0 = r0;
    n.i1 = r1;
    int id = push(std::move(n), n.shape.numel());
    std::memcpy(vptr(id), vptr(a) + static_cast<size_t>(r0) * sa.d[1], n.shape.numel() * sizeof(float));
    return id;
}

int Tape::slice_cols(int a, int c0, int c1) {
    const Shape sa = shape(a);
    if (sa.rank != 2) throw ShapeError("slice_cols requires rank 2, got " + sa.str());
    if (c0 < 0 || c1 > sa.d[1] || c0 >= c1) throw ContractError("slice_cols bounds invalid");
    Node n;
    n.op = Op::SliceCols;
    n.rg = rg_of(a);
    n.shape = Shape::mat(sa.d[0], c1 - c0);
    n.in0 = a;
    n.i0 = c0;
    n.i1 = c1;
    int id = push(std::move(n), n.shape.numel());
    float* y = vptr(id);
    const float* x = vptr(a);
    const int w = c1 - c0;
    for (int i = 0; i < sa.d[0]; ++i) std::memcpy(y + i * w, x + i * sa.d[1] + c0, w * sizeof(float));
    return id;
}

int Tape::gather_rows(int table, const std::vector<int>& ids) {
    const Shape st = shape(table);
    if (st.rank != 2) throw ShapeError("gather_rows table must be rank 2, got " + st.str());
    for (int v : ids) {
        if (v < 0 || v >= st.d[0])
            throw ContractError("gather_rows id " + std::to_string(v) + " outside table of " +
                                std::to_string(st.d[0]) + " rows");
    }
    Node n;
    n.op = Op::GatherRows;
    n.rg = rg_of(table);
    n.shape = Shape::mat(static_cast<int>(ids.size()), st.d[1]);
    n.in0 = table;
    n.idx = ints_.size();
    n.nidx = static_cast<int>(ids.size());
    ints_.insert(ints_.end(), ids.begin(), ids.end());
    int id = push(std::move(n), n.shape.numel());
    float* y = vptr(id);
    const float* t = vptr(table);
    const int* ix = ints_.data() + nodes_[id].idx;
    for (int i = 0; i < nodes_[id].nidx; ++i)
        std::memcpy(y + static_cast<size_t>(i) * st.d[1], t + static_cast<size_t>(ix[i]) * st.d[1],
                    st.d[1] * sizeof(float));
    return id;
}

int Tape::layer_norm(int x, int gain, int bias) {
    const Shape sx = shape(x);
    const int d = sx.d[1];
    if (sx.rank != 2) throw ShapeError("layer_norm requires rank 2, got " + sx.str());
    if (shape(gain).numel() != static_cast<size_t>(d) || shape(bias).numel() != static_cast<size_t>(d))
        throw ShapeError("layer_norm gain/bias must have " + std::to_string(d) + " entries");
    Node n;
    n.op = Op::LayerNorm;
    n.rg = rg_of(x) || rg_of(gain) || rg_of(bias);
    n.shape = sx;
    n.in0 = x;
    n.in1 = gain;
    n.in2 = bias;
    n.aux = aux_.size();
    aux_.resize(aux_.size() + 2 * static_cast<size_t>(sx.d[0]));
    int id = push(std::move(n), sx.numel());
    float* y = vptr(id);
    const float* xv = vptr(x);
    const float* g = vptr(gain);
    const float* b = vptr(bias);
    float* st = aux_.data() + nodes_[id].aux;
    constexpr float eps = 1e-5f;
    for (int i = 0; i < sx.d[0]; ++i) {
        const float* row = xv + static_cast<size_t>(i) * d;
        const float mean = kern::active().sum(row, d) / static_cast<float>(d);
        float var = 0.0f;
        for (int j = 0; j < d; ++j) {
            const float c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<float>(d);
        const float rstd = 1.0f / std::sqrt(var + eps);
        st[2 * i] = mean;
        st[2 * i + 1] = rstd;
        float* yr = y + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) yr[j] = g[j] * ((row[j] - mean) * rstd) + b[j];
    }
    return id;
}

int Tape::max_rows(int a) {
    const Shape sa = shape(a);
    if (sa.rank != 2) throw ShapeError("max_rows requires rank 2, got " + sa.str());
    Node n;
    n.op = Op::MaxRows;
    n.rg = rg_of(a);
    n.shape = Shape::vec(sa.d[0]);
    n.in0 = a;
    n.idx = ints_.size();
    n.nidx = sa.d[0];
    ints_.resize(ints_.size() + sa.d[0]);
    int id = push(std::move(n), n.shape.numel());
    float* y = vptr(id);
    const float* x = vptr(a);
    int* arg = ints_.data() + nodes_[id].idx;
    for (int i = 0; i < sa.d[0]; ++i) {
        const float* row = x + static_cast<size_t>(i) * sa.d[1];
        int best = 0;
        for (int j = 1; j < sa.d[1]; ++j)
            if (row[j] > row[best]) best = j;
        arg[i] = best;
        y[i] = row[best];
    }
    return id;
}

int Tape::max_cols(int a) {
    const Shape sa = shape(a);
    if (sa.rank != 2) throw ShapeError("max_cols requires rank 2, got " + sa.str());
    Node n;
    n.op = Op::MaxCols;
    n.rg = rg_of(a);
    n.shape = Shape::vec(sa.d[1]);
    n.in0 = a;
    n.idx = ints_.size();
    n.nidx = sa.d[1];
    ints_.resize(ints_.size() + sa.d[1]);
    int id = push(std::move(n), n.shape.numel());
    float* y = vptr(id);
    const float* x = vptr(a);
    int* arg = ints_.data() + nodes_[id].idx;
    for (int j = 0; j < sa.d[1]; ++j) {
        int best = 0;
        for (int i = 1; i < sa.d[0]; ++i)
            if (x[static_cast<size_t>(i) * sa.d[1] + j] > x[static_cast<size_t>(best) * sa.d[1] + j]) best = i;
        arg[j] = best;
        y[j] = x[static_cast<size_t>(best) * sa.d[1] + j];
    }
    return id;
}

int Tape::tile_rows(int a, int ncopy) {
    const Shape sa = shape(a);
    const int cols = sa.rank == 1 ? sa.d[0] : (sa.rank == 2 && sa.d[0] == 1 ? sa.d[1] : -1);
    if (cols < 0) throw ShapeError("tile_rows expects a row vector, got " + sa.str());
    if (ncopy < 1) throw ContractError("tile_rows count must be >= 1");
    Node n;
    n.op = Op::TileRows;
    n.rg = rg_of(a);
    n.shape = Shape::mat(ncopy, cols);
    n.in0 = a;
    n.i0 = ncopy;
    int id = push(std::move(n), n.shape.numel());
    float* y = vptr(id);
    const float* x = vptr(a);
    for (int i = 0; i < ncopy; ++i) std::memcpy(y + static_cast<size_t>(i) * cols, x, cols * sizeof(float));
    return id;
}

int Tape::reshape(int a, const Shape& s) {
    const size_t nel = s.numel();
    if (nel != shape(a).numel())
        throw ShapeError("reshape element count mismatch: " + shapes2(shape(a), s));
    Node n;
    n.op = Op::Reshape;
    n.rg = rg_of(a);
    n.shape = s;
    n.in0 = a;
    int id = push(std::move(n), nel);
    std::memcpy(vptr(id), vptr(a), nel * sizeof(float));
    return id;
}

int Tape::dropout(int a, float rate, Rng& rng) {
    if (rate < 0.0f || rate >= 1.0f) throw ConfigError("dropout rate must be in [0, 1)");
    if (rate == 0.0f) return a;
    Node n;
    n.op = Op::Dropout;
    n.rg = rg_of(a);
    n.shape = shape(a);
    n.in0 = a;
    n.a = rate;
    const size_t nel = shape(a).numel();
    n.aux = aux_.size();
    aux_.resize(aux_.size() + nel);
    int id = push(std::move(n), nel);
    float* y = vptr(id);
    const float* x = vptr(a);
    float* mask = aux_.data() + nodes_[id].aux;
    const float keep_scale = 1.0f / (1.0f - rate);
    for (size_t i = 0; i < nel; ++i) {
        mask[i] = rng.uniform() >= rate ? keep_scale : 0.0f;
        y[i] = x[i] * mask[i];
    }
    return id;
}

int Tape::cross_entropy_mean(int logits, const std::vector<int>& targets, int ignore_id) {
    const Shape sl = shape(logits);
    if (sl.rank != 2) throw ShapeError("cross_entropy_mean logits must be rank 2, got " + sl.str());
    if (static_cast<int>(targets.size()) != sl.d[0])
        throw ContractError("cross_entropy_mean got " + std::to_string(targets.size()) + " targets for " +
                            std::to_string(sl.d[0]) + " logit rows");
    int valid = 0;
    for (int t : targets) {
        if (t == ignore_id) continue;
        if (t < 0 || t >= sl.d[1]) throw ContractError("target id " + std::to_string(t) + " outside vocab");
        ++valid;
    }
    if (valid == 0) throw ContractError("cross_entropy_mean has no unignored targets");
    Node n;
    n.op = Op::CrossEntropy;
    n.rg = rg_of(logits);
    n.shape = Shape::scalar();
    n.in0 = logits;
    n.i0 = ignore_id;
    n.i1 = valid;
    n.idx = ints_.size();
    n.nidx = static_cast<int>(targets.size());
    ints_.insert(ints_.end(), targets.begin(), targets.end());
    n.aux = aux_.size();
    aux_.resize(aux_.size() + 2 * static_cast<size_t>(sl.d[0]));  // per-row max and logZ
    int id = push(std::move(n), 1);
    const float* x = vptr(logits);
    float* st = aux_.data() + nodes_[id].aux;
    const int* tg = ints_.data() + nodes_[id].idx;
    double loss = 0.0;
    for (int i = 0; i < sl.d[0]; ++i) {
        const float* row = x + static_cast<size_t>(i) * sl.d[1];
        float mx = row[0];
        for (int j = 1; j < sl.d[1]; ++j) mx = std::max(mx, row[j]);
        if (std::isnan(mx)) throw NumericError("cross_entropy_mean logits contain NaN");
        double z = 0.0;
        for (int j = 0; j < sl.d[1]; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
        const float logz = static_cast<float>(std::log(z));
        st[2 * i] = mx;
        st[2 * i + 1] = logz;
        if (tg[i] != ignore_id) loss += static_cast<double>(mx) + logz - row[tg[i]];
    }
    *vptr(id) = static_cast<float>(loss / valid);
    return id;
}

int Tape::sum_all(int a) {
    Node n;
    n.op = Op::SumAll;
    n.rg = rg_of(a);
    n.shape = Shape::scalar();
    n.in0 = a;
    int id = push(std::move(n), 1);
    *vptr(id) = kern::active().sum(vptr(a), shape(a).numel());
    return id;
}

int Tape::im2row(int a, int window) {
    const Shape sa = shape(a);
    if (sa.rank != 2) throw ShapeError("im2row requires rank 2, got " + sa.str());
    if (window < 1 || window > sa.d[0])
        throw ContractError("im2row window " + std::to_string(window) + " exceeds " + std::to_string(sa.d[0]) +
                            " rows");
    const int nwin = sa.d[0] - window + 1;
    Node n;
    n.op = Op::Im2Row;
    n.rg = rg_of(a);
    n.shape = Shape::mat(nwin, window * sa.d[1]);
    n.in0 = a;
    n.i0 = window;
    int id = push(std::move(n), n.shape.numel());
    float* y = vptr(id);
    const float* x = vptr(a);
    for (int i = 0; i < nwin; ++i)
        std::memcpy(y + static_cast<size_t>(i) * window * sa.d[1], x + static_cast<size_t>(i) * sa.d[1],
                    static_cast<size_t>(window) * sa.d[1] * sizeof(float));
    return id;
}

void Tape::backward(int loss) {
    check(loss);
    if (backward_done_) throw TapeError("backward() called twice on one tape; reset() between steps");
    if (shape(loss).numel() != 1) throw ContractError("backward() requires a scalar loss, got " + shape(loss).str());
    grads_.assign(vals_.size(), 0.0f);

    // Restrict the sweep to nodes the loss actually depends on.
    std::vector<uint8_t> needed(loss + 1, 0);
    needed[loss] = 1;
    for (int id = loss; id >= 0; --id) {
        if (!needed[id] || !nodes_[id].rg) continue;
        const Node& n = nodes_[id];
        if (n.in0 >= 0) needed[n.in0] = 1;
        if (n.in1 >= 0) needed[n.in1] = 1;
        if (n.in2 >= 0) needed[n.in2] = 1;
        for (int p : n.extra) needed[p] = 1;
    }

    if (nodes_[loss].op == Op::Leaf) {
        nodes_[loss].param->grad[0] += 1.0f;
    } else {
        grads_[nodes_[loss].val] = 1.0f;
    }
    for (int id = loss; id >= 0; --id) {
        if (needed[id] && nodes_[id].rg) backward_node(id);
    }
    backward_done_ = true;
}

void Tape::backward_node(int id) {
    const Node& n = nodes_[id];
    const auto& K = kern::active();
    const float* dy = n.op == Op::Leaf ? n.param->grad.data() : grads_.data() + n.val;
    switch (n.op) {
        case Op::Leaf:
        case Op::Input:
            break;
        case Op::Matmul: {
            const Shape sa = shape(n.in0);
            const Shape sb = shape(n.in1);
            if (rg_of(n.in0)) K.matmul_nt(gptr(n.in0), dy, vptr(n.in1), sa.d[0], sb.d[1], sa.d[1], true);
            if (rg_of(n.in1)) K.matmul_tn(gptr(n.in1), vptr(n.in0), dy, sa.d[0], sa.d[1], sb.d[1], true);
            break;
        }
        case Op::MatmulNT: {
            const Shape sa = shape(n.in0);
            const Shape sb = shape(n.in1);
            // C = A B^T: dA += dC B, dB += dC^T A
            if (rg_of(n.in0)) K.matmul_nn(gptr(n.in0), dy, vptr(n.in1), sa.d[0], sb.d[0], sa.d[1], true);
            if (rg_of(n.in1)) K.matmul_tn(gptr(n.in1), dy, vptr(n.in0), sa.d[0], sb.d[0], sa.d[1], true);
            break;
        }
        case Op::Add: {
            const size_t nel = n.shape.numel();
            if (rg_of(n.in0)) K.axpy(gptr(n.in0), 1.0f, dy, nel);
            if (rg_of(n.in1)) K.axpy(gptr(n.in1), 1.0f, dy, nel);
            break;
        }
        case Op::AddRow: {
            if (rg_of(n.in0)) K.axpy(gptr(n.in0), 1.0f, dy, n.shape.numel());
            if (rg_of(n.in1)) K.colsum(gptr(n.in1), dy, n.shape.d[0], n.shape.d[1], true);
            break;
        }
        case Op::AddCol: {
            if (rg_of(n.in0)) K.axpy(gptr(n.in0), 1.0f, dy, n.shape.numel());
            if (rg_of(n.in1)) {
                float* dc = gptr(n.in1);
                for (int i = 0; i < n.shape.d[0]; ++i)
                    dc[i] += K.sum(dy + static_cast<size_t>(i) * n.shape.d[1], n.shape.d[1]);
            }
            break;
        }
        case Op::Mul: {
            const size_t nel = n.shape.numel();
            if (rg_of(n.in0)) {
                float* da = gptr(n.in0);
                const float* b = vptr(n.in1);
                for (size_t i = 0; i < nel; ++i) da[i] += dy[i] * b[i];
            }
            if (rg_of(n.in1)) {
                float* db = gptr(n.in1);
                const float* a = vptr(n.in0);
                for (size_t i = 0; i < nel; ++i) db[i] += dy[i] * a[i];
            }
            break;
        }
        case Op::MulRow: {
            const int rows = n.shape.d[0], cols = n.shape.d[1];
            if (rg_of(n.in0)) {
                float* da = gptr(n.in0);
                const float* r = vptr(n.in1);
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j) da[i * cols + j] += dy[i * cols + j] * r[j];
            }
            if (rg_of(n.in1)) {
                float* dr = gptr(n.in1);
                const float* a = vptr(n.in0);
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j) dr[j] += dy[i * cols + j] * a[i * cols + j];
            }
            break;
        }
        case Op::Scale:
            if (rg_of(n.in0)) K.axpy(gptr(n.in0), n.a, dy, n.shape.numel());
            break;
        case Op::Relu:
            if (rg_of(n.in0)) K.relu_bwd(gptr(n.in0), vptr(n.in0), dy, n.shape.numel());
            break;
        case Op::Softmax: {
            if (!rg_of(n.in0)) break;
            float* dx = gptr(n.in0);
            const float* y = vptr(id);
            const Shape& s = n.shape;
            const int axis = n.i0;
            const int nslice = s.rank == 1 ? 1 : (axis == 1 ? s.d[0] : s.d[1]);
            const int len = s.rank == 1 ? s.d[0] : (axis == 1 ? s.d[1] : s.d[0]);
            const int stride = (s.rank == 1 || axis == 1) ? 1 : s.d[1];
            for (int sl = 0; sl < nslice; ++sl) {
                const int base = (stride == 1) ? sl * len : sl;
                float inner = 0.0f;
                for (int i = 0; i < len; ++i) inner += dy[base + i * stride] * y[base + i * stride];
                for (int i = 0; i < len; ++i)
                    dx[base + i * stride] += y[base + i * stride] * (dy[base + i * stride] - inner);
            }
            break;
        }
        case Op::ConcatRows: {
            const float* src = dy;
            for (int p : n.extra) {
                const size_t nel = shape(p).numel();
                if (rg_of(p)) K.axpy(gptr(p), 1.0f, src, nel);
                src += nel;
            }
            break;
        }
        case Op::ConcatCols: {
            int at = 0;
            const int cols = n.shape.d[1];
            for (int p : n.extra) {
                const int pc = shape(p).d[1];
                if (rg_of(p)) {
                    float* dp = gptr(p);
                    for (int i = 0; i < n.shape.d[0]; ++i)
                        K.add(dp + static_cast<size_t>(i) * pc, dp + static_cast<size_t>(i) * pc,
                              dy + static_cast<size_t>(i) * cols + at, pc);
                }
                at += pc;
            }
            break;
        }
        case Op::SliceRows:
            if (rg_of(n.in0)) {
                float* da = gptr(n.in0) + static_cast<size_t>(n.i0) * n.shape.d[1];
                K.axpy(da, 1.0f, dy, n.shape.numel());
            }
            break;
        case Op::SliceCols:
            if (rg_of(n.in0)) {
                const int full = shape(n.in0).d[1];
                const int w = n.shape.d[1];
                float* da = gptr(n.in0);
                for (int i = 0; i < n.shape.d[0]; ++i)
                    K.add(da + static_cast<size_t>(i) * full + n.i0, da + static_cast<size_t>(i) * full + n.i0,
                          dy + static_cast<size_t>(i) * w, w);
            }
            break;
        case Op::GatherRows:
            if (rg_of(n.in0)) {
                const int d = n.shape.d[1];
                float* dt = gptr(n.in0);
                const int* ix = ints_.data() + n.idx;
                for (int i = 0; i < n.nidx; ++i)
                    K.add(dt + static_cast<size_t>(ix[i]) * d, dt + static_cast<size_t>(ix[i]) * d,
                          dy + static_cast<size_t>(i) * d, d);
            }
            break;
        case Op::LayerNorm: {
            const int rows = n.shape.d[0], d = n.shape.d[1];
            const float* x = vptr(n.in0);
            const float* g = vptr(n.in1);
            const float* st = aux_.data() + n.aux;
            float* dx = rg_of(n.in0) ? gptr(n.in0) : nullptr;
            float* dg = rg_of(n.in1) ? gptr(n.in1) : nullptr;
            float* db = rg_of(n.in2) ? gptr(n.in2) : nullptr;
            for (int i = 0; i < rows; ++i) {
                const float mean = st[2 * i], rstd = st[2 * i + 1];
                const float* xr = x + static_cast<size_t>(i) * d;
                const float* dyr = dy + static_cast<size_t>(i) * d;
                float m1 = 0.0f, m2 = 0.0f;
                for (int j = 0; j < d; ++j) {
                    const float xh = (xr[j] - mean) * rstd;
                    const float dxh = dyr[j] * g[j];
                    m1 += dxh;
                    m2 += dxh * xh;
                    if (dg) dg[j] += dyr[j] * xh;
                    if (db) db[j] += dyr[j];
                }
                if (dx) {
                    m1 /= static_cast<float>(d);
                    m2 /= static_cast<float>(d);
                    float* dxr = dx + static_cast<size_t>(i) * d;
                    for (int j = 0; j < d; ++j) {
                        const float xh = (xr[j] - mean) * rstd;
                        dxr[j] += rstd * (dyr[j] * g[j] - m1 - xh * m2);
                    }
                }
            }
            break;
        }
        case Op::MaxRows:
            if (rg_of(n.in0)) {
                const int cols = shape(n.in0).d[1];
                float* dx = gptr(n.in0);
                const int* arg = ints_.data() + n.idx;
                for (int i = 0; i < n.nidx; ++i) dx[static_cast<size_t>(i) * cols + arg[i]] += dy[i];
            }
            break;
        case Op::MaxCols:
            if (rg_of(n.in0)) {
                const int cols = shape(n.in0).d[1];
                float* dx = gptr(n.in0);
                const int* arg = ints_.data() + n.idx;
                for (int j = 0; j < n.nidx; ++j) dx[static_cast<size_t>(arg[j]) * cols + j] += dy[j];
            }
            break;
        case Op::TileRows:
            if (rg_of(n.in0)) K.colsum(gptr(n.in0), dy, n.shape.d[0], n.shape.d[1], true);
            break;
        case Op::Reshape:
            if (rg_of(n.in0)) K.axpy(gptr(n.in0), 1.0f, dy, n.shape.numel());
            break;
        case Op::Dropout:
            if (rg_of(n.in0)) {
                float* dx = gptr(n.in0);
                const float* mask = aux_.data() + n.aux;
                const size_t nel = n.shape.numel();
                for (size_t i = 0; i < nel; ++i) dx[i] += dy[i] * mask[i];
            }
            break;
        case Op::CrossEntropy: {
            if (!rg_of(n.in0)) break;
            const Shape sl = shape(n.in0);
            const float g = dy[0] / static_cast<float>(n.i1);
            const float* x = vptr(n.in0);
            float* dx = gptr(n.in0);
            const float* st = aux_.data() + n.aux;
            const int* tg = ints_.data() + n.idx;
            for (int i = 0; i < sl.d[0]; ++i) {
                if (tg[i] == n.i0) continue;  // ignored position
                const float* row = x + static_cast<size_t>(i) * sl.d[1];
                float* drow = dx + static_cast<size_t>(i) * sl.d[1];
                const float shift = st[2 * i] + st[2 * i + 1];
                for (int j = 0; j < sl.d[1]; ++j) drow[j] += g * std::exp(row[j] - shift);
                drow[tg[i]] -= g;
            }
            break;
        }
        case Op::SumAll:
            if (rg_of(n.in0)) {
                float* dx = gptr(n.in0);
                const float g = dy[0];
                const size_t nel = shape(n.in0).numel();
                for (size_t i = 0; i < nel; ++i) dx[i] += g;
            }
            break;
        case Op::Im2Row:
            if (rg_of(n.in0)) {
                const int d = shape(n.in0).d[1];
                const int w = n.i0;
                float* dx = gptr(n.in0);
                for (int i = 0; i < n.shape.d[0]; ++i)
                    K.add(dx + static_cast<size_t>(i) * d, dx + static_cast<size_t>(i) * d,
                          dy + static_cast<size_t>(i) * n.shape.d[1], static_cast<size_t>(w) * d);
            }
            break;
    }
}

GradCheckReport finite_diff_check(const LossBuilder& f, const std::vector<Parameter*>& params, float eps) {
    if (eps <= 0.0f) throw ConfigError("finite_diff_check eps must be > 0");

    Tape tape;
    const int loss = f(tape);
    if (tape.shape(loss).numel() != 1)
        throw ContractError("finite_diff_check requires a scalar loss, got " + tape.shape(loss).str());
    for (Parameter* p : params) p->zero_grad();
    tape.backward(loss);

    std::vector<std::vector<float>> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    GradCheckReport rep;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (size_t i = 0; i < p.numel(); ++i) {
            const float saved = p.value[i];
            const float step = eps * std::max(1.0f, std::fabs(saved));
            Tape tp;
            p.value[i] = saved + step;
            const double fp = tp.scalar_val(f(tp));
            tp.reset();
            p.value[i] = saved - step;
            const double fm = tp.scalar_val(f(tp));
            p.value[i] = saved;
            const double numeric = (fp - fm) / (2.0 * static_cast<double>(step));
            const double a = analytic[pi][i];
            const double err = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
            if (err > rep.max_rel_err) {
                rep.max_rel_err = err;
                rep.worst_param = p.name;
                rep.worst_index = i;
                rep.analytic = a;
                rep.numeric = numeric;
            }
        }
    }
    return rep;
}

}  // namespace kobe
