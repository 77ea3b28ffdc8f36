#include "kobe/params.hpp"

#include <cmath>

#include "kobe/rng.hpp"

namespace kobe {

Parameter& ParamSet::add(const std::string& name, Shape shape) {
    if (by_name_.count(name)) throw ContractError("parameter '" + name + "' registered twice");
    store_.emplace_back(name, shape);
    Parameter& p = store_.back();
    by_name_.emplace(name, &p);
    return p;
}

Parameter& ParamSet::get(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ContractError("unknown parameter '" + name + "'");
    return *it->second;
}

const Parameter& ParamSet::get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ContractError("unknown parameter '" + name + "'");
    return *it->second;
}

std::vector<Parameter*> ParamSet::all() {
    std::vector<Parameter*> out;
    out.reserve(store_.size());
    for (auto& p : store_) out.push_back(&p);
    return out;
}

std::vector<const Parameter*> ParamSet::all() const {
    std::vector<const Parameter*> out;
    out.reserve(store_.size());
    for (const auto& p : store_) out.push_back(&p);
    return out;
}

size_t ParamSet::numel() const {
    size_t n = 0;
    for (const auto& p : store_) n += p.numel();
    return n;
}

void ParamSet::zero_grads() {
    for (auto& p : store_) p.zero_grad();
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {
bool ends_with(const std::string& s, const std::string& tail) {
    return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}
}  // namespace

void init_parameters(ParamSet& params, uint64_t seed) {
    Rng base(seed);
    for (Parameter* p : params.all()) {
        // Per-name stream: the draw does not depend on registration order.
        Rng rng = base.fork(fnv1a(p->name));
        if (ends_with(p->name, "gain")) {
            std::fill(p->value.begin(), p->value.end(), 1.0f);
        } else if (p->shape.rank == 2) {
            const float limit = std::sqrt(6.0f / static_cast<float>(p->shape.d[0] + p->shape.d[1]));
            for (auto& v : p->value) v = rng.uniform(-limit, limit);
        } else {
            std::fill(p->value.begin(), p->value.end(), 0.0f);
        }
        p->zero_grad();
    }
}

}  // namespace kobe
