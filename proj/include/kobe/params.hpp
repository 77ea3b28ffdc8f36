#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "kobe/tensor.hpp"

namespace kobe {

// Named collection of learnable buffers. Storage is a deque so Parameter
// addresses stay stable as the set grows; iteration order is creation order,
// which fixes the initialization stream and the checkpoint layout.
class ParamSet {
  public:
    ParamSet() = default;
    // The name map points into the deque, so copying would alias the source's
    // buffers; moving a deque keeps element addresses valid.
    ParamSet(const ParamSet&) = delete;
    ParamSet& operator=(const ParamSet&) = delete;
    ParamSet(ParamSet&&) = default;
    ParamSet& operator=(ParamSet&&) = default;

    Parameter& add(const std::string& name, Shape shape);
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool has(const std::string& name) const { return by_name_.count(name) != 0; }

    std::vector<Parameter*> all();
    std::vector<const Parameter*> all() const;
    size_t size() const { return store_.size(); }
    size_t numel() const;

    void zero_grads();

  private:
    std::deque<Parameter> store_;
    std::unordered_map<std::string, Parameter*> by_name_;
};

// Deterministic initialization in creation order: rank-2 weights get Xavier
// uniform limits, gains 1, everything else 0.
void init_parameters(ParamSet& params, uint64_t seed);

// FNV-1a string hash, used for per-name init streams and vocab fingerprints.
uint64_t fnv1a(const std::string& s);

}  // namespace kobe
