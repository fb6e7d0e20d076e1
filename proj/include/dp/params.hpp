#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "dp/autodiff.hpp"
#include "dp/rng.hpp"

namespace dp {

// Named parameter registry. std::map keeps the name order deterministic,
// which the checkpoint writer relies on.
template <typename T>
struct ParamStore {
    std::map<std::string, ad::Var<T>> params;

    ad::Var<T> add(const std::string& name, Tensor<T> init, bool trainable = true) {
        auto v = ad::leaf<T>(std::move(init), trainable);
        auto [it, fresh] = params.emplace(name, v);
        if (!fresh) throw std::invalid_argument("ParamStore: duplicate name " + name);
        return v;
    }

    ad::Var<T> get(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw std::out_of_range("ParamStore: missing " + name);
        return it->second;
    }

    bool has_prefix(const std::string& prefix) const {
        auto it = params.lower_bound(prefix);
        return it != params.end() && it->first.rfind(prefix, 0) == 0;
    }

    void zero_grads() {
        for (auto& [k, v] : params)
            if (!v->grad.shape.empty()) v->grad.fill(T(0));
    }
};

template <typename T>
Tensor<T> normal_init(Rng& rng, std::vector<int> shape, double stddev) {
    return rng.template normal_tensor<T>(std::move(shape), stddev);
}

}  // namespace dp
