#pragma once
// Minimal dense tensor, row-major contiguous. Feature maps are [C,H,W],
// token matrices are [N,C], masks are [H,W].

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

namespace dp {

template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(numel(shape)) {}
    Tensor(std::vector<int> s, T fill) : shape(std::move(s)), v(numel(shape), fill) {}

    static size_t numel(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) n *= static_cast<size_t>(d);
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, T x) { return Tensor(std::move(s), x); }

    size_t size() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
    T& operator[](size_t i) { return v[i]; }
    const T& operator[](size_t i) const { return v[i]; }

    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    // [N,M]
    T& at(int i, int j) { return v[static_cast<size_t>(i) * shape[1] + j]; }
    const T& at(int i, int j) const { return v[static_cast<size_t>(i) * shape[1] + j]; }
    // [C,H,W]
    T& at(int c, int y, int x) {
        return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    const T& at(int c, int y, int x) const {
        return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace dp
