#pragma once
// Define-by-run reverse-mode autodiff over dp::Tensor. Nodes form a DAG;
// backward() topo-sorts by creation id and pulls gradients. Templated on
// the scalar type: float for training/inference, double for the gradient
// checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "dp/kernels/api.hpp"
#include "dp/tensor.hpp"

namespace dp::ad {

template <typename T>
struct Node;

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
struct Node {
    Tensor<T> val;
    Tensor<T> grad;  // allocated lazily, same shape as val
    bool needs_grad = false;
    uint64_t id = 0;
    std::vector<Var<T>> prev;
    std::function<void(Node<T>&)> back;  // propagate this->grad into prev

    Tensor<T>& g() {
        if (grad.shape.empty() && !val.shape.empty()) grad = Tensor<T>::zeros(val.shape);
        return grad;
    }
};

namespace detail {
inline uint64_t next_id() {
    static uint64_t counter = 0;
    return ++counter;
}
}  // namespace detail

template <typename T>
Var<T> make_node(Tensor<T> val, std::vector<Var<T>> prev = {},
                 std::function<void(Node<T>&)> back = nullptr) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(val);
    n->prev = std::move(prev);
    n->back = std::move(back);
    n->id = detail::next_id();
    for (auto& p : n->prev)
        if (p && p->needs_grad) n->needs_grad = true;
    return n;
}

template <typename T>
Var<T> leaf(Tensor<T> val, bool needs_grad = false) {
    auto n = make_node<T>(std::move(val));
    n->needs_grad = needs_grad;
    return n;
}

template <typename T>
Var<T> constant(Tensor<T> val) {
    return leaf<T>(std::move(val), false);
}

// Value copy with gradient flow severed.
template <typename T>
Var<T> detach(const Var<T>& x) {
    return constant<T>(x->val);
}

template <typename T>
void backward(const Var<T>& loss) {
    if (loss->val.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    // collect reachable subgraph
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<Node<T>*> stack{loss.get()};
    seen.insert(loss.get());
    while (!stack.empty()) {
        Node<T>* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& p : n->prev)
            if (p && p->needs_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](const Node<T>* a, const Node<T>* b) { return a->id > b->id; });
    loss->g()[0] = T(1);
    for (Node<T>* n : order)
        if (n->back && n->needs_grad) n->back(*n);
}

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* what) {
    if (!a->val.same_shape(b->val)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

// ---- elementwise ----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a, b, "add");
    Tensor<T> out = a->val;
    kernels::axpy(out.size(), T(1), b->val.data(), out.data());
    return make_node<T>(std::move(out), {a, b}, [](Node<T>& n) {
        if (n.prev[0]->needs_grad)
            kernels::axpy(n.grad.size(), T(1), n.grad.data(), n.prev[0]->g().data());
        if (n.prev[1]->needs_grad)
            kernels::axpy(n.grad.size(), T(1), n.grad.data(), n.prev[1]->g().data());
    });
}

// a + s*b
template <typename T>
Var<T> add_scaled(const Var<T>& a, const Var<T>& b, T s) {
    check_same_shape(a, b, "add_scaled");
    Tensor<T> out(a->val.shape);
    kernels::scale_add(out.size(), a->val.data(), s, b->val.data(), out.data());
    return make_node<T>(std::move(out), {a, b}, [s](Node<T>& n) {
        if (n.prev[0]->needs_grad)
            kernels::axpy(n.grad.size(), T(1), n.grad.data(), n.prev[0]->g().data());
        if (n.prev[1]->needs_grad)
            kernels::axpy(n.grad.size(), s, n.grad.data(), n.prev[1]->g().data());
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    return add_scaled(a, b, T(-1));
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out(a->val.shape);
    for (size_t i = 0; i < out.size(); ++i) out[i] = a->val[i] * s;
    return make_node<T>(std::move(out), {a}, [s](Node<T>& n) {
        kernels::axpy(n.grad.size(), s, n.grad.data(), n.prev[0]->g().data());
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a, b, "mul");
    Tensor<T> out(a->val.shape);
    for (size_t i = 0; i < out.size(); ++i) out[i] = a->val[i] * b->val[i];
    return make_node<T>(std::move(out), {a, b}, [](Node<T>& n) {
        auto& a = *n.prev[0];
        auto& b = *n.prev[1];
        if (a.needs_grad) {
            auto& ga = a.g();
            for (size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * b.val[i];
        }
        if (b.needs_grad) {
            auto& gb = b.g();
            for (size_t i = 0; i < n.grad.size(); ++i) gb[i] += n.grad[i] * a.val[i];
        }
    });
}

template <typename T>
Var<T> silu(const Var<T>& x) {
    Tensor<T> out(x->val.shape);
    for (size_t i = 0; i < out.size(); ++i) {
        T s = T(1) / (T(1) + std::exp(-x->val[i]));
        out[i] = x->val[i] * s;
    }
    return make_node<T>(std::move(out), {x}, [](Node<T>& n) {
        auto& x = *n.prev[0];
        auto& gx = x.g();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            T s = T(1) / (T(1) + std::exp(-x.val[i]));
            gx[i] += n.grad[i] * (s + x.val[i] * s * (T(1) - s));
        }
    });
}

// mean over all elements -> shape [1]
template <typename T>
Var<T> mean_all(const Var<T>& x) {
    Tensor<T> out({1});
    double acc = 0.0;
    for (size_t i = 0; i < x->val.size(); ++i) acc += static_cast<double>(x->val[i]);
    out[0] = static_cast<T>(acc / static_cast<double>(x->val.size()));
    return make_node<T>(std::move(out), {x}, [](Node<T>& n) {
        T g = n.grad[0] / static_cast<T>(n.prev[0]->val.size());
        auto& gx = n.prev[0]->g();
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
}

// sum of scalar nodes with weights
template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& xs, const std::vector<T>& ws) {
    Tensor<T> out({1});
    out[0] = T(0);
    for (size_t i = 0; i < xs.size(); ++i) out[0] += ws[i] * xs[i]->val[0];
    std::vector<T> w = ws;
    return make_node<T>(std::move(out), xs, [w](Node<T>& n) {
        for (size_t i = 0; i < n.prev.size(); ++i)
            if (n.prev[i]->needs_grad) n.prev[i]->g()[0] += w[i] * n.grad[0];
    });
}

// ---- broadcasting helpers ----

// x[C,H,W] + bias[C]
template <typename T>
Var<T> add_bias_chw(const Var<T>& x, const Var<T>& b) {
    int C = x->val.dim(0), HW = x->val.dim(1) * x->val.dim(2);
    Tensor<T> out = x->val;
    for (int c = 0; c < C; ++c) {
        T bc = b->val[c];
        T* p = out.data() + static_cast<size_t>(c) * HW;
        for (int i = 0; i < HW; ++i) p[i] += bc;
    }
    return make_node<T>(std::move(out), {x, b}, [C, HW](Node<T>& n) {
        if (n.prev[0]->needs_grad)
            kernels::axpy(n.grad.size(), T(1), n.grad.data(), n.prev[0]->g().data());
        if (n.prev[1]->needs_grad) {
            auto& gb = n.prev[1]->g();
            for (int c = 0; c < C; ++c) {
                const T* p = n.grad.data() + static_cast<size_t>(c) * HW;
                T acc = T(0);
                for (int i = 0; i < HW; ++i) acc += p[i];
                gb[c] += acc;
            }
        }
    });
}

// x[N,M] + bias[M]
template <typename T>
Var<T> add_bias_rows(const Var<T>& x, const Var<T>& b) {
    int N = x->val.dim(0), M = x->val.dim(1);
    Tensor<T> out = x->val;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < M; ++j) out.at(i, j) += b->val[j];
    return make_node<T>(std::move(out), {x, b}, [N, M](Node<T>& n) {
        if (n.prev[0]->needs_grad)
            kernels::axpy(n.grad.size(), T(1), n.grad.data(), n.prev[0]->g().data());
        if (n.prev[1]->needs_grad) {
            auto& gb = n.prev[1]->g();
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < M; ++j) gb[j] += n.grad.at(i, j);
        }
    });
}

// x[C,H,W] + per-channel shift s[C] (time embedding injection)
template <typename T>
Var<T> add_channel_shift(const Var<T>& x, const Var<T>& s) {
    return add_bias_chw(x, s);
}

// features[C,h,w] * mask[h,w] broadcast over channels
template <typename T>
Var<T> mul_mask(const Var<T>& x, const Var<T>& m) {
    int C = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
    if (m->val.dim(0) != H || m->val.dim(1) != W)
        throw std::invalid_argument("mul_mask: mask shape mismatch");
    Tensor<T> out(x->val.shape);
    int HW = H * W;
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < HW; ++i)
            out[static_cast<size_t>(c) * HW + i] = x->val[static_cast<size_t>(c) * HW + i] * m->val[i];
    return make_node<T>(std::move(out), {x, m}, [C, HW](Node<T>& n) {
        if (n.prev[0]->needs_grad) {
            auto& gx = n.prev[0]->g();
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < HW; ++i)
                    gx[static_cast<size_t>(c) * HW + i] +=
                        n.grad[static_cast<size_t>(c) * HW + i] * n.prev[1]->val[i];
        }
        if (n.prev[1]->needs_grad) {
            auto& gm = n.prev[1]->g();
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < HW; ++i)
                    gm[i] += n.grad[static_cast<size_t>(c) * HW + i] *
                             n.prev[0]->val[static_cast<size_t>(c) * HW + i];
        }
    });
}

// m*a + (1-m)*b with mask[h,w] broadcast over channels of [C,h,w]
template <typename T>
Var<T> blend_mask(const Var<T>& a, const Var<T>& b, const Var<T>& m) {
    check_same_shape(a, b, "blend_mask");
    int C = a->val.dim(0), H = a->val.dim(1), W = a->val.dim(2);
    if (m->val.dim(0) != H || m->val.dim(1) != W)
        throw std::invalid_argument("blend_mask: mask shape mismatch");
    Tensor<T> out(a->val.shape);
    int HW = H * W;
    for (int c = 0; c < C; ++c)
        kernels::blend(static_cast<size_t>(HW), m->val.data(),
                       a->val.data() + static_cast<size_t>(c) * HW,
                       b->val.data() + static_cast<size_t>(c) * HW,
                       out.data() + static_cast<size_t>(c) * HW);
    return make_node<T>(std::move(out), {a, b, m}, [C, HW](Node<T>& n) {
        const T* mv = n.prev[2]->val.data();
        for (int c = 0; c < C; ++c) {
            const T* g = n.grad.data() + static_cast<size_t>(c) * HW;
            if (n.prev[0]->needs_grad) {
                T* ga = n.prev[0]->g().data() + static_cast<size_t>(c) * HW;
                for (int i = 0; i < HW; ++i) ga[i] += g[i] * mv[i];
            }
            if (n.prev[1]->needs_grad) {
                T* gb = n.prev[1]->g().data() + static_cast<size_t>(c) * HW;
                for (int i = 0; i < HW; ++i) gb[i] += g[i] * (T(1) - mv[i]);
            }
        }
        if (n.prev[2]->needs_grad) {
            T* gm = n.prev[2]->g().data();
            for (int c = 0; c < C; ++c) {
                const T* g = n.grad.data() + static_cast<size_t>(c) * HW;
                const T* av = n.prev[0]->val.data() + static_cast<size_t>(c) * HW;
                const T* bv = n.prev[1]->val.data() + static_cast<size_t>(c) * HW;
                for (int i = 0; i < HW; ++i) gm[i] += g[i] * (av[i] - bv[i]);
            }
        }
    });
}

// ---- linear algebra ----

// [N,K] x [K,M] -> [N,M]
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    int N = a->val.dim(0), K = a->val.dim(1), M = b->val.dim(1);
    if (b->val.dim(0) != K) throw std::invalid_argument("matmul: inner dim mismatch");
    Tensor<T> out({N, M});
    kernels::gemm_nn(N, M, K, a->val.data(), b->val.data(), out.data(), false);
    return make_node<T>(std::move(out), {a, b}, [N, K, M](Node<T>& n) {
        if (n.prev[0]->needs_grad)  // dA = dC * B^T
            kernels::gemm_nt(N, K, M, n.grad.data(), n.prev[1]->val.data(),
                             n.prev[0]->g().data(), true);
        if (n.prev[1]->needs_grad)  // dB = A^T * dC
            kernels::gemm_tn(K, M, N, n.prev[0]->val.data(), n.grad.data(),
                             n.prev[1]->g().data(), true);
    });
}

// [N,K] x [M,K]^T -> [N,M]
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
    int N = a->val.dim(0), K = a->val.dim(1), M = b->val.dim(0);
    if (b->val.dim(1) != K) throw std::invalid_argument("matmul_nt: inner dim mismatch");
    Tensor<T> out({N, M});
    kernels::gemm_nt(N, M, K, a->val.data(), b->val.data(), out.data(), false);
    return make_node<T>(std::move(out), {a, b}, [N, K, M](Node<T>& n) {
        if (n.prev[0]->needs_grad)  // dA = dC * B
            kernels::gemm_nn(N, K, M, n.grad.data(), n.prev[1]->val.data(),
                             n.prev[0]->g().data(), true);
        if (n.prev[1]->needs_grad)  // dB = dC^T * A
            kernels::gemm_tn(M, K, N, n.grad.data(), n.prev[0]->val.data(),
                             n.prev[1]->g().data(), true);
    });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    auto y = matmul(x, w);
    return b ? add_bias_rows(y, b) : y;
}

// row-wise softmax on [N,K]
template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
    int N = x->val.dim(0), K = x->val.dim(1);
    Tensor<T> out(x->val.shape);
    for (int i = 0; i < N; ++i) {
        const T* r = x->val.data() + static_cast<size_t>(i) * K;
        T* o = out.data() + static_cast<size_t>(i) * K;
        T mx = r[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, r[k]);
        T denom = T(0);
        for (int k = 0; k < K; ++k) {
            o[k] = std::exp(r[k] - mx);
            denom += o[k];
        }
        for (int k = 0; k < K; ++k) o[k] /= denom;
    }
    return make_node<T>(std::move(out), {x}, [N, K](Node<T>& n) {
        auto& gx = n.prev[0]->g();
        for (int i = 0; i < N; ++i) {
            const T* p = n.val.data() + static_cast<size_t>(i) * K;
            const T* g = n.grad.data() + static_cast<size_t>(i) * K;
            T dot = T(0);
            for (int k = 0; k < K; ++k) dot += p[k] * g[k];
            T* out = gx.data() + static_cast<size_t>(i) * K;
            for (int k = 0; k < K; ++k) out[k] += p[k] * (g[k] - dot);
        }
    });
}

// ---- shape ops ----

// [C,H,W] -> [H*W, C]
template <typename T>
Var<T> chw_to_nc(const Var<T>& x) {
    int C = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
    int N = H * W;
    Tensor<T> out({N, C});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < N; ++i) out.at(i, c) = x->val[static_cast<size_t>(c) * N + i];
    return make_node<T>(std::move(out), {x}, [C, N](Node<T>& n) {
        auto& gx = n.prev[0]->g();
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < N; ++i) gx[static_cast<size_t>(c) * N + i] += n.grad.at(i, c);
    });
}

// [H*W, C] -> [C,H,W]
template <typename T>
Var<T> nc_to_chw(const Var<T>& x, int H, int W) {
    int N = x->val.dim(0), C = x->val.dim(1);
    if (N != H * W) throw std::invalid_argument("nc_to_chw: size mismatch");
    Tensor<T> out({C, H, W});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < N; ++i) out[static_cast<size_t>(c) * N + i] = x->val.at(i, c);
    return make_node<T>(std::move(out), {x}, [C, N](Node<T>& n) {
        auto& gx = n.prev[0]->g();
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < N; ++i) gx.at(i, c) += n.grad[static_cast<size_t>(c) * N + i];
    });
}

template <typename T>
Var<T> reshape(const Var<T>& x, std::vector<int> shape) {
    if (Tensor<T>::numel(shape) != x->val.size()) throw std::invalid_argument("reshape: size mismatch");
    Tensor<T> out = x->val;
    out.shape = shape;
    return make_node<T>(std::move(out), {x}, [](Node<T>& n) {
        kernels::axpy(n.grad.size(), T(1), n.grad.data(), n.prev[0]->g().data());
    });
}

// gather rows of an embedding table [V,D] by token id -> [L,D]
template <typename T>
Var<T> embed_rows(const Var<T>& table, const std::vector<int>& ids) {
    int V = table->val.dim(0), D = table->val.dim(1);
    for (int id : ids)
        if (id < 0 || id >= V) throw std::out_of_range("embed_rows: token id out of range");
    Tensor<T> out({static_cast<int>(ids.size()), D});
    for (size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < D; ++j) out.at(static_cast<int>(i), j) = table->val.at(ids[i], j);
    auto idv = ids;
    return make_node<T>(std::move(out), {table}, [idv, D](Node<T>& n) {
        auto& g = n.prev[0]->g();
        for (size_t i = 0; i < idv.size(); ++i)
            for (int j = 0; j < D; ++j) g.at(idv[i], j) += n.grad.at(static_cast<int>(i), j);
    });
}

// column slice of [N,C]: columns [c0, c1)
template <typename T>
Var<T> col_slice(const Var<T>& x, int c0, int c1) {
    int N = x->val.dim(0), C = x->val.dim(1);
    if (c0 < 0 || c1 > C || c0 >= c1) throw std::invalid_argument("col_slice: bad range");
    Tensor<T> out({N, c1 - c0});
    for (int i = 0; i < N; ++i)
        for (int j = c0; j < c1; ++j) out.at(i, j - c0) = x->val.at(i, j);
    return make_node<T>(std::move(out), {x}, [N, c0, c1](Node<T>& n) {
        auto& gx = n.prev[0]->g();
        for (int i = 0; i < N; ++i)
            for (int j = c0; j < c1; ++j) gx.at(i, j) += n.grad.at(i, j - c0);
    });
}

// concat [N,Ci] blocks along columns
template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& xs) {
    int N = xs[0]->val.dim(0);
    int C = 0;
    for (auto& x : xs) C += x->val.dim(1);
    Tensor<T> out({N, C});
    int off = 0;
    for (auto& x : xs) {
        int c = x->val.dim(1);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < c; ++j) out.at(i, off + j) = x->val.at(i, j);
        off += c;
    }
    return make_node<T>(std::move(out), xs, [N](Node<T>& n) {
        int off = 0;
        for (auto& p : n.prev) {
            int c = p->val.dim(1);
            if (p->needs_grad) {
                auto& g = p->g();
                for (int i = 0; i < N; ++i)
                    for (int j = 0; j < c; ++j) g.at(i, j) += n.grad.at(i, off + j);
            }
            off += c;
        }
    });
}

// concat along channel dim of [C,H,W]
template <typename T>
Var<T> concat_c(const Var<T>& a, const Var<T>& b) {
    int Ca = a->val.dim(0), Cb = b->val.dim(0);
    int H = a->val.dim(1), W = a->val.dim(2);
    if (b->val.dim(1) != H || b->val.dim(2) != W)
        throw std::invalid_argument("concat_c: spatial shape mismatch");
    Tensor<T> out({Ca + Cb, H, W});
    std::copy(a->val.v.begin(), a->val.v.end(), out.v.begin());
    std::copy(b->val.v.begin(), b->val.v.end(), out.v.begin() + a->val.size());
    return make_node<T>(std::move(out), {a, b}, [](Node<T>& n) {
        size_t na = n.prev[0]->val.size();
        if (n.prev[0]->needs_grad)
            kernels::axpy(na, T(1), n.grad.data(), n.prev[0]->g().data());
        if (n.prev[1]->needs_grad)
            kernels::axpy(n.prev[1]->val.size(), T(1), n.grad.data() + na, n.prev[1]->g().data());
    });
}

// nearest-neighbor 2x upsample of [C,H,W]
template <typename T>
Var<T> upsample2x(const Var<T>& x) {
    int C = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
    Tensor<T> out({C, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * H; ++y)
            for (int xx = 0; xx < 2 * W; ++xx) out.at(c, y, xx) = x->val.at(c, y / 2, xx / 2);
    return make_node<T>(std::move(out), {x}, [C, H, W](Node<T>& n) {
        auto& gx = n.prev[0]->g();
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < 2 * H; ++y)
                for (int xx = 0; xx < 2 * W; ++xx)
                    gx.v[(static_cast<size_t>(c) * H + y / 2) * W + xx / 2] += n.grad.at(c, y, xx);
    });
}

// ---- convolution (3x3 pad 1, stride 1 or 2; and 1x1) via im2col + GEMM ----

template <typename T>
void im2col_3x3(const Tensor<T>& x, int stride, Tensor<T>& cols, int& Ho, int& Wo) {
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    Ho = (H + 2 - 3) / stride + 1;
    Wo = (W + 2 - 3) / stride + 1;
    cols = Tensor<T>({C * 9, Ho * Wo});
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                T* dst = cols.data() + (static_cast<size_t>(c) * 9 + ky * 3 + kx) * (Ho * Wo);
                for (int oy = 0; oy < Ho; ++oy) {
                    int iy = oy * stride + ky - 1;
                    for (int ox = 0; ox < Wo; ++ox) {
                        int ix = ox * stride + kx - 1;
                        dst[oy * Wo + ox] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                                ? x.at(c, iy, ix)
                                                : T(0);
                    }
                }
            }
}

template <typename T>
void col2im_3x3(const Tensor<T>& cols, int C, int H, int W, int stride, Tensor<T>& gx) {
    int Ho = (H + 2 - 3) / stride + 1;
    int Wo = (W + 2 - 3) / stride + 1;
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                const T* src = cols.data() + (static_cast<size_t>(c) * 9 + ky * 3 + kx) * (Ho * Wo);
                for (int oy = 0; oy < Ho; ++oy) {
                    int iy = oy * stride + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < Wo; ++ox) {
                        int ix = ox * stride + kx - 1;
                        if (ix < 0 || ix >= W) continue;
                        gx.at(c, iy, ix) += src[oy * Wo + ox];
                    }
                }
            }
}

// x[Cin,H,W], w[Cout, Cin*9], b[Cout] -> [Cout,Ho,Wo]
template <typename T>
Var<T> conv3x3(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride = 1) {
    int Cin = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
    int Cout = w->val.dim(0);
    if (w->val.dim(1) != Cin * 9) throw std::invalid_argument("conv3x3: weight shape mismatch");
    auto cols = std::make_shared<Tensor<T>>();
    int Ho, Wo;
    im2col_3x3(x->val, stride, *cols, Ho, Wo);
    Tensor<T> out({Cout, Ho, Wo});
    kernels::gemm_nn(Cout, Ho * Wo, Cin * 9, w->val.data(), cols->data(), out.data(), false);
    if (b) {
        for (int c = 0; c < Cout; ++c) {
            T bc = b->val[c];
            T* p = out.data() + static_cast<size_t>(c) * Ho * Wo;
            for (int i = 0; i < Ho * Wo; ++i) p[i] += bc;
        }
    }
    std::vector<Var<T>> prev = b ? std::vector<Var<T>>{x, w, b} : std::vector<Var<T>>{x, w};
    return make_node<T>(std::move(out), std::move(prev),
                        [cols, Cin, H, W, Cout, Ho, Wo, stride, has_b = (bool)b](Node<T>& n) {
                            int P = Ho * Wo;
                            if (n.prev[1]->needs_grad)  // dW = dY * cols^T
                                kernels::gemm_nt(Cout, Cin * 9, P, n.grad.data(), cols->data(),
                                                 n.prev[1]->g().data(), true);
                            if (has_b && n.prev[2]->needs_grad) {
                                auto& gb = n.prev[2]->g();
                                for (int c = 0; c < Cout; ++c) {
                                    const T* p = n.grad.data() + static_cast<size_t>(c) * P;
                                    T acc = T(0);
                                    for (int i = 0; i < P; ++i) acc += p[i];
                                    gb[c] += acc;
                                }
                            }
                            if (n.prev[0]->needs_grad) {  // dX = col2im(W^T * dY)
                                Tensor<T> dcols({Cin * 9, P});
                                kernels::gemm_tn(Cin * 9, P, Cout, n.prev[1]->val.data(),
                                                 n.grad.data(), dcols.data(), false);
                                col2im_3x3(dcols, Cin, H, W, stride, n.prev[0]->g());
                            }
                        });
}

// 1x1 convolution: x[Cin,H,W], w[Cout,Cin], b[Cout]
template <typename T>
Var<T> conv1x1(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    int Cin = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
    int Cout = w->val.dim(0);
    int P = H * W;
    Tensor<T> out({Cout, H, W});
    kernels::gemm_nn(Cout, P, Cin, w->val.data(), x->val.data(), out.data(), false);
    if (b)
        for (int c = 0; c < Cout; ++c) {
            T bc = b->val[c];
            T* p = out.data() + static_cast<size_t>(c) * P;
            for (int i = 0; i < P; ++i) p[i] += bc;
        }
    std::vector<Var<T>> prev = b ? std::vector<Var<T>>{x, w, b} : std::vector<Var<T>>{x, w};
    return make_node<T>(std::move(out), std::move(prev),
                        [Cin, Cout, P, has_b = (bool)b](Node<T>& n) {
                            if (n.prev[1]->needs_grad)
                                kernels::gemm_nt(Cout, Cin, P, n.grad.data(),
                                                 n.prev[0]->val.data(), n.prev[1]->g().data(), true);
                            if (has_b && n.prev[2]->needs_grad) {
                                auto& gb = n.prev[2]->g();
                                for (int c = 0; c < Cout; ++c) {
                                    const T* p = n.grad.data() + static_cast<size_t>(c) * P;
                                    T acc = T(0);
                                    for (int i = 0; i < P; ++i) acc += p[i];
                                    gb[c] += acc;
                                }
                            }
                            if (n.prev[0]->needs_grad)
                                kernels::gemm_tn(Cin, P, Cout, n.prev[1]->val.data(),
                                                 n.grad.data(), n.prev[0]->g().data(), true);
                        });
}

// ---- group normalization over [C,H,W] ----

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups,
                  T eps = T(1e-5)) {
    int C = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
    if (C % groups != 0) throw std::invalid_argument("group_norm: C % groups != 0");
    int cg = C / groups;
    size_t gn = static_cast<size_t>(cg) * H * W;
    Tensor<T> out(x->val.shape);
    auto mean = std::make_shared<std::vector<T>>(groups);
    auto inv_std = std::make_shared<std::vector<T>>(groups);
    for (int g = 0; g < groups; ++g) {
        const T* p = x->val.data() + static_cast<size_t>(g) * gn;
        double mu = 0;
        for (size_t i = 0; i < gn; ++i) mu += p[i];
        mu /= static_cast<double>(gn);
        double var = 0;
        for (size_t i = 0; i < gn; ++i) {
            double d = p[i] - mu;
            var += d * d;
        }
        var /= static_cast<double>(gn);
        (*mean)[g] = static_cast<T>(mu);
        (*inv_std)[g] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    }
    int HW = H * W;
    for (int c = 0; c < C; ++c) {
        int g = c / cg;
        T mu = (*mean)[g], is = (*inv_std)[g];
        T ga = gamma->val[c], be = beta->val[c];
        const T* p = x->val.data() + static_cast<size_t>(c) * HW;
        T* o = out.data() + static_cast<size_t>(c) * HW;
        for (int i = 0; i < HW; ++i) o[i] = (p[i] - mu) * is * ga + be;
    }
    return make_node<T>(
        std::move(out), {x, gamma, beta}, [mean, inv_std, C, HW, cg, groups](Node<T>& n) {
            auto& x = *n.prev[0];
            auto& gamma = *n.prev[1];
            size_t gn = static_cast<size_t>(cg) * HW;
            if (n.prev[1]->needs_grad || n.prev[2]->needs_grad) {
                for (int c = 0; c < C; ++c) {
                    int g = c / cg;
                    T mu = (*mean)[g], is = (*inv_std)[g];
                    const T* gp = n.grad.data() + static_cast<size_t>(c) * HW;
                    const T* xp = x.val.data() + static_cast<size_t>(c) * HW;
                    T dg = T(0), db = T(0);
                    for (int i = 0; i < HW; ++i) {
                        dg += gp[i] * (xp[i] - mu) * is;
                        db += gp[i];
                    }
                    if (n.prev[1]->needs_grad) n.prev[1]->g()[c] += dg;
                    if (n.prev[2]->needs_grad) n.prev[2]->g()[c] += db;
                }
            }
            if (!x.needs_grad) return;
            auto& gx = x.g();
            for (int g = 0; g < groups; ++g) {
                T mu = (*mean)[g], is = (*inv_std)[g];
                // dL/dxhat, then the standard normalization backward
                double sum_dxh = 0, sum_dxh_xh = 0;
                for (int c = g * cg; c < (g + 1) * cg; ++c) {
                    T ga = gamma.val[c];
                    const T* gp = n.grad.data() + static_cast<size_t>(c) * HW;
                    const T* xp = x.val.data() + static_cast<size_t>(c) * HW;
                    for (int i = 0; i < HW; ++i) {
                        T dxh = gp[i] * ga;
                        T xh = (xp[i] - mu) * is;
                        sum_dxh += dxh;
                        sum_dxh_xh += static_cast<double>(dxh) * xh;
                    }
                }
                T mean_dxh = static_cast<T>(sum_dxh / static_cast<double>(gn));
                T mean_dxh_xh = static_cast<T>(sum_dxh_xh / static_cast<double>(gn));
                for (int c = g * cg; c < (g + 1) * cg; ++c) {
                    T ga = gamma.val[c];
                    const T* gp = n.grad.data() + static_cast<size_t>(c) * HW;
                    const T* xp = x.val.data() + static_cast<size_t>(c) * HW;
                    T* out = gx.data() + static_cast<size_t>(c) * HW;
                    for (int i = 0; i < HW; ++i) {
                        T dxh = gp[i] * ga;
                        T xh = (xp[i] - mu) * is;
                        out[i] += is * (dxh - mean_dxh - xh * mean_dxh_xh);
                    }
                }
            }
        });
}

}  // namespace dp::ad
