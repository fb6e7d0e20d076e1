#pragma once
// Seeded RNG with explicit Box-Muller normals so sampled bytes depend only
// on the seed and call sequence, not on library distribution internals.

#include <cmath>
#include <cstdint>
#include <random>

#include "dp/tensor.hpp"

namespace dp {

class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0,1)
    double uniform() {
        return static_cast<double>(eng_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int n) {  // [0,n)
        return static_cast<int>(eng_() % static_cast<uint64_t>(n));
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 1e-300);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 2.0 * M_PI * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

    template <typename T>
    Tensor<T> normal_tensor(std::vector<int> shape, double stddev = 1.0) {
        Tensor<T> t(std::move(shape));
        for (auto& x : t.v) x = static_cast<T>(normal() * stddev);
        return t;
    }

    Rng fork() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ull); }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dp
