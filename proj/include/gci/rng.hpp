#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace gci {

// splitmix64 finalizer, used to derive well-separated stream seeds from a
// master seed so parallel chains are reproducible regardless of scheduling.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    static Rng stream(std::uint64_t seed, std::uint64_t stream_id) { return Rng(mix_seed(seed, stream_id)); }

    double normal() { return normal_(gen_); }
    double uniform() { return uniform_(gen_); }
    bool bernoulli(double p) { return uniform_(gen_) < p; }
    double gamma(double shape, double rate) {
        std::gamma_distribution<double> d(shape, 1.0 / rate);
        return d(gen_);
    }
    double chisq(double df) { return gamma(0.5 * df, 0.5); }

    Eigen::VectorXd normal_vec(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
        return v;
    }
    Eigen::MatrixXd normal_mat(Eigen::Index r, Eigen::Index c) {
        Eigen::MatrixXd m(r, c);
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal();
        return m;
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace gci
