#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>

namespace lsmpc {

// Deterministic random stream. Transforms are hand-rolled on top of
// mt19937_64 so sequences are identical across standard libraries
// (std::normal_distribution is implementation-defined).
class RandomStream {
   public:
    explicit RandomStream(std::uint64_t seed) : eng_(seed) {}
    RandomStream(std::uint64_t seed, std::uint64_t stream)
        : eng_(mix(seed, stream)) {}

    double uniform01() {
        // 53-bit mantissa uniform in [0, 1)
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 1e-300) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

    // uniform over the solid ball of given radius
    Eigen::VectorXd uniform_ball(Eigen::Index n, double radius) {
        Eigen::VectorXd v = normal_vector(n);
        const double nv = v.norm();
        if (nv <= 1e-300) return Eigen::VectorXd::Zero(n);
        const double r = radius * std::pow(uniform01(), 1.0 / static_cast<double>(n));
        return v * (r / nv);
    }

    std::uint64_t raw() { return eng_(); }

   private:
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        // splitmix64 over the pair; keeps per-subsystem streams independent
        std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace lsmpc
