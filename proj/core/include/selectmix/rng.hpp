#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace selectmix {

// SplitMix64 finalizer, used to derive independent engine seeds from a
// master seed plus a stream path such as {stream::kFoldTrain, fold, epoch}.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master_seed,
                                 std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = splitmix64(master_seed);
    for (std::uint64_t p : path) {
        h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    }
    return h;
}

// Stream tags. Every consumer of randomness owns a tag so that streams are
// independent of each other and of execution order.
namespace stream {
inline constexpr std::uint64_t kNetInit = 1;
inline constexpr std::uint64_t kNoise = 2;
inline constexpr std::uint64_t kFoldPlan = 3;
inline constexpr std::uint64_t kFoldTrain = 4;
inline constexpr std::uint64_t kShuffle = 5;
inline constexpr std::uint64_t kMix = 6;
inline constexpr std::uint64_t kSynthetic = 7;
inline constexpr std::uint64_t kRisk = 8;
}  // namespace stream

// Draw helper around mt19937_64. All sampling in the project goes through
// this type, so a (master seed, stream path) pair fixes every draw.
class Rng {
  public:
    explicit Rng(std::uint64_t engine_seed) : engine_(engine_seed) {}

    Rng(std::uint64_t master_seed, std::initializer_list<std::uint64_t> path)
        : engine_(derive_seed(master_seed, path)) {}

    std::mt19937_64& engine() { return engine_; }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        std::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
        return dist(engine_);
    }

    double normal() { return normal_(engine_); }

    double gamma(double shape) {
        std::gamma_distribution<double> dist(shape, 1.0);
        return dist(engine_);
    }

    // One draw from Beta(alpha, alpha) as the ratio of two gamma variates.
    double beta_symmetric(double alpha) {
        const double x = gamma(alpha);
        const double y = gamma(alpha);
        const double s = x + y;
        return s > 0.0 ? x / s : 0.5;  // guards underflow at tiny alpha
    }

    // In-place Fisher-Yates shuffle with a defined draw count (n - 1 draws).
    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[static_cast<std::size_t>(below(i))]);
        }
    }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace selectmix
