#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace pmn {

// Row-major so that an (N*17)x64 block of per-joint features is, byte for
// byte, the Nx1088 flattened layout consumed by the head.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kNumJoints = 17;

/// Base of every error raised by the library. `kind()` is a stable,
/// machine-parsable class name used by the CLI on stderr.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define PMN_DEFINE_ERROR(Name)                                                 \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& message) : Error(#Name, message) {}   \
    };

PMN_DEFINE_ERROR(ValidationError)
PMN_DEFINE_ERROR(DegenerateGeometryError)
PMN_DEFINE_ERROR(ConfigError)
PMN_DEFINE_ERROR(BatchTooSmallError)
PMN_DEFINE_ERROR(ContractViolation)
PMN_DEFINE_ERROR(TrainingDivergedError)
PMN_DEFINE_ERROR(SchemaError)
PMN_DEFINE_ERROR(UnsupportedVersionError)
PMN_DEFINE_ERROR(ShapeError)
PMN_DEFINE_ERROR(IoError)

#undef PMN_DEFINE_ERROR

/// splitmix64-seeded xoshiro256** generator. Used instead of the <random>
/// distributions so that weights, masks and shuffles are identical across
/// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

private:
    std::uint64_t s_[4];
};

/// Mixes several values into one seed; used to derive per-step dropout seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

}  // namespace pmn
