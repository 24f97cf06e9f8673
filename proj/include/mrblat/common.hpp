#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace mrblat {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Cplx = std::complex<double>;

constexpr double kSpeedOfLight = 299792458.0;    // m/s
constexpr double kBoltzmann = 1.380649e-23;      // J/K
constexpr double kPi = 3.14159265358979323846;

/// Thrown when a configuration or argument violates a documented precondition.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Thrown when a numeric routine cannot proceed (singular system, divergence, ...).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mrblat
