#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace iplab {

// Joint-space vectors/matrices never exceed 3 DOF (stance), state space 6.
// Fixed-capacity Eigen types keep the simulation hot path heap-free while
// the actual dimension (2 or 3) stays a runtime property of the model.
using VecJ = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using MatJ = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
using VecX = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 6, 1>;
using MatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 6, 6>;
using GainMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 6>;
using RowX = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor, 1, 6>;

/// Error with a machine-readable kind, mapped to CLI exit codes and the
/// single-line JSON diagnostics emitted on stderr.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

inline void require(bool condition, const char* kind, const std::string& message) {
    if (!condition) throw Error(kind, message);
}

} // namespace iplab
