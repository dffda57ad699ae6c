#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace hierest
{

enum class Errc
{
    NonSymmetric,
    Disconnected,
    BadEntries,
    BadDimension,
    BadRange,
    BadSchedule,
    NotPersistentlyExciting,
    InvalidArgument,
    InsufficientSamples,
    Config,
    Divergence,
    Io,
};

const char* to_string(Errc code);

/// Library-wide exception. The code lets callers (the CLI in particular) map
/// failures onto exit codes without parsing messages.
class Error : public std::runtime_error
{
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(what)
        , m_code(code)
    {
    }

    Errc code() const noexcept { return m_code; }

private:
    Errc m_code;
};

/// Induced Euclidean norm (largest singular value).
double induced_norm(const Eigen::Ref<const Eigen::MatrixXd>& m);

/// Induced Euclidean norm of a symmetric matrix (largest |eigenvalue|).
double symmetric_induced_norm(const Eigen::Ref<const Eigen::MatrixXd>& m);

} // namespace hierest
