#include <hierest/common.hpp>

namespace hierest
{

const char* to_string(Errc code)
{
    switch (code)
    {
    case Errc::NonSymmetric:
        return "NonSymmetric";
    case Errc::Disconnected:
        return "Disconnected";
    case Errc::BadEntries:
        return "BadEntries";
    case Errc::BadDimension:
        return "BadDimension";
    case Errc::BadRange:
        return "BadRange";
    case Errc::BadSchedule:
        return "BadSchedule";
    case Errc::NotPersistentlyExciting:
        return "NotPersistentlyExciting";
    case Errc::InvalidArgument:
        return "InvalidArgument";
    case Errc::InsufficientSamples:
        return "InsufficientSamples";
    case Errc::Config:
        return "Config";
    case Errc::Divergence:
        return "Divergence";
    case Errc::Io:
        return "Io";
    }
    return "Unknown";
}

double induced_norm(const Eigen::Ref<const Eigen::MatrixXd>& m)
{
    if (m.size() == 0)
        return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    return svd.singularValues()(0);
}

double symmetric_induced_norm(const Eigen::Ref<const Eigen::MatrixXd>& m)
{
    if (m.size() == 0)
        return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace hierest
