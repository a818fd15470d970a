#include "ddec/system.hpp"

#include <cmath>
#include <stdexcept>

namespace ddec {

DelaySystem validate_system(const RawSystem& raw) {
    if (raw.d <= 0) throw std::invalid_argument("system: state dimension d must be positive");
    if (raw.m <= 0) throw std::invalid_argument("system: input dimension m must be positive");
    if (raw.delays.empty()) throw std::invalid_argument("system: at least one delay required");

    if (raw.delays.front() <= 0.0)
        throw std::invalid_argument("system: delays must be positive");
    for (size_t j = 0; j + 1 < raw.delays.size(); ++j)
        if (!(raw.delays[j] < raw.delays[j + 1]))
            throw std::invalid_argument("system: delays not strictly increasing");

    if (raw.A.size() != raw.delays.size())
        throw std::invalid_argument("system: dimension mismatch (need one A matrix per delay)");
    for (const auto& Aj : raw.A)
        if (Aj.rows() != raw.d || Aj.cols() != raw.d)
            throw std::invalid_argument("system: dimension mismatch (A matrices must be d x d)");
    if (raw.B.rows() != raw.d || raw.B.cols() != raw.m)
        throw std::invalid_argument("system: dimension mismatch (B must be d x m)");

    const double lam_N = raw.delays.back();
    DelaySystem sys;
    sys.d = raw.d;
    sys.m = raw.m;
    sys.delays = raw.delays;
    sys.A = raw.A;
    sys.B = raw.B;

    if (!raw.kernel.valid()) {
        sys.kernel = PiecewisePolyKernel::zero(raw.d, lam_N);
    } else {
        if (raw.kernel.dim() != raw.d)
            throw std::invalid_argument("system: dimension mismatch (kernel must be d x d)");
        if (std::abs(raw.kernel.breakpoints().front()) > 1e-12 * std::max(1.0, lam_N) ||
            std::abs(raw.kernel.domain_end() - lam_N) > 1e-12 * std::max(1.0, lam_N))
            throw std::invalid_argument("system: kernel domain mismatch (must be [0, Lambda_N])");
        sys.kernel = raw.kernel;
    }
    return sys;
}

}  // namespace ddec
