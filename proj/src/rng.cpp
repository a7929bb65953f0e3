#include "riskmpc/rng.hpp"

#include "riskmpc/errors.hpp"

namespace riskmpc {

GaussianSampler::GaussianSampler(Vec mu, const Mat& cov) : mu_(std::move(mu)) {
    if (cov.rows() != mu_.size() || cov.cols() != mu_.size()) {
        throw DimensionMismatch("GaussianSampler: covariance shape");
    }
    chol_ = chol_psd(symmetrize(cov));
}

}  // namespace riskmpc
