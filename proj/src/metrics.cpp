#include "voxsyn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "voxsyn/rng.hpp"

namespace voxsyn::metrics {

namespace {

Eigen::VectorXd row_mean(const Eigen::MatrixXd& m) { return m.colwise().mean(); }

// Unbiased sample covariance (rows are observations).
Eigen::MatrixXd covariance(const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd centered = m.rowwise() - m.colwise().mean();
    return centered.transpose() * centered / static_cast<double>(m.rows() - 1);
}

// Symmetric PSD square root; negative eigenvalues (numerical) clip to zero.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& s, bool& ok) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (s + s.transpose()));
    if (eig.info() != Eigen::Success) {
        ok = false;
        return Eigen::MatrixXd::Zero(s.rows(), s.cols());
    }
    ok = true;
    Eigen::VectorXd vals = eig.eigenvalues();
    const double floor_tol = -1e-8 * std::max(1.0, std::abs(vals.maxCoeff()));
    for (Index i = 0; i < vals.size(); ++i) {
        if (vals[i] < floor_tol) ok = false;
        vals[i] = std::sqrt(std::max(vals[i], 0.0));
    }
    return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

double trace_sqrt_product(const Eigen::MatrixXd& s1, const Eigen::MatrixXd& s2, bool& ok) {
    bool ok1 = false;
    const Eigen::MatrixXd r1 = sqrtm_psd(s1, ok1);
    const Eigen::MatrixXd inner = r1 * s2 * r1;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (inner + inner.transpose()));
    if (!ok1 || eig.info() != Eigen::Success) {
        ok = false;
        return 0.0;
    }
    ok = true;
    double acc = 0.0;
    const double floor_tol = -1e-8 * std::max(1.0, std::abs(eig.eigenvalues().maxCoeff()));
    for (Index i = 0; i < eig.eigenvalues().size(); ++i) {
        const double v = eig.eigenvalues()[i];
        if (v < floor_tol) ok = false;
        acc += std::sqrt(std::max(v, 0.0));
    }
    return acc;
}

}  // namespace

double fid(const FeatureSet& a, const FeatureSet& b) {
    if (a.dim() != b.dim())
        throw ShapeError("fid: feature dimensions differ: " + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()));
    if (a.count() < 2 || b.count() < 2)
        throw ValidationError("fid needs at least 2 feature rows per set");
    const Eigen::VectorXd mu1 = row_mean(a.features), mu2 = row_mean(b.features);
    Eigen::MatrixXd s1 = covariance(a.features), s2 = covariance(b.features);

    bool ok = false;
    double tr_sqrt = trace_sqrt_product(s1, s2, ok);
    if (!ok) {
        // regularized retry
        const double eps = 1e-6;
        s1.diagonal().array() += eps;
        s2.diagonal().array() += eps;
        tr_sqrt = trace_sqrt_product(s1, s2, ok);
        if (!ok)
            throw NumericalError("fid: covariance square root failed even after regularization");
    }
    return (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
}

namespace {

// k(x, y) = (x.y / F + 1)^3
double poly3(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const double v = x.dot(y) / static_cast<double>(x.size()) + 1.0;
    return v * v * v;
}

// Paired U-statistic when the index lists have equal length: same-position
// cross pairs are excluded, so literally identical sets give exactly zero.
// Unequal lengths fall back to the all-pairs cross term.
double mmd2_on_indices(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                       const std::vector<Index>& ix, const std::vector<Index>& iy) {
    const Index m = static_cast<Index>(ix.size());
    const Index n = static_cast<Index>(iy.size());
    const bool paired = m == n;
    double xx = 0.0, yy = 0.0, xy = 0.0;
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < m; ++j)
            if (i != j)
                xx += poly3(x.row(ix[static_cast<size_t>(i)]), x.row(ix[static_cast<size_t>(j)]));
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            if (i != j)
                yy += poly3(y.row(iy[static_cast<size_t>(i)]), y.row(iy[static_cast<size_t>(j)]));
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j)
            if (!paired || i != j)
                xy += poly3(x.row(ix[static_cast<size_t>(i)]), y.row(iy[static_cast<size_t>(j)]));
    const double md = static_cast<double>(m), nd = static_cast<double>(n);
    if (paired)
        return (xx + yy - 2.0 * xy) / (md * (md - 1.0));
    return xx / (md * (md - 1.0)) + yy / (nd * (nd - 1.0)) - 2.0 * xy / (md * nd);
}

std::vector<Index> draw_without_replacement(Index n, Index m, Rng& rng) {
    std::vector<Index> pool(static_cast<size_t>(n));
    std::iota(pool.begin(), pool.end(), Index(0));
    for (Index i = 0; i < m; ++i) {
        const Index j = i + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(n - i)));
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    pool.resize(static_cast<size_t>(m));
    return pool;
}

}  // namespace

double mmd2_unbiased(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    if (x.rows() < 2 || y.rows() < 2) throw ValidationError("mmd needs at least 2 rows per set");
    std::vector<Index> ix(static_cast<size_t>(x.rows())), iy(static_cast<size_t>(y.rows()));
    std::iota(ix.begin(), ix.end(), Index(0));
    std::iota(iy.begin(), iy.end(), Index(0));
    return mmd2_on_indices(x, y, ix, iy);
}

KidResult kid(const FeatureSet& a, const FeatureSet& b, int subsets, Index subset_size,
              std::uint64_t seed) {
    if (a.dim() != b.dim()) throw ShapeError("kid: feature dimensions differ");
    if (subset_size < 2) throw ValidationError("kid subset_size must be >= 2");
    if (subset_size > std::min(a.count(), b.count()))
        throw ValidationError("kid subset_size " + std::to_string(subset_size) +
                              " exceeds set size " +
                              std::to_string(std::min(a.count(), b.count())));
    if (subsets < 1) throw ValidationError("kid needs at least one subset");

    Rng rng(derive_seed(seed, "kid_subsets"));
    std::vector<double> vals;
    vals.reserve(static_cast<size_t>(subsets));
    const bool shared_draw = a.count() == b.count();
    for (int s = 0; s < subsets; ++s) {
        const auto ix = draw_without_replacement(a.count(), subset_size, rng);
        // equal-sized sets share the index draw so the paired cross-term
        // exclusion removes genuine self-pairs when a and b coincide
        const auto iy = shared_draw ? ix : draw_without_replacement(b.count(), subset_size, rng);
        vals.push_back(mmd2_on_indices(a.features, b.features, ix, iy));
    }
    KidResult r;
    r.subsets = subsets;
    r.subset_size = subset_size;
    for (double v : vals) r.mean += v;
    r.mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(var / static_cast<double>(vals.size()));
    return r;
}

IsResult inception_score(const Eigen::MatrixXd& probs, int folds) {
    const Index n = probs.rows(), c = probs.cols();
    if (n < 1 || c < 1) throw ValidationError("inception score needs a non-empty matrix");
    for (Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (Index j = 0; j < c; ++j) {
            if (probs(i, j) < -1e-12)
                throw ValidationError("inception score: negative probability in row " +
                                      std::to_string(i));
            s += probs(i, j);
        }
        if (std::abs(s - 1.0) > 1e-5)
            throw ValidationError("inception score: row " + std::to_string(i) + " sums to " +
                                  std::to_string(s) + ", expected 1");
    }
    const int f = std::max(1, std::min<int>(folds, static_cast<int>(n)));
    std::vector<double> scores;
    for (int k = 0; k < f; ++k) {
        const Index lo = n * k / f, hi = n * (k + 1) / f;
        const Index m = hi - lo;
        Eigen::VectorXd marginal = Eigen::VectorXd::Zero(c);
        for (Index i = lo; i < hi; ++i) marginal += probs.row(i).transpose();
        marginal /= static_cast<double>(m);
        double kl = 0.0;
        for (Index i = lo; i < hi; ++i)
            for (Index j = 0; j < c; ++j) {
                const double p = probs(i, j);
                if (p > 0.0) kl += p * (std::log(p) - std::log(marginal[j]));
            }
        scores.push_back(std::exp(kl / static_cast<double>(m)));
    }
    IsResult r;
    r.folds = f;
    for (double v : scores) r.mean += v;
    r.mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double v : scores) var += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(var / static_cast<double>(scores.size()));
    return r;
}

}  // namespace voxsyn::metrics
