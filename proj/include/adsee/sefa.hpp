#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "adsee/common.hpp"
#include "adsee/matrix.hpp"
#include "json.hpp"

namespace adsee {

struct EigenResult {
    std::vector<double> values;  // descending
    Matrix vectors;              // column p is the eigenvector for values[p]
};

namespace detail {
inline double offdiag_frobenius(const Matrix& s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.rows(); ++i)
        for (std::size_t j = 0; j < s.cols(); ++j)
            if (i != j) acc += s(i, j) * s(i, j);
    return std::sqrt(acc);
}
}  // namespace detail

/// Symmetric eigendecomposition via cyclic Jacobi rotations.
/// Converges when the off-diagonal Frobenius norm drops below 1e-12 * ||S||_F,
/// capped at 100 sweeps. Eigenvectors are returned orthonormal, sorted by
/// descending eigenvalue, with each vector's first component of magnitude
/// > 1e-12 made positive so results are reproducible.
inline EigenResult symmetric_eig(const Matrix& input) {
    const std::size_t n = input.rows();
    if (n == 0 || input.cols() != n) throw user_error("symmetric_eig: matrix must be square");
    const double scale = input.frobenius_norm();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(input(i, j) - input(j, i)) > 1e-10 * std::max(1.0, scale))
                throw user_error("symmetric_eig: matrix is not symmetric");

    Matrix s = input;
    Matrix v = Matrix::identity(n);
    const double tol = 1e-12 * std::max(scale, std::numeric_limits<double>::min());

    constexpr int max_sweeps = 100;
    bool converged = detail::offdiag_frobenius(s) <= tol;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = s(p, q);
                if (apq == 0.0) continue;
                const double app = s(p, p), aqq = s(q, q);
                // Stable rotation angle: tan from the smaller root of the
                // quadratic, as in Golub & Van Loan.
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double skp = s(k, p), skq = s(k, q);
                    s(k, p) = c * skp - sn * skq;
                    s(k, q) = sn * skp + c * skq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double spk = s(p, k), sqk = s(q, k);
                    s(p, k) = c * spk - sn * sqk;
                    s(q, k) = sn * spk + c * sqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
        converged = detail::offdiag_frobenius(s) <= tol;
    }
    if (!converged) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3e", detail::offdiag_frobenius(s));
        throw user_error(std::string("symmetric_eig: no convergence after 100 sweeps; "
                                     "off-diagonal norm ") + buf);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s(a, a) > s(b, b); });

    EigenResult out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t p = 0; p < n; ++p) {
        const std::size_t src = order[p];
        out.values[p] = s(src, src);
        double sign = 1.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (std::abs(v(k, src)) > 1e-12) {
                sign = v(k, src) > 0.0 ? 1.0 : -1.0;
                break;
            }
        }
        for (std::size_t k = 0; k < n; ++k) out.vectors(k, p) = sign * v(k, src);
    }
    return out;
}

/// Semantic edit directions for a generator weight matrix A: the top-q unit
/// eigenvectors of A^T A, ordered by descending eigenvalue.
struct DirectionSet {
    std::vector<std::vector<double>> directions;  // q vectors of length l
    std::vector<double> eigenvalues;              // descending, length q
    std::string source;                           // provenance of A (free text)

    std::size_t count() const { return directions.size(); }
    std::size_t dim() const { return directions.empty() ? 0 : directions.front().size(); }
};

inline DirectionSet sefa(const Matrix& a, std::size_t q, std::string source = {}) {
    if (a.rows() == 0 || a.cols() == 0) throw user_error("sefa: empty weight matrix");
    if (q == 0) throw user_error("sefa: q must be >= 1");
    const std::size_t l = a.cols();
    if (q > l) throw user_error("sefa: q exceeds the latent channel width");

    // Gram matrix A^T A, symmetric by construction.
    Matrix gram(l, l);
    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t j = i; j < l; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.rows(); ++k) acc += a(k, i) * a(k, j);
            gram(i, j) = acc;
            gram(j, i) = acc;
        }
    }
    const EigenResult eig = symmetric_eig(gram);

    DirectionSet set;
    set.source = std::move(source);
    set.directions.resize(q);
    set.eigenvalues.assign(eig.values.begin(), eig.values.begin() + static_cast<long>(q));
    for (std::size_t p = 0; p < q; ++p) {
        set.directions[p].resize(l);
        for (std::size_t k = 0; k < l; ++k) set.directions[p][k] = eig.vectors(k, p);
    }
    return set;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw user_error("cosine_similarity: length mismatch");
    const double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw user_error("cosine_similarity: zero vector");
    return dot(a, b) / (na * nb);
}

inline void to_json(nlohmann::json& j, const DirectionSet& s) {
    j = nlohmann::json{
        {"schema_version", "adsee-directions/1"},
        {"directions", s.directions},
        {"eigenvalues", s.eigenvalues},
        {"source", s.source},
    };
}

inline void from_json(const nlohmann::json& j, DirectionSet& s) {
    j.at("directions").get_to(s.directions);
    j.at("eigenvalues").get_to(s.eigenvalues);
    if (j.contains("source")) j.at("source").get_to(s.source);
    if (s.directions.size() != s.eigenvalues.size())
        throw user_error("direction file: directions/eigenvalues count mismatch");
    for (const auto& d : s.directions)
        if (d.size() != s.directions.front().size())
            throw user_error("direction file: direction lengths differ");
}

}  // namespace adsee
