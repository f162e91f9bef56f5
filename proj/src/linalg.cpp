#include "mixlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mixlab/common.hpp"

namespace mixlab {

namespace {

double off_diagonal_norm(const std::vector<double>& a, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) acc += a[static_cast<std::size_t>(i) * n + j] * a[static_cast<std::size_t>(i) * n + j];
    return std::sqrt(2.0 * acc);
}

} // namespace

std::vector<double> jacobi_eigen(std::vector<double> a, int n, std::vector<double>* vectors, double tol,
                                 int max_sweeps) {
    if (n <= 0) throw NumericError("eigen: empty matrix");
    const std::size_t un = static_cast<std::size_t>(n);
    if (a.size() != un * un) throw NumericError("eigen: size mismatch");

    double fro = 0.0;
    for (double v : a) fro += v * v;
    fro = std::sqrt(fro);
    const double threshold = tol * std::max(1.0, fro);

    std::vector<double> vt; // eigenvectors as rows
    if (vectors) {
        vt.assign(un * un, 0.0);
        for (int i = 0; i < n; ++i) vt[static_cast<std::size_t>(i) * un + static_cast<std::size_t>(i)] = 1.0;
    }

    std::vector<double> rowp(un), rowq(un);
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        if (off_diagonal_norm(a, n) <= threshold) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[static_cast<std::size_t>(p) * un + q];
                if (apq == 0.0) continue;
                const double app = a[static_cast<std::size_t>(p) * un + p];
                const double aqq = a[static_cast<std::size_t>(q) * un + q];
                // Skip rotations that cannot move the off-norm meaningfully.
                if (std::abs(apq) <= 1e-3 * threshold / n) continue;

                const double tau = (aqq - app) / (2.0 * apq);
                const double t = tau >= 0.0 ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                            : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                double* __restrict__ ap = a.data() + static_cast<std::size_t>(p) * un;
                double* __restrict__ aq = a.data() + static_cast<std::size_t>(q) * un;
                // Rotate rows p and q; columns are restored by symmetry below.
                for (int k = 0; k < n; ++k) {
                    const double akp = ap[k];
                    const double akq = aq[k];
                    ap[k] = c * akp - s * akq;
                    aq[k] = s * akp + c * akq;
                }
                // Exact 2x2 block.
                const double app_new = app - t * apq;
                const double aqq_new = aqq + t * apq;
                ap[p] = app_new;
                ap[q] = 0.0;
                aq[p] = 0.0;
                aq[q] = aqq_new;
                // Mirror the two updated rows into their columns.
                for (int k = 0; k < n; ++k) {
                    if (k == p || k == q) continue;
                    a[static_cast<std::size_t>(k) * un + p] = ap[k];
                    a[static_cast<std::size_t>(k) * un + q] = aq[k];
                }
                if (vectors) {
                    double* __restrict__ vp = vt.data() + static_cast<std::size_t>(p) * un;
                    double* __restrict__ vq = vt.data() + static_cast<std::size_t>(q) * un;
                    for (int k = 0; k < n; ++k) {
                        const double vkp = vp[k];
                        const double vkq = vq[k];
                        vp[k] = c * vkp - s * vkq;
                        vq[k] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    if (sweep == max_sweeps && off_diagonal_norm(a, n) > threshold)
        throw NumericError("eigen: Jacobi iteration did not converge in " + std::to_string(max_sweeps) + " sweeps");

    std::vector<double> values(un);
    for (int i = 0; i < n; ++i) values[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i) * un + i];

    std::vector<int> order(un);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return values[static_cast<std::size_t>(i)] < values[static_cast<std::size_t>(j)]; });

    std::vector<double> sorted(un);
    for (std::size_t i = 0; i < un; ++i) sorted[i] = values[static_cast<std::size_t>(order[i])];
    if (vectors) {
        vectors->assign(un * un, 0.0);
        for (std::size_t i = 0; i < un; ++i)
            std::copy_n(vt.begin() + static_cast<std::size_t>(order[i]) * un, un, vectors->begin() + i * un);
    }
    return sorted;
}

} // namespace mixlab
