#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "hbnode/errors.hpp"
#include "hbnode/tensor.hpp"

namespace hbnode {

namespace detail {

// 1-based view so the classic EISPACK index arithmetic reads directly.
struct OneBased {
    Matrix& m;
    double& operator()(int i, int j) { return m(static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1)); }
};

/// Diagonal similarity scaling by powers of two (Parlett-Reinsch).
inline void balance(Matrix& mat) {
    OneBased a{mat};
    const int n = static_cast<int>(mat.rows());
    constexpr double radix = 2.0;
    constexpr double sqrdx = radix * radix;
    bool done = false;
    while (!done) {
        done = true;
        for (int i = 1; i <= n; ++i) {
            double r = 0.0, c = 0.0;
            for (int j = 1; j <= n; ++j)
                if (j != i) {
                    c += std::abs(a(j, i));
                    r += std::abs(a(i, j));
                }
            if (c == 0.0 || r == 0.0) continue;
            double g = r / radix;
            double f = 1.0;
            const double s = c + r;
            while (c < g) {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while (c > g) {
                f /= radix;
                c /= sqrdx;
            }
            if ((c + r) / f < 0.95 * s) {
                done = false;
                g = 1.0 / f;
                for (int j = 1; j <= n; ++j) a(i, j) *= g;
                for (int j = 1; j <= n; ++j) a(j, i) *= f;
            }
        }
    }
}

/// Reduction to upper Hessenberg form by stabilised elementary similarity
/// transforms. Entries below the subdiagonal are zeroed on return.
inline void hessenberg(Matrix& mat) {
    OneBased a{mat};
    const int n = static_cast<int>(mat.rows());
    for (int m = 2; m < n; ++m) {
        double x = 0.0;
        int piv = m;
        for (int j = m; j <= n; ++j)
            if (std::abs(a(j, m - 1)) > std::abs(x)) {
                x = a(j, m - 1);
                piv = j;
            }
        if (piv != m) {
            for (int j = m - 1; j <= n; ++j) std::swap(a(piv, j), a(m, j));
            for (int j = 1; j <= n; ++j) std::swap(a(j, piv), a(j, m));
        }
        if (x == 0.0) continue;
        for (int i = m + 1; i <= n; ++i) {
            double y = a(i, m - 1);
            if (y == 0.0) continue;
            y /= x;
            a(i, m - 1) = y;
            for (int j = m; j <= n; ++j) a(i, j) -= y * a(m, j);
            for (int j = 1; j <= n; ++j) a(j, m) += y * a(j, i);
        }
    }
    for (int i = 3; i <= n; ++i)
        for (int j = 1; j <= i - 2; ++j) a(i, j) = 0.0;
}

/// Francis double-shift QR on an upper Hessenberg matrix (destroyed).
/// `max_its` bounds the total number of sweeps over all roots.
inline std::vector<std::complex<double>> hessenberg_qr(Matrix& mat, int max_its) {
    OneBased a{mat};
    const int n = static_cast<int>(mat.rows());
    std::vector<double> wr(static_cast<std::size_t>(n) + 1, 0.0), wi(static_cast<std::size_t>(n) + 1, 0.0);
    constexpr double eps = std::numeric_limits<double>::epsilon();

    double anorm = 0.0;
    for (int i = 1; i <= n; ++i)
        for (int j = std::max(i - 1, 1); j <= n; ++j) anorm += std::abs(a(i, j));

    int nn = n;
    double t = 0.0;
    int total = 0;
    while (nn >= 1) {
        int its = 0;
        int l = 0;
        do {
            for (l = nn; l >= 2; --l) {
                double s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
                if (s == 0.0) s = anorm;
                if (std::abs(a(l, l - 1)) <= eps * s) {
                    a(l, l - 1) = 0.0;
                    break;
                }
            }
            if (l < 1) l = 1;
            double x = a(nn, nn);
            if (l == nn) {
                wr[static_cast<std::size_t>(nn)] = x + t;
                wi[static_cast<std::size_t>(nn)] = 0.0;
                --nn;
            } else {
                double y = a(nn - 1, nn - 1);
                double w = a(nn, nn - 1) * a(nn - 1, nn);
                if (l == nn - 1) {
                    const double p = 0.5 * (y - x);
                    const double q = p * p + w;
                    double z = std::sqrt(std::abs(q));
                    x += t;
                    const auto i1 = static_cast<std::size_t>(nn - 1), i2 = static_cast<std::size_t>(nn);
                    if (q >= 0.0) {
                        z = p + std::copysign(z, p);
                        wr[i1] = wr[i2] = x + z;
                        if (z != 0.0) wr[i2] = x - w / z;
                        wi[i1] = wi[i2] = 0.0;
                    } else {
                        wr[i1] = wr[i2] = x + p;
                        wi[i1] = z;
                        wi[i2] = -z;
                    }
                    nn -= 2;
                } else {
                    if (total >= max_its)
                        throw NumericalError("eigenvalues: QR iteration did not converge");
                    if (its > 0 && its % 10 == 0) {
                        // exceptional shift, scaled differently each time to break cycles
                        t += x;
                        for (int i = 1; i <= nn; ++i) a(i, i) -= x;
                        const double s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
                        const double k = 0.75 + 0.05 * static_cast<double>((its / 10) % 5);
                        y = x = k * s;
                        w = -0.4375 * s * s;
                    }
                    ++its;
                    ++total;
                    int m = nn - 2;
                    double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
                    for (; m >= l; --m) {
                        z = a(m, m);
                        r = x - z;
                        double s = y - z;
                        p = (r * s - w) / a(m + 1, m) + a(m, m + 1);
                        q = a(m + 1, m + 1) - z - r - s;
                        r = a(m + 2, m + 1);
                        s = std::abs(p) + std::abs(q) + std::abs(r);
                        p /= s;
                        q /= s;
                        r /= s;
                        if (m == l) break;
                        const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
                        const double v =
                            std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
                        if (u <= eps * v) break;
                    }
                    for (int i = m + 2; i <= nn; ++i) {
                        a(i, i - 2) = 0.0;
                        if (i != m + 2) a(i, i - 3) = 0.0;
                    }
                    for (int k = m; k <= nn - 1; ++k) {
                        if (k != m) {
                            p = a(k, k - 1);
                            q = a(k + 1, k - 1);
                            r = 0.0;
                            if (k != nn - 1) r = a(k + 2, k - 1);
                            x = std::abs(p) + std::abs(q) + std::abs(r);
                            if (x != 0.0) {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        const double s = std::copysign(std::sqrt(p * p + q * q + r * r), p);
                        if (s == 0.0) continue;
                        if (k == m) {
                            if (l != m) a(k, k - 1) = -a(k, k - 1);
                        } else {
                            a(k, k - 1) = -s * x;
                        }
                        p += s;
                        x = p / s;
                        y = q / s;
                        z = r / s;
                        q /= p;
                        r /= p;
                        for (int j = k; j <= nn; ++j) {
                            p = a(k, j) + q * a(k + 1, j);
                            if (k != nn - 1) {
                                p += r * a(k + 2, j);
                                a(k + 2, j) -= p * z;
                            }
                            a(k + 1, j) -= p * y;
                            a(k, j) -= p * x;
                        }
                        const int mmin = nn < k + 3 ? nn : k + 3;
                        for (int i = l; i <= mmin; ++i) {
                            p = x * a(i, k) + y * a(i, k + 1);
                            if (k != nn - 1) {
                                p += z * a(i, k + 2);
                                a(i, k + 2) -= p * r;
                            }
                            a(i, k + 1) -= p * q;
                            a(i, k) -= p;
                        }
                    }
                }
            }
        } while (nn >= 1 && l < nn - 1);
    }

    std::vector<std::complex<double>> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i)
        out.emplace_back(wr[static_cast<std::size_t>(i)], wi[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace detail

/// Eigenvalues of a real square matrix: balancing, Hessenberg reduction,
/// then shifted QR. Sorted by real part descending, ties by imaginary part
/// descending. Throws NumericalError when the iteration budget runs out.
inline std::vector<std::complex<double>> eigenvalues(const Matrix& A) {
    require_dim(A.square(), "eigenvalues: matrix must be square");
    if (A.rows() > 64) throw RangeError("eigenvalues: dimension above 64");
    if (!all_finite(A.data())) throw NumericalError("eigenvalues: non-finite input");
    if (A.rows() == 0) return {};
    Matrix h = A;
    detail::balance(h);
    detail::hessenberg(h);
    auto ev = detail::hessenberg_qr(h, 30 * std::max(10, static_cast<int>(A.rows())));
    std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() > b.imag();
    });
    return ev;
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
inline Matrix expm(const Matrix& A) {
    require_dim(A.square(), "expm: matrix must be square");
    if (A.rows() > 64) throw RangeError("expm: dimension above 64");
    const std::size_t n = A.rows();
    const double nrm = A.norm1();
    int squarings = 0;
    if (nrm > 0.25) squarings = static_cast<int>(std::ceil(std::log2(nrm / 0.25)));
    const Matrix B = A * std::ldexp(1.0, -squarings);

    Matrix result = Matrix::identity(n);
    Matrix term = Matrix::identity(n);
    for (int k = 1; k <= 30; ++k) {
        term = term * B;
        term *= 1.0 / k;
        result += term;
        if (term.max_abs() <= 1e-18 * result.max_abs()) break;
    }
    for (int i = 0; i < squarings; ++i) result = result * result;
    return result;
}

/// Coefficients c_0..c_n of det(lambda I - A) = sum c_k lambda^k (c_n = 1),
/// by Faddeev-LeVerrier.
inline std::vector<double> characteristic_polynomial(const Matrix& A) {
    require_dim(A.square(), "characteristic_polynomial: matrix must be square");
    const std::size_t n = A.rows();
    std::vector<double> c(n + 1, 0.0);
    c[n] = 1.0;
    Matrix M(n, n);
    for (std::size_t k = 1; k <= n; ++k) {
        M = A * M;
        for (std::size_t i = 0; i < n; ++i) M(i, i) += c[n - k + 1];
        const Matrix AM = A * M;
        double tr = 0.0;
        for (std::size_t i = 0; i < n; ++i) tr += AM(i, i);
        c[n - k] = -tr / static_cast<double>(k);
    }
    return c;
}

}  // namespace hbnode
