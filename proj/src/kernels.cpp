#include "valign/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace valign::kernels {

namespace {
int g_threads = 1;
}

void set_threads(int n) {
    g_threads = n < 1 ? 1 : n;
#ifdef _OPENMP
    omp_set_num_threads(g_threads);
#endif
}

int threads() { return g_threads; }

void matmul_nt_serial(std::span<const double> a, std::span<const double> b,
                      std::span<double> c, std::int64_t n, std::int64_t k,
                      std::int64_t m) {
    for (std::int64_t i = 0; i < n; ++i) {
        const double* ai = a.data() + i * k;
        for (std::int64_t j = 0; j < m; ++j) {
            const double* bj = b.data() + j * k;
            double s = 0.0;
            for (std::int64_t t = 0; t < k; ++t) s += ai[t] * bj[t];
            c[static_cast<std::size_t>(i * m + j)] = s;
        }
    }
}

void matmul_nt_parallel(std::span<const double> a, std::span<const double> b,
                        std::span<double> c, std::int64_t n, std::int64_t k,
                        std::int64_t m) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const double* ai = a.data() + i * k;
        for (std::int64_t j = 0; j < m; ++j) {
            const double* bj = b.data() + j * k;
            double s = 0.0;
            for (std::int64_t t = 0; t < k; ++t) s += ai[t] * bj[t];
            c[static_cast<std::size_t>(i * m + j)] = s;
        }
    }
}

void matmul_nt(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::int64_t n, std::int64_t k,
               std::int64_t m) {
    if (g_threads > 1)
        matmul_nt_parallel(a, b, c, n, k, m);
    else
        matmul_nt_serial(a, b, c, n, k, m);
}

void matmul_tn_serial(std::span<const double> a, std::span<const double> b,
                      std::span<double> c, std::int64_t n, std::int64_t r,
                      std::int64_t cc) {
    for (std::int64_t i = 0; i < r; ++i) {
        double* ci = c.data() + i * cc;
        for (std::int64_t j = 0; j < cc; ++j) ci[j] = 0.0;
        for (std::int64_t t = 0; t < n; ++t) {
            const double av = a[static_cast<std::size_t>(t * r + i)];
            const double* bt = b.data() + t * cc;
            for (std::int64_t j = 0; j < cc; ++j) ci[j] += av * bt[j];
        }
    }
}

void matmul_tn_parallel(std::span<const double> a, std::span<const double> b,
                        std::span<double> c, std::int64_t n, std::int64_t r,
                        std::int64_t cc) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < r; ++i) {
        double* ci = c.data() + i * cc;
        for (std::int64_t j = 0; j < cc; ++j) ci[j] = 0.0;
        for (std::int64_t t = 0; t < n; ++t) {
            const double av = a[static_cast<std::size_t>(t * r + i)];
            const double* bt = b.data() + t * cc;
            for (std::int64_t j = 0; j < cc; ++j) ci[j] += av * bt[j];
        }
    }
}

void matmul_tn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::int64_t n, std::int64_t r,
               std::int64_t cc) {
    if (g_threads > 1)
        matmul_tn_parallel(a, b, c, n, r, cc);
    else
        matmul_tn_serial(a, b, c, n, r, cc);
}

void matmul_nn_serial(std::span<const double> a, std::span<const double> b,
                      std::span<double> c, std::int64_t n, std::int64_t k,
                      std::int64_t m) {
    for (std::int64_t i = 0; i < n; ++i) {
        const double* ai = a.data() + i * k;
        double* ci = c.data() + i * m;
        for (std::int64_t j = 0; j < m; ++j) ci[j] = 0.0;
        for (std::int64_t t = 0; t < k; ++t) {
            const double av = ai[t];
            const double* bt = b.data() + t * m;
            for (std::int64_t j = 0; j < m; ++j) ci[j] += av * bt[j];
        }
    }
}

void matmul_nn_parallel(std::span<const double> a, std::span<const double> b,
                        std::span<double> c, std::int64_t n, std::int64_t k,
                        std::int64_t m) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const double* ai = a.data() + i * k;
        double* ci = c.data() + i * m;
        for (std::int64_t j = 0; j < m; ++j) ci[j] = 0.0;
        for (std::int64_t t = 0; t < k; ++t) {
            const double av = ai[t];
            const double* bt = b.data() + t * m;
            for (std::int64_t j = 0; j < m; ++j) ci[j] += av * bt[j];
        }
    }
}

void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::int64_t n, std::int64_t k,
               std::int64_t m) {
    if (g_threads > 1)
        matmul_nn_parallel(a, b, c, n, k, m);
    else
        matmul_nn_serial(a, b, c, n, k, m);
}

void pairwise_sqdist_serial(std::span<const double> queries,
                            std::span<const double> refs,
                            std::span<double> out, std::int64_t nq,
                            std::int64_t nr, std::int64_t d) {
    for (std::int64_t q = 0; q < nq; ++q) {
        const double* qp = queries.data() + q * d;
        for (std::int64_t r = 0; r < nr; ++r) {
            const double* rp = refs.data() + r * d;
            double s = 0.0;
            for (std::int64_t t = 0; t < d; ++t) {
                const double diff = qp[t] - rp[t];
                s += diff * diff;
            }
            out[static_cast<std::size_t>(q * nr + r)] = s;
        }
    }
}

void pairwise_sqdist_parallel(std::span<const double> queries,
                              std::span<const double> refs,
                              std::span<double> out, std::int64_t nq,
                              std::int64_t nr, std::int64_t d) {
#pragma omp parallel for schedule(static)
    for (std::int64_t q = 0; q < nq; ++q) {
        const double* qp = queries.data() + q * d;
        for (std::int64_t r = 0; r < nr; ++r) {
            const double* rp = refs.data() + r * d;
            double s = 0.0;
            for (std::int64_t t = 0; t < d; ++t) {
                const double diff = qp[t] - rp[t];
                s += diff * diff;
            }
            out[static_cast<std::size_t>(q * nr + r)] = s;
        }
    }
}

void pairwise_sqdist(std::span<const double> queries,
                     std::span<const double> refs, std::span<double> out,
                     std::int64_t nq, std::int64_t nr, std::int64_t d) {
    if (g_threads > 1)
        pairwise_sqdist_parallel(queries, refs, out, nq, nr, d);
    else
        pairwise_sqdist_serial(queries, refs, out, nq, nr, d);
}

}  // namespace valign::kernels
