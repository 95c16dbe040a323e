#pragma once

#include <cstdint>
#include <span>

namespace valign::kernels {

// Dense kernels behind the encoder and the evaluation scans. Each has a
// serial reference and an OpenMP variant parallelized over independent output
// rows; per-row reduction order is identical in both, so results are bitwise
// equal for any thread count. The undecorated name dispatches on the
// configured thread count.

void set_threads(int n);
int threads();

// C[n,m] = A[n,k] * B[m,k]^T
void matmul_nt_serial(std::span<const double> a, std::span<const double> b,
                      std::span<double> c, std::int64_t n, std::int64_t k,
                      std::int64_t m);
void matmul_nt_parallel(std::span<const double> a, std::span<const double> b,
                        std::span<double> c, std::int64_t n, std::int64_t k,
                        std::int64_t m);
void matmul_nt(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::int64_t n, std::int64_t k,
               std::int64_t m);

// C[r,c] = A[n,r]^T * B[n,c]
void matmul_tn_serial(std::span<const double> a, std::span<const double> b,
                      std::span<double> c, std::int64_t n, std::int64_t r,
                      std::int64_t cc);
void matmul_tn_parallel(std::span<const double> a, std::span<const double> b,
                        std::span<double> c, std::int64_t n, std::int64_t r,
                        std::int64_t cc);
void matmul_tn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::int64_t n, std::int64_t r,
               std::int64_t cc);

// C[n,m] = A[n,k] * B[k,m]
void matmul_nn_serial(std::span<const double> a, std::span<const double> b,
                      std::span<double> c, std::int64_t n, std::int64_t k,
                      std::int64_t m);
void matmul_nn_parallel(std::span<const double> a, std::span<const double> b,
                        std::span<double> c, std::int64_t n, std::int64_t k,
                        std::int64_t m);
void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::int64_t n, std::int64_t k,
               std::int64_t m);

// out[q,r] = ||Q[q,:] - R[r,:]||^2 for every query/reference row pair.
void pairwise_sqdist_serial(std::span<const double> queries,
                            std::span<const double> refs,
                            std::span<double> out, std::int64_t nq,
                            std::int64_t nr, std::int64_t d);
void pairwise_sqdist_parallel(std::span<const double> queries,
                              std::span<const double> refs,
                              std::span<double> out, std::int64_t nq,
                              std::int64_t nr, std::int64_t d);
void pairwise_sqdist(std::span<const double> queries,
                     std::span<const double> refs, std::span<double> out,
                     std::int64_t nq, std::int64_t nr, std::int64_t d);

}  // namespace valign::kernels
