#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace revlab {

using Vec = std::vector<double>;

// Error with a stable machine-parseable category, surfaced by the CLI as
// "error:<category>: <message>" with exit code 1.
struct ContractError : std::runtime_error {
    std::string category;

    ContractError(std::string cat, const std::string& msg)
        : std::runtime_error(msg), category(std::move(cat)) {}
};

inline void require(bool cond, const char* category, const std::string& msg) {
    if (!cond) {
        throw ContractError(category, msg);
    }
}

// Dense row-major matrix. Rows are contiguous; weights are stored as
// (out x in) so a linear layer is y = W x row-by-row.
struct Matrix {
    int rows = 0;
    int cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return data.size(); }
};

Matrix matmul(const Matrix& a, const Matrix& b);

// GEMM kernels used by the model's forward/backward passes. All of them
// compute each output element with a fixed sequential inner loop, so results
// are bitwise independent of the worker-thread count.
//
//   gemm_nn:     C (MxN) (+)= A (MxK) * B (KxN)
//   gemm_nt:     C (MxN) (+)= A (MxK) * B(NxK)^T
//   gemm_tn_acc: C (MxN)  += A (KxM)^T * B (KxN)
void gemm_nn(Matrix& c, const Matrix& a, const Matrix& b, bool accumulate = false);
void gemm_nt(Matrix& c, const Matrix& a, const Matrix& b, bool accumulate = false);
void gemm_tn_acc(Matrix& c, const Matrix& a, const Matrix& b);

Vec softmax(const Vec& z, double scale);
void softmax_inplace(double* z, int n, double scale);

double pearson(const Vec& xs, const Vec& ys);
double cosine_similarity(const Vec& a, const Vec& b);

double dot(const Vec& a, const Vec& b);
double dot(const double* a, const double* b, size_t n);
double norm2(const Vec& a);

// Central-difference gradient of f at params. Throws oracle-failure if f
// evaluates to a non-finite value.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& params,
                     double eps = 1e-5);

}  // namespace revlab
