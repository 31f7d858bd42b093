#include "slm/mat.hpp"

#include <stdexcept>

namespace slm::kernels {

static void check_matmul(int ak, int bk, int m, int n, Mat & c) {
    if (ak != bk) {
        throw std::invalid_argument("matmul: inner dimensions do not match");
    }
    if (c.rows != m || c.cols != n) {
        c = Mat(m, n);
    }
}

namespace serial {

void matmul(const Mat & a, const Mat & b, Mat & c) {
    check_matmul(a.cols, b.rows, a.rows, b.cols, c);
    for (int i = 0; i < a.rows; ++i) {
        double * ci = c.row_ptr(i);
        const double * ai = a.row_ptr(i);
        for (int j = 0; j < b.cols; ++j) {
            ci[j] = 0.0;
        }
        for (int k = 0; k < a.cols; ++k) {
            const double aik = ai[k];
            const double * bk = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) {
                ci[j] += aik * bk[j];
            }
        }
    }
}

void matmul_nt(const Mat & a, const Mat & b, Mat & c) {
    check_matmul(a.cols, b.cols, a.rows, b.rows, c);
    for (int i = 0; i < a.rows; ++i) {
        const double * ai = a.row_ptr(i);
        double * ci = c.row_ptr(i);
        for (int j = 0; j < b.rows; ++j) {
            const double * bj = b.row_ptr(j);
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) {
                acc += ai[k] * bj[k];
            }
            ci[j] = acc;
        }
    }
}

void matmul_tn(const Mat & a, const Mat & b, Mat & c) {
    check_matmul(a.rows, b.rows, a.cols, b.cols, c);
    for (int i = 0; i < a.cols; ++i) {
        double * ci = c.row_ptr(i);
        for (int j = 0; j < b.cols; ++j) {
            ci[j] = 0.0;
        }
        for (int k = 0; k < a.rows; ++k) {
            const double aki = a(k, i);
            const double * bk = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) {
                ci[j] += aki * bk[j];
            }
        }
    }
}

} // namespace serial

void matmul(const Mat & a, const Mat & b, Mat & c) {
    check_matmul(a.cols, b.rows, a.rows, b.cols, c);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < a.rows; ++i) {
        double * ci = c.row_ptr(i);
        const double * ai = a.row_ptr(i);
        for (int j = 0; j < b.cols; ++j) {
            ci[j] = 0.0;
        }
        for (int k = 0; k < a.cols; ++k) {
            const double aik = ai[k];
            const double * bk = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) {
                ci[j] += aik * bk[j];
            }
        }
    }
}

void matmul_nt(const Mat & a, const Mat & b, Mat & c) {
    check_matmul(a.cols, b.cols, a.rows, b.rows, c);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < a.rows; ++i) {
        const double * ai = a.row_ptr(i);
        double * ci = c.row_ptr(i);
        for (int j = 0; j < b.rows; ++j) {
            const double * bj = b.row_ptr(j);
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) {
                acc += ai[k] * bj[k];
            }
            ci[j] = acc;
        }
    }
}

void matmul_tn(const Mat & a, const Mat & b, Mat & c) {
    check_matmul(a.rows, b.rows, a.cols, b.cols, c);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < a.cols; ++i) {
        double * ci = c.row_ptr(i);
        for (int j = 0; j < b.cols; ++j) {
            ci[j] = 0.0;
        }
        for (int k = 0; k < a.rows; ++k) {
            const double aki = a(k, i);
            const double * bk = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) {
                ci[j] += aki * bk[j];
            }
        }
    }
}

} // namespace slm::kernels
