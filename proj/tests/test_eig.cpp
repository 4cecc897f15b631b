#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "nrmf/eig.hpp"
#include "oracles.hpp"

using nrmf::DenseMatrix;
using nrmf::EigResult;

TEST(SymEig, DiagonalMatrix) {
    DenseMatrix a(3, 3);
    a.at(0, 0) = 3.0;
    a.at(1, 1) = 1.0;
    a.at(2, 2) = 2.0;
    EigResult e = nrmf::sym_eig(a);
    ASSERT_EQ(e.eigenvalues.size(), 3u);
    EXPECT_DOUBLE_EQ(e.eigenvalues[0], 3.0);
    EXPECT_DOUBLE_EQ(e.eigenvalues[1], 2.0);
    EXPECT_DOUBLE_EQ(e.eigenvalues[2], 1.0);
    // axis eigenvectors: eigenvalue 3 -> e_0, 2 -> e_2, 1 -> e_1
    EXPECT_DOUBLE_EQ(e.eigenvectors.at(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(e.eigenvectors.at(2, 1), 1.0);
    EXPECT_DOUBLE_EQ(e.eigenvectors.at(1, 2), 1.0);
}

TEST(SymEig, IdentityAllOnes) {
    EigResult e = nrmf::sym_eig(DenseMatrix::identity(5));
    for (double v : e.eigenvalues) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(SymEig, NonSquareThrows) {
    EXPECT_THROW(nrmf::sym_eig(DenseMatrix(2, 3)), nrmf::Error);
}

TEST(SymEig, AsymmetricThrows) {
    DenseMatrix a(2, 2, {1.0, 2.0, 3.0, 4.0});
    EXPECT_THROW(nrmf::sym_eig(a), nrmf::Error);
}

TEST(SymEig, EigenpairResidualsAndOrthonormality) {
    nrmf::Rng rng(5);
    DenseMatrix w = oracle::random_matrix(6, 6, rng);
    DenseMatrix a = nrmf::matmul_nt(w, w);  // symmetric PSD
    EigResult e = nrmf::sym_eig(a);

    const double norm = a.frobenius_norm();
    for (int i = 0; i < 6; ++i) {
        // residual ||A v - lambda v||
        double res = 0.0;
        for (int r = 0; r < 6; ++r) {
            double av = 0.0;
            for (int c = 0; c < 6; ++c) av += a.at(r, c) * e.eigenvectors.at(c, i);
            const double diff = av - e.eigenvalues[static_cast<std::size_t>(i)] *
                                         e.eigenvectors.at(r, i);
            res += diff * diff;
        }
        EXPECT_LT(std::sqrt(res), 1e-10 * norm);
        for (int j = 0; j < 6; ++j) {
            double dot = 0.0;
            for (int r = 0; r < 6; ++r) dot += e.eigenvectors.at(r, i) * e.eigenvectors.at(r, j);
            EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-8);
        }
    }
}

// Gram eigenvalues = squared singular values of the rectangular matrix,
// cross-checked against a bidiagonalization SVD.
TEST(SymEig, GramMatchesSquaredSingularValues) {
    nrmf::Rng rng(9);
    DenseMatrix w = oracle::random_matrix(4, 7, rng);
    DenseMatrix gram = nrmf::matmul_nt(w, w);
    EigResult e = nrmf::sym_eig(gram);
    std::vector<double> sv = oracle::svd_singular_values(w);
    ASSERT_EQ(e.eigenvalues.size(), 4u);
    for (int i = 0; i < 4; ++i)
        EXPECT_NEAR(e.eigenvalues[static_cast<std::size_t>(i)],
                    sv[static_cast<std::size_t>(i)] * sv[static_cast<std::size_t>(i)],
                    1e-10 * e.eigenvalues[0]);
}

TEST(SymEig, EigenvalueSumEqualsTrace) {
    nrmf::Rng rng(15);
    for (int n : {2, 5, 9}) {
        DenseMatrix w = oracle::random_matrix(n, n + 3, rng);
        DenseMatrix a = nrmf::matmul_nt(w, w);
        EigResult e = nrmf::sym_eig(a);
        const double sum = std::accumulate(e.eigenvalues.begin(), e.eigenvalues.end(), 0.0);
        EXPECT_NEAR(sum, a.trace(), 1e-10 * std::fabs(a.trace()));
    }
}

TEST(SymEig, AgainstEigenOnRandomSymmetric) {
    nrmf::Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 3 + trial;
        DenseMatrix w = oracle::random_matrix(n, n, rng);
        DenseMatrix a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a.at(i, j) = 0.5 * (w.at(i, j) + w.at(j, i));
        EigResult got = nrmf::sym_eig(a);
        std::vector<double> expect = oracle::sym_eigenvalues_desc(a);
        for (int i = 0; i < n; ++i)
            EXPECT_NEAR(got.eigenvalues[static_cast<std::size_t>(i)],
                        expect[static_cast<std::size_t>(i)], 1e-10 * a.frobenius_norm() + 1e-12);
    }
}

TEST(GramEigenvalues, ClampsRoundoffTail) {
    // planted rank-1 kernel: exactly one positive eigenvalue, zero tail
    nrmf::Rng rng(33);
    nrmf::Tensor4 k = oracle::planted_kernel(3, 3, 5, 6, 1, 1, rng);
    std::vector<double> lambda = nrmf::gram_eigenvalues(k, 3);
    ASSERT_EQ(lambda.size(), 5u);
    EXPECT_GT(lambda[0], 0.0);
    for (std::size_t i = 1; i < lambda.size(); ++i) EXPECT_EQ(lambda[i], 0.0);
}
