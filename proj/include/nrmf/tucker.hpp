#pragma once

#include <vector>

#include "nrmf/eig.hpp"
#include "nrmf/error.hpp"
#include "nrmf/tensor.hpp"

namespace nrmf {

// Tucker-2 factors of a kernel: only the channel modes are decomposed, the
// spatial modes stay intact. u3 [S x R3] and u4 [T x R4] have orthonormal
// columns; core is [D_h x D_w x R3 x R4].
struct Tucker2Factors {
    DenseMatrix u3;
    Tensor4 core;
    DenseMatrix u4;

    int r3() const { return u3.cols(); }
    int r4() const { return u4.cols(); }
    int s() const { return u3.rows(); }
    int t() const { return u4.rows(); }
};

// Sequentially truncated HOSVD: u3 is the leading eigenvectors of the
// mode-3 Gram of k; the kernel is then projected onto that subspace and u4
// comes from the mode-4 Gram of the projection. The sequential form keeps
// the truncation error within a few percent of the alternating-optimization
// optimum, where factoring both modes from the unprojected kernel does not.
inline Tucker2Factors tucker2_decompose(const Tensor4& k, int r3, int r4) {
    if (r3 < 1 || r3 > k.s()) throw_shape("tucker2: r3 out of range");
    if (r4 < 1 || r4 > k.t()) throw_shape("tucker2: r4 out of range");

    const EigResult e3 = sym_eig(mode_gram(k, 3));
    DenseMatrix u3(k.s(), r3);
    for (int i = 0; i < k.s(); ++i)
        for (int c = 0; c < r3; ++c) u3.at(i, c) = e3.eigenvectors.at(i, c);

    const Tensor4 projected =
        Tensor4::from_tensor(kmode_product(k.as_tensor(), u3.transposed(), 3));

    const EigResult e4 = sym_eig(mode_gram(projected, 4));
    DenseMatrix u4(k.t(), r4);
    for (int i = 0; i < k.t(); ++i)
        for (int c = 0; c < r4; ++c) u4.at(i, c) = e4.eigenvectors.at(i, c);

    Tensor core = kmode_product(projected.as_tensor(), u4.transposed(), 4);

    return Tucker2Factors{std::move(u3), Tensor4::from_tensor(core), std::move(u4)};
}

// core x3 u3 x4 u4, back to a [D_h x D_w x S x T] kernel.
inline Tensor4 tucker2_reconstruct(const Tucker2Factors& f) {
    if (f.core.s() != f.r3() || f.core.t() != f.r4())
        throw_shape("tucker2_reconstruct: factor shapes do not compose");
    Tensor out = kmode_product(f.core.as_tensor(), f.u3, 3);
    out = kmode_product(out, f.u4, 4);
    return Tensor4::from_tensor(out);
}

}  // namespace nrmf
