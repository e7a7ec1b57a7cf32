//! Hermitian eigendecomposition, matrix square roots and conditioning.

use ltbf::linalg::{condition_number, hermitian_eig, invsqrtm_psd, matmul, sqrtm_psd, ComplexMatrix, HermitianPsd};
use ltbf::arith::Arith;
use num_complex::Complex64;

fn main() -> ltbf::error::Result<()> {
    let c = |re, im| Complex64::new(re, im);
    let a = HermitianPsd::from_matrix(ComplexMatrix::from_rows(&[
        vec![c(4.0, 0.0), c(1.0, 1.0), c(0.0, 0.5)],
        vec![c(1.0, -1.0), c(3.0, 0.0), c(0.2, 0.0)],
        vec![c(0.0, -0.5), c(0.2, 0.0), c(1.0, 0.0)],
    ])?)?;

    let e = hermitian_eig(&a)?;
    println!("eigenvalues (descending): {:?}", e.values);
    println!("condition number: {:.4}", condition_number(&a)?);

    let s = sqrtm_psd(&a)?;
    let back = matmul(s.matrix(), s.matrix(), Arith::FP64)?;
    println!("|sqrt(A)^2 - A|_F = {:.2e}", back.sub(a.matrix())?.frobenius_norm());

    let w = invsqrtm_psd(&a, None)?;
    let whitened = matmul(&matmul(w.matrix(), a.matrix(), Arith::FP64)?, w.matrix(), Arith::FP64)?;
    println!("|A^-1/2 A A^-1/2 - I|_F = {:.2e}", whitened.sub(&ComplexMatrix::identity(3))?.frobenius_norm());
    Ok(())
}
