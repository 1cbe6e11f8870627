//! Thin wrappers over LAPACK for the decompositions used throughout the crate.

use crate::{Error, Result, C64};
use ndarray::{Array1, Array2, ArrayView2, Axis, ShapeBuilder};
use ndarray_linalg::{EigValsh, Eigh, UPLO};

extern "C" {
    fn openblas_set_num_threads(n: i32);
}

/// Restricts the BLAS backend to `n` threads. Results are then independent of
/// the machine's core count.
pub fn set_blas_threads(n: usize) {
    unsafe { openblas_set_num_threads(n.max(1) as i32) }
}

/// Eigen-decomposition of a real symmetric matrix.
///
/// Returns ascending eigenvalues and a matrix whose columns are the
/// eigenvectors. Each eigenvector is signed so that its largest-magnitude
/// component (lowest index on ties) is positive.
pub fn symmetric_eigen(a: Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Usage(format!("matrix is {}x{}, expected square", n, a.ncols())));
    }
    if n == 0 {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    let mut a = a.as_standard_layout().into_owned();
    let nn = n as i32;
    let mut w = vec![0.0f64; n];
    let jobz = b'V' as std::ffi::c_char;
    let uplo = b'L' as std::ffi::c_char;
    let mut info = 0;
    let mut work_query = [0.0f64];
    let mut iwork_query = [0i32];
    let lwork = -1;
    let liwork = -1;
    // The matrix is symmetric, so row-major storage is a valid column-major input.
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &nn,
            a.as_mut_ptr(),
            &nn,
            w.as_mut_ptr(),
            work_query.as_mut_ptr(),
            &lwork,
            iwork_query.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!("dsyevd workspace query failed (info = {info})")));
    }
    let lwork = work_query[0] as i32;
    let liwork = iwork_query[0];
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &nn,
            a.as_mut_ptr(),
            &nn,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!("dsyevd failed to converge (info = {info})")));
    }
    // Column-major eigenvectors read back through a row-major array are the
    // rows; reversing the axes restores them as columns.
    let mut vectors = a.reversed_axes();
    fix_signs(&mut vectors);
    Ok((Array1::from(w), vectors))
}

fn fix_signs(vectors: &mut Array2<f64>) {
    for mut col in vectors.axis_iter_mut(Axis(1)) {
        let max = col.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if max == 0.0 {
            continue;
        }
        let lead = col
            .iter()
            .position(|v| v.abs() >= max * (1.0 - 1e-10))
            .unwrap_or(0);
        if col[lead] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

/// Eigenvalues (ascending) of a complex Hermitian matrix.
pub fn hermitian_eigvals(a: &ArrayView2<C64>) -> Result<Array1<f64>> {
    a.to_owned()
        .eigvalsh(UPLO::Lower)
        .map_err(|e| Error::Numerical(format!("Hermitian eigenvalue solve failed: {e}")))
}

/// Eigen-decomposition of a complex Hermitian matrix; columns are eigenvectors.
pub fn hermitian_eigen(a: &ArrayView2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    // Row-major input reaches LAPACK as the transpose, i.e. the conjugate.
    let mut m = Array2::<C64>::zeros(a.raw_dim().f());
    m.assign(a);
    m.eigh(UPLO::Lower)
        .map_err(|e| Error::Numerical(format!("Hermitian eigen-decomposition failed: {e}")))
}

/// Largest absolute deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &ArrayView2<C64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            worst = worst.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    worst
}

/// `Vᵀ A V` for real `V` and complex `A`.
pub fn congruence(v: &ArrayView2<f64>, a: &ArrayView2<C64>) -> Array2<C64> {
    let vc = v.mapv(|x| C64::new(x, 0.0));
    vc.t().dot(a).dot(&vc)
}

/// `V A Vᵀ` for real `V` and complex `A`.
pub fn congruence_transpose(v: &ArrayView2<f64>, a: &ArrayView2<C64>) -> Array2<C64> {
    let vc = v.mapv(|x| C64::new(x, 0.0));
    vc.dot(a).dot(&vc.t())
}

/// Trace norm distance `½ tr|A − B|` between Hermitian matrices.
pub fn trace_distance(a: &ArrayView2<C64>, b: &ArrayView2<C64>) -> Result<f64> {
    let diff = a.to_owned() - b;
    let eig = hermitian_eigvals(&diff.view())?;
    Ok(0.5 * eig.iter().map(|x| x.abs()).sum::<f64>())
}

/// In-place `LDLᵀ` factorization of a complex symmetric matrix with positive
/// definite real part, stored as the lower triangle of a row-major `d × d`
/// buffer. Returns `(½ bᵀK⁻¹b, ½ log det K)` with the branch of `log det`
/// given by the sum of principal logarithms of the pivots.
///
/// Every pivot of such a matrix has positive real part, so no pivoting is
/// needed and the principal square roots of the pivots multiply to the square
/// root of the determinant that is continuous on the whole accretive cone.
pub(crate) fn accretive_ldl_quadratic(k: &mut [C64], b: &mut [C64], pivots: &mut [C64], d: usize) -> Result<(C64, C64)> {
    for j in 0..d {
        let row_j = j * d;
        let mut djj = k[row_j + j];
        for p in 0..j {
            let l = k[row_j + p];
            djj -= l * l * pivots[p];
        }
        if !(djj.re > 0.0) {
            return Err(Error::Numerical(format!(
                "overlap matrix pivot {j} has non-positive real part {djj}"
            )));
        }
        pivots[j] = djj;
        let inv = djj.inv();
        for i in (j + 1)..d {
            let row_i = i * d;
            let mut s = k[row_i + j];
            for p in 0..j {
                s -= k[row_i + p] * k[row_j + p] * pivots[p];
            }
            k[row_i + j] = s * inv;
        }
    }
    let mut quad = C64::new(0.0, 0.0);
    let mut log_det = C64::new(0.0, 0.0);
    for i in 0..d {
        let row_i = i * d;
        let mut y = b[i];
        for p in 0..i {
            y -= k[row_i + p] * b[p];
        }
        b[i] = y;
        quad += y * y / pivots[i];
        log_det += pivots[i].ln();
    }
    Ok((0.5 * quad, 0.5 * log_det))
}
