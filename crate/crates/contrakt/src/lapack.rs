//! Thin safe wrappers over the LAPACK routines this crate uses.
//!
//! Buffers cross this boundary in column-major order (Fortran convention);
//! everything above works row-major. `num_complex::Complex64` and LAPACK's
//! `__BindgenComplex<f64>` are both `#[repr(C)] { re: f64, im: f64 }`, so
//! pointer casts between them are sound.

use num_complex::Complex64;

/// Error raised by a LAPACK routine: `info > 0` means the iteration did not
/// converge, `info < 0` means argument `-info` was invalid (a bug upstream).
#[derive(Debug, Clone, Copy)]
pub(crate) struct RoutineError {
    pub routine: &'static str,
    pub info: i32,
}

type Result<T> = std::result::Result<T, RoutineError>;

fn check(routine: &'static str, info: i32) -> Result<()> {
    if info == 0 {
        Ok(())
    } else {
        Err(RoutineError { routine, info })
    }
}

fn cptr(s: &mut [Complex64]) -> *mut lapack_sys::c_double_complex {
    s.as_mut_ptr() as *mut lapack_sys::c_double_complex
}

/// Eigenvalues and (optionally) unit-norm right eigenvectors of a general
/// complex matrix. `a` is an n×n column-major buffer, destroyed in place.
/// The returned eigenvector matrix is column-major, one column per
/// eigenvalue, in LAPACK's own order.
pub(crate) fn zgeev(
    n: usize,
    a: &mut [Complex64],
    want_vectors: bool,
) -> Result<(Vec<Complex64>, Option<Vec<Complex64>>)> {
    debug_assert_eq!(a.len(), n * n);
    let ni = n as i32;
    let jobvr: &[u8] = if want_vectors { b"V" } else { b"N" };
    let mut w = vec![Complex64::ZERO; n];
    let mut vr = vec![Complex64::ZERO; if want_vectors { n * n } else { 1 }];
    let mut rwork = vec![0.0_f64; 2 * n.max(1)];
    let mut info = 0_i32;

    // Workspace query, then the real call.
    let mut work_query = [Complex64::ZERO];
    let query = -1_i32;
    unsafe {
        lapack_sys::zgeev_(
            b"N".as_ptr() as *const _,
            jobvr.as_ptr() as *const _,
            &ni,
            cptr(a),
            &ni,
            cptr(&mut w),
            std::ptr::null_mut(),
            &ni,
            cptr(&mut vr),
            &ni,
            cptr(&mut work_query),
            &query,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    check("zgeev", info)?;
    let lwork = work_query[0].re as i32;
    let mut work = vec![Complex64::ZERO; lwork.max(1) as usize];
    unsafe {
        lapack_sys::zgeev_(
            b"N".as_ptr() as *const _,
            jobvr.as_ptr() as *const _,
            &ni,
            cptr(a),
            &ni,
            cptr(&mut w),
            std::ptr::null_mut(),
            &ni,
            cptr(&mut vr),
            &ni,
            cptr(&mut work),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    check("zgeev", info)?;
    Ok((w, want_vectors.then_some(vr)))
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian
/// matrix. `a` is n×n column-major; on return its columns are the
/// eigenvectors.
pub(crate) fn zheev(n: usize, a: &mut [Complex64]) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let ni = n as i32;
    let mut w = vec![0.0_f64; n];
    let mut rwork = vec![0.0_f64; (3 * n).max(1)];
    let mut info = 0_i32;

    let mut work_query = [Complex64::ZERO];
    let query = -1_i32;
    unsafe {
        lapack_sys::zheev_(
            b"V".as_ptr() as *const _,
            b"L".as_ptr() as *const _,
            &ni,
            cptr(a),
            &ni,
            w.as_mut_ptr(),
            cptr(&mut work_query),
            &query,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    check("zheev", info)?;
    let lwork = work_query[0].re as i32;
    let mut work = vec![Complex64::ZERO; lwork.max(1) as usize];
    unsafe {
        lapack_sys::zheev_(
            b"V".as_ptr() as *const _,
            b"L".as_ptr() as *const _,
            &ni,
            cptr(a),
            &ni,
            w.as_mut_ptr(),
            cptr(&mut work),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    check("zheev", info)?;
    Ok(w)
}

/// Full singular value decomposition `A = U Σ V^H` of an m×n complex matrix.
/// `a` is column-major and destroyed. Returns `(u, s, vh)` with `u` m×m and
/// `vh` n×n, both column-major; `s` has `min(m, n)` nonincreasing entries.
pub(crate) fn zgesvd(
    m: usize,
    n: usize,
    a: &mut [Complex64],
) -> Result<(Vec<Complex64>, Vec<f64>, Vec<Complex64>)> {
    debug_assert_eq!(a.len(), m * n);
    let (mi, ni) = (m as i32, n as i32);
    let k = m.min(n);
    let mut s = vec![0.0_f64; k];
    let mut u = vec![Complex64::ZERO; m * m];
    let mut vh = vec![Complex64::ZERO; n * n];
    let mut rwork = vec![0.0_f64; (5 * k).max(1)];
    let mut info = 0_i32;

    let mut work_query = [Complex64::ZERO];
    let query = -1_i32;
    unsafe {
        lapack_sys::zgesvd_(
            b"A".as_ptr() as *const _,
            b"A".as_ptr() as *const _,
            &mi,
            &ni,
            cptr(a),
            &mi,
            s.as_mut_ptr(),
            cptr(&mut u),
            &mi,
            cptr(&mut vh),
            &ni,
            cptr(&mut work_query),
            &query,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    check("zgesvd", info)?;
    let lwork = work_query[0].re as i32;
    let mut work = vec![Complex64::ZERO; lwork.max(1) as usize];
    unsafe {
        lapack_sys::zgesvd_(
            b"A".as_ptr() as *const _,
            b"A".as_ptr() as *const _,
            &mi,
            &ni,
            cptr(a),
            &mi,
            s.as_mut_ptr(),
            cptr(&mut u),
            &mi,
            cptr(&mut vh),
            &ni,
            cptr(&mut work),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    check("zgesvd", info)?;
    Ok((u, s, vh))
}
