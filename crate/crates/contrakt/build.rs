//! Links the system reference LAPACK/BLAS.
//!
//! `lapack-sys` only declares the FFI symbols; the link directives live here.
//! The reference (netlib) libraries are single-threaded, which keeps every
//! computation deterministic for a given input — a property the CLI's
//! reproducibility contract relies on.

fn main() {
    println!("cargo:rustc-link-lib=dylib=lapack");
    println!("cargo:rustc-link-lib=dylib=blas");
}
