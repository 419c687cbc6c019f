/// Link the system OpenBLAS (which bundles LAPACK) for `ndarray-linalg`.
///
/// We deliberately avoid the `openblas-src` provider crates: this library only
/// needs the link directive, and the provider's build script drags in network
/// tooling that is unnecessary for a system-managed BLAS.
fn main() {
    println!("cargo:rustc-link-lib=dylib=openblas");
}
