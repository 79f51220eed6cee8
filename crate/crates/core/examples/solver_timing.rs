//! Times the three readout solvers on a random ReLU-like hidden matrix.
//!
//!     cargo run --release --example solver_timing -- <rows> <cols>

use std::time::Instant;

use voodoo_core::linalg::{matmul_tn, solve_readout_owned, HouseholderQr, Matrix, SolverKind};
use voodoo_core::rng::GaussianRng;

fn main() {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("sizes must be integers"))
        .collect();
    let (m, n) = match args[..] {
        [m, n] => (m, n),
        _ => (20_000, 1_000),
    };
    let mut rng = GaussianRng::new(1);
    let h = Matrix::from_fn(m, n, |_, _| rng.next_gaussian().max(0.0));
    let y = Matrix::from_fn(m, 10, |_, _| rng.next_uniform());

    let t = Instant::now();
    drop(HouseholderQr::factor(h.clone()).unwrap());
    println!("qr:       {:.2}s", t.elapsed().as_secs_f64());
    let t = Instant::now();
    drop(matmul_tn(&h, &h).unwrap());
    println!("gram:     {:.2}s", t.elapsed().as_secs_f64());

    for kind in [SolverKind::lu(), SolverKind::cholesky(), SolverKind::svd()] {
        let t = Instant::now();
        let sol = solve_readout_owned(h.clone(), &y, kind).unwrap();
        println!(
            "{:<9} {:.2}s  (w2[0,0] = {:.6e})",
            format!("{kind}:"),
            t.elapsed().as_secs_f64(),
            sol.w2.get(0, 0)
        );
    }
}
