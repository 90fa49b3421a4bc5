// quick throughput probe: conv forward+backward at training-like sizes
use pansr::tensor::{ops, randn, tape::{backward, GradTape}};
use std::time::Instant;

fn main() {
    // typical desk-phase geometry: batch 16, 32ch, 32x32 with 3x3 kernels
    for (n, c, h, co) in [(16usize, 32usize, 32usize, 32usize), (16, 16, 32, 16), (16, 64, 16, 64), (4, 8, 64, 8)] {
        let x = randn::<f32>(&[n, c, h, h], 1);
        let w = randn::<f32>(&[co, c, 3, 3], 2);
        let b = randn::<f32>(&[co], 3);
        // forward+backward flops ~ 3 * 2*N*Co*Ci*k^2*H^2
        let flops = 3.0 * 2.0 * (n * co * c * 9 * h * h) as f64;
        let reps = 20;
        let t0 = Instant::now();
        for _ in 0..reps {
            let _tape = GradTape::<f32>::new();
            x.set_requires_grad(true);
            w.set_requires_grad(true);
            let y = ops::conv2d(&x, &w, &b).unwrap();
            let l = ops::mean_all(&ops::mul(&y, &y).unwrap()).unwrap();
            let _ = backward(&l, &[&x, &w], false).unwrap();
        }
        let dt = t0.elapsed().as_secs_f64() / reps as f64;
        println!("n={n} c={c} h={h} co={co}: {:.1} ms/iter, {:.2} GFLOP/s", dt * 1e3, flops / dt / 1e9);
    }
}
