//! Shared helpers for integration tests: a tiny deterministic RNG and a
//! central-difference gradient checker.

use pansr::tensor::tape::{backward, GradTape};
use pansr::Tensor;

/// Small xorshift generator so tests do not depend on crate-internal RNG
/// plumbing. Deterministic across platforms.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in [lo, hi] inclusive.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn pick<T: Copy>(&mut self, xs: &[T]) -> T {
        xs[self.int(0, xs.len() - 1)]
    }

    pub fn tensor(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| self.range(lo, hi)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    /// Values with magnitude in [0.3, 1.5] and random sign — safe for
    /// division, and away from the kinks of abs / leaky_relu.
    pub fn tensor_away_from_zero(&mut self, shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n)
            .map(|_| {
                let m = self.range(0.3, 1.5);
                if self.unit() < 0.5 { -m } else { m }
            })
            .collect();
        Tensor::from_vec(shape, data).unwrap()
    }
}

/// Fixed "probe" weights so the checked scalar is a non-trivial linear
/// functional of the op output.
pub fn probe_weights(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = Lcg::new(seed ^ 0xabcd_ef01);
    rng.tensor(shape, -1.0, 1.0)
}

fn eval<F>(build: &F, inputs: &[Tensor<f64>]) -> f64
where
    F: Fn(&[Tensor<f64>]) -> pansr::Result<Tensor<f64>>,
{
    // Every evaluation runs under a fresh tape with gradient-tracking inputs
    // so that closures containing an inner `backward` (second-order checks)
    // work during finite-difference probing too.
    let _tape = GradTape::<f64>::new();
    let fresh: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|t| {
            let t = Tensor::from_vec(t.shape(), t.data().to_vec()).unwrap();
            t.set_requires_grad(true);
            t
        })
        .collect();
    let y = build(&fresh).expect("forward evaluation failed");
    y.item().expect("checked function must return a scalar")
}

/// Central-difference gradient check of `build` at `inputs`, comparing the
/// analytic gradient of the scalar output with a numeric estimate for every
/// element of every input. Panics with context on failure; returns the worst
/// relative error observed.
pub fn gradcheck<F>(name: &str, inputs: &[Tensor<f64>], build: F, tol: f64) -> f64
where
    F: Fn(&[Tensor<f64>]) -> pansr::Result<Tensor<f64>>,
{
    // Analytic pass.
    let analytic: Vec<Tensor<f64>> = {
        let _tape = GradTape::<f64>::new();
        let fresh: Vec<Tensor<f64>> = inputs
            .iter()
            .map(|t| {
                let t = Tensor::from_vec(t.shape(), t.data().to_vec()).unwrap();
                t.set_requires_grad(true);
                t
            })
            .collect();
        let y = build(&fresh).expect("forward evaluation failed");
        let refs: Vec<&Tensor<f64>> = fresh.iter().collect();
        backward(&y, &refs, false).expect("backward failed")
    };

    let h = 1e-5;
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            let mut dp = input.data().to_vec();
            let mut dm = input.data().to_vec();
            dp[j] += h;
            dm[j] -= h;
            plus[i] = Tensor::from_vec(input.shape(), dp).unwrap();
            minus[i] = Tensor::from_vec(input.shape(), dm).unwrap();
            let numeric = (eval(&build, &plus) - eval(&build, &minus)) / (2.0 * h);
            let a = analytic[i].data()[j];
            // Relative error with an absolute floor: central differences have
            // a cancellation noise floor around 1e-11 regardless of how small
            // the true gradient is, so tiny gradients are judged absolutely.
            let denom = a.abs().max(numeric.abs()).max(1e-3);
            let rel = (a - numeric).abs() / denom;
            worst = worst.max(rel);
            assert!(
                rel <= tol,
                "{name}: gradient mismatch at input {i} elem {j}: analytic {a}, numeric {numeric}, rel {rel:.3e} (tol {tol:.1e}, shape {:?})",
                input.shape()
            );
        }
    }
    worst
}

/// f32 gradients checked against the f64 analytic gradient on the same
/// values (f32 finite differences are too noisy for a direct probe).
pub fn grads_both_precisions<F32F, F64F>(
    inputs: &[Tensor<f64>],
    build32: F32F,
    build64: F64F,
) -> (Vec<Tensor<f32>>, Vec<Tensor<f64>>)
where
    F32F: Fn(&[Tensor<f32>]) -> pansr::Result<Tensor<f32>>,
    F64F: Fn(&[Tensor<f64>]) -> pansr::Result<Tensor<f64>>,
{
    let g32 = {
        let _tape = GradTape::<f32>::new();
        let fresh: Vec<Tensor<f32>> = inputs
            .iter()
            .map(|t| {
                let t: Tensor<f32> = t.cast();
                t.set_requires_grad(true);
                t
            })
            .collect();
        let y = build32(&fresh).expect("f32 forward failed");
        let refs: Vec<&Tensor<f32>> = fresh.iter().collect();
        backward(&y, &refs, false).expect("f32 backward failed")
    };
    let g64 = {
        let _tape = GradTape::<f64>::new();
        let fresh: Vec<Tensor<f64>> = inputs
            .iter()
            .map(|t| {
                let t = Tensor::from_vec(t.shape(), t.data().to_vec()).unwrap();
                t.set_requires_grad(true);
                t
            })
            .collect();
        let y = build64(&fresh).expect("f64 forward failed");
        let refs: Vec<&Tensor<f64>> = fresh.iter().collect();
        backward(&y, &refs, false).expect("f64 backward failed")
    };
    (g32, g64)
}

/// Max relative deviation between an f32 gradient set and its f64 reference.
pub fn max_rel_vs_reference(g32: &[Tensor<f32>], g64: &[Tensor<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (a, b) in g32.iter().zip(g64) {
        for (&x, &y) in a.data().iter().zip(b.data()) {
            let x = x as f64;
            let denom = x.abs().max(y.abs());
            let rel = if denom < 1e-6 { (x - y).abs() } else { (x - y).abs() / denom };
            worst = worst.max(rel);
        }
    }
    worst
}

#[allow(dead_code)]
pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}
