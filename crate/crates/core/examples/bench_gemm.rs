use ndarray::Array2;
use std::time::Instant;

fn bench(m: usize, k: usize, n: usize, reps: usize) {
    let a = Array2::<f32>::from_elem((m, k), 1.001);
    let b = Array2::<f32>::from_elem((k, n), 0.999);
    let t0 = Instant::now();
    let mut acc = 0.0f32;
    for _ in 0..reps {
        let c = a.dot(&b);
        acc += c[[0, 0]];
    }
    let dt = t0.elapsed().as_secs_f64();
    let flops = 2.0 * (m * k * n * reps) as f64;
    println!(
        "{m}x{k}x{n}: {:.2} GFLOP/s  ({:.3} ms/op, acc={acc:.1})",
        flops / dt / 1e9,
        dt * 1000.0 / reps as f64
    );
}

fn main() {
    bench(526, 64, 64, 200);
    bench(526, 16, 526, 100);
    bench(526, 64, 256, 100);
    bench(526, 256, 64, 100);
    bench(8416, 64, 64, 20); // B=16 flattened projection
    bench(106, 32, 128, 500); // overfit-scale
}
