use num_complex::Complex64;
use rustfft::FftPlanner;

/// Full linear convolution via FFT, accumulated in double precision.
pub fn fft_convolve(signal: &[f32], kernel: &[f32]) -> Vec<f32> {
    if signal.is_empty() || kernel.is_empty() {
        return Vec::new();
    }
    let out_len = signal.len() + kernel.len() - 1;
    if signal.len().min(kernel.len()) <= 32 {
        return direct_convolve(signal, kernel);
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x as f64, 0.0)).collect();
    a.resize(n, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = kernel.iter().map(|&x| Complex64::new(x as f64, 0.0)).collect();
    b.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    a[..out_len].iter().map(|c| (c.re * scale) as f32).collect()
}

pub fn direct_convolve(signal: &[f32], kernel: &[f32]) -> Vec<f32> {
    if signal.is_empty() || kernel.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0f64; signal.len() + kernel.len() - 1];
    for (i, &s) in signal.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        for (j, &k) in kernel.iter().enumerate() {
            out[i + j] += s as f64 * k as f64;
        }
    }
    out.into_iter().map(|v| v as f32).collect()
}
