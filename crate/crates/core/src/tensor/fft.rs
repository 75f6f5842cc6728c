//! Complex FFT for arbitrary lengths (iterative radix-2, Bluestein for the
//! rest) and the circular correlation / convolution built on it.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use num_complex::Complex64;

use crate::error::{check_dim, Error, Result};
use crate::tensor::vector::{norm, DenseVector};

/// Largest imaginary residue tolerated after an inverse transform, relative
/// to `1 + |a| |b|`.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-9;

#[derive(Debug)]
struct Radix2 {
    len: usize,
    /// `exp(-2 pi i k / len)` for `k < len / 2`.
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl Radix2 {
    fn new(len: usize) -> Self {
        debug_assert!(len.is_power_of_two());
        let bits = len.trailing_zeros();
        let bitrev = (0..len)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        let twiddles = (0..len / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / len as f64))
            .collect();
        Radix2 {
            len,
            twiddles,
            bitrev,
        }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        let n = self.len;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let u = buf[start + k];
                    let t = w * buf[start + k + half];
                    buf[start + k] = u + t;
                    buf[start + k + half] = u - t;
                }
            }
            size *= 2;
        }
    }
}

#[derive(Debug)]
struct Bluestein {
    len: usize,
    /// `exp(-pi i k^2 / len)`.
    chirp: Vec<Complex64>,
    /// Forward transform of the zero-padded conjugate chirp filter.
    filter_spectrum: Vec<Complex64>,
    inner: Radix2,
}

impl Bluestein {
    fn new(len: usize) -> Self {
        let m = (2 * len - 1).next_power_of_two();
        let inner = Radix2::new(m);
        let two_n = 2 * len as u128;
        let chirp: Vec<Complex64> = (0..len)
            .map(|k| {
                // k^2 mod 2n keeps the angle small for large k
                let kk = ((k as u128 * k as u128) % two_n) as f64;
                Complex64::from_polar(1.0, -PI * kk / len as f64)
            })
            .collect();
        let mut filter = vec![Complex64::new(0.0, 0.0); m];
        filter[0] = chirp[0].conj();
        for k in 1..len {
            filter[k] = chirp[k].conj();
            filter[m - k] = chirp[k].conj();
        }
        inner.forward(&mut filter);
        Bluestein {
            len,
            chirp,
            filter_spectrum: filter,
            inner,
        }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        let m = self.inner.len;
        let mut work = vec![Complex64::new(0.0, 0.0); m];
        for k in 0..self.len {
            work[k] = buf[k] * self.chirp[k];
        }
        self.inner.forward(&mut work);
        for (w, f) in work.iter_mut().zip(&self.filter_spectrum) {
            *w = (*w * f).conj();
        }
        // inverse via conjugation: ifft(z) = conj(fft(conj(z))) / m
        self.inner.forward(&mut work);
        let scale = 1.0 / m as f64;
        for k in 0..self.len {
            buf[k] = work[k].conj() * scale * self.chirp[k];
        }
    }
}

#[derive(Debug)]
enum Algorithm {
    Trivial,
    Radix2(Radix2),
    Bluestein(Bluestein),
}

/// A reusable transform of fixed length.
#[derive(Debug)]
pub struct FftPlan {
    len: usize,
    algorithm: Algorithm,
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        assert!(len >= 1, "FFT length must be >= 1");
        let algorithm = if len == 1 {
            Algorithm::Trivial
        } else if len.is_power_of_two() {
            Algorithm::Radix2(Radix2::new(len))
        } else {
            Algorithm::Bluestein(Bluestein::new(len))
        };
        FftPlan { len, algorithm }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unnormalized forward DFT, `X_k = sum_n x_n exp(-2 pi i n k / N)`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len);
        match &self.algorithm {
            Algorithm::Trivial => {}
            Algorithm::Radix2(p) => p.forward(buf),
            Algorithm::Bluestein(p) => p.forward(buf),
        }
    }

    /// Normalized inverse DFT.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        for z in buf.iter_mut() {
            *z = z.conj();
        }
        self.forward(buf);
        let scale = 1.0 / self.len as f64;
        for z in buf.iter_mut() {
            *z = z.conj() * scale;
        }
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<FftPlan>>> = RefCell::new(HashMap::new());
}

fn plan_for(len: usize) -> Rc<FftPlan> {
    PLANS.with(|plans| {
        plans
            .borrow_mut()
            .entry(len)
            .or_insert_with(|| Rc::new(FftPlan::new(len)))
            .clone()
    })
}

/// Transforms two real signals with one complex FFT.
fn spectra_of_pair(plan: &FftPlan, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = a.len();
    let mut z: Vec<Complex64> = a
        .iter()
        .zip(b)
        .map(|(&re, &im)| Complex64::new(re, im))
        .collect();
    plan.forward(&mut z);
    let mut fa = Vec::with_capacity(n);
    let mut fb = Vec::with_capacity(n);
    for k in 0..n {
        let zk = z[k];
        let zc = z[(n - k) % n].conj();
        fa.push((zk + zc) * 0.5);
        // (zk - zc) / (2i)
        let d = (zk - zc) * 0.5;
        fb.push(Complex64::new(d.im, -d.re));
    }
    (fa, fb)
}

fn validate_pair(context: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    check_dim(context, a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::Invalid(format!("{context}: empty input")));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(context.into()));
    }
    Ok(())
}

fn real_part_checked(buf: Vec<Complex64>, scale: f64) -> Result<Vec<f64>> {
    let bound = IMAGINARY_RESIDUE_TOL * (1.0 + scale);
    let residue = buf.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    if residue > bound {
        return Err(Error::ImaginaryResidue(residue));
    }
    Ok(buf.into_iter().map(|z| z.re).collect())
}

fn spectral_product(
    a: &[f64],
    b: &[f64],
    combine: impl Fn(Complex64, Complex64) -> Complex64,
) -> Result<Vec<f64>> {
    let n = a.len();
    if n == 1 {
        return Ok(vec![a[0] * b[0]]);
    }
    let plan = plan_for(n);
    let (fa, fb) = spectra_of_pair(&plan, a, b);
    let mut prod: Vec<Complex64> = fa.into_iter().zip(fb).map(|(x, y)| combine(x, y)).collect();
    plan.inverse(&mut prod);
    real_part_checked(prod, norm(a) * norm(b))
}

/// Slice form of [`circ_correlate`]: `(a * b)_k = sum_i a_i b_{(i+k) mod d}`.
pub fn correlate(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    validate_pair("circular correlation", a, b)?;
    spectral_product(a, b, |x, y| x.conj() * y)
}

/// Slice form of [`circ_convolve`]: `(a conv b)_k = sum_i a_i b_{(k-i) mod d}`.
pub fn convolve(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    validate_pair("circular convolution", a, b)?;
    spectral_product(a, b, |x, y| x * y)
}

/// Circular correlation `F^-1(conj(F(a)) . F(b))`.
pub fn circ_correlate(a: &DenseVector, b: &DenseVector) -> Result<DenseVector> {
    correlate(a, b).map(DenseVector::from_vec_unchecked)
}

/// Circular convolution `F^-1(F(a) . F(b))`; the adjoint of correlation.
pub fn circ_convolve(a: &DenseVector, b: &DenseVector) -> Result<DenseVector> {
    convolve(a, b).map(DenseVector::from_vec_unchecked)
}

/// Direct `O(d^2)` circular correlation.
pub fn circ_correlate_naive(a: &DenseVector, b: &DenseVector) -> Result<DenseVector> {
    check_dim("naive circular correlation", a.dim(), b.dim())?;
    let d = a.dim();
    let out = (0..d)
        .map(|k| (0..d).map(|i| a[i] * b[(i + k) % d]).sum())
        .collect();
    Ok(DenseVector::from_vec_unchecked(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &xj)| {
                        xj * Complex64::from_polar(1.0, -2.0 * PI * (j * k) as f64 / n as f64)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn fft_matches_naive_dft_for_many_lengths() {
        for n in [1usize, 2, 3, 4, 5, 6, 7, 8, 12, 15, 16, 17, 31, 64, 100] {
            let x: Vec<Complex64> = (0..n)
                .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
                .collect();
            let mut y = x.clone();
            let plan = FftPlan::new(n);
            plan.forward(&mut y);
            let expect = naive_dft(&x);
            for (a, b) in y.iter().zip(&expect) {
                assert!((a - b).norm() < 1e-9, "n={n}");
            }
            plan.inverse(&mut y);
            for (a, b) in y.iter().zip(&x) {
                assert!((a - b).norm() < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn correlation_examples() {
        let impulse = v(&[1.0, 0.0, 0.0, 0.0]);
        let b = v(&[5.0, 6.0, 7.0, 8.0]);
        for out in [
            circ_correlate(&impulse, &b).unwrap(),
            circ_correlate_naive(&impulse, &b).unwrap(),
        ] {
            for (x, y) in out.iter().zip([5.0, 6.0, 7.0, 8.0]) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert_eq!(circ_correlate(&v(&[2.0]), &v(&[3.0])).unwrap().as_slice(), &[6.0]);
        assert_eq!(
            circ_correlate_naive(&v(&[0.0, 0.0]), &v(&[9.0, 4.0])).unwrap().as_slice(),
            &[0.0, 0.0]
        );
        // hand-evaluated: (a*b)_k = sum_i a_i b_{i+k}
        let a = v(&[1.0, 2.0, 0.0, 0.0]);
        let b = v(&[0.0, 1.0, 0.0, 3.0]);
        let expected = [2.0, 1.0, 6.0, 3.0];
        assert_eq!(circ_correlate_naive(&a, &b).unwrap().as_slice(), &expected);
        let fast = circ_correlate(&a, &b).unwrap();
        for (x, y) in fast.iter().zip(expected) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_is_asymmetric() {
        let a = v(&[1.0, 2.0, 0.0, 0.0]);
        let b = v(&[0.0, 1.0, 0.0, 3.0]);
        let ab = circ_correlate(&a, &b).unwrap();
        let ba = circ_correlate(&b, &a).unwrap();
        assert!(ab.iter().zip(ba.iter()).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let a = [1.0, -2.0, 0.5, 3.0, 0.25];
        let b = [0.0, 1.0, 4.0, -1.0, 2.0];
        let d = a.len();
        let out = convolve(&a, &b).unwrap();
        for k in 0..d {
            let direct: f64 = (0..d).map(|i| a[i] * b[(k + d - i) % d]).sum();
            assert!((out[k] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            correlate(&[1.0, 2.0], &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            correlate(&[1.0, f64::NAN], &[1.0, 2.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(circ_correlate_naive(&v(&[1.0, 2.0]), &v(&[1.0])).is_err());
    }
}
