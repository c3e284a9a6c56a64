//! Symmetric uniform fake quantization.
//!
//! Codes live in `±(2^(bits−1) − 1)`; the most negative two's-complement code
//! is never used, which keeps the grid symmetric around zero. Rounding is
//! round-half-to-even.

use alloc::vec::Vec;

use crate::numerics::Matrix;
use crate::{Error, Result};

/// Which entries share a scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    /// One scale for the whole tensor.
    PerTensor,
    /// One scale per column (token). Activations only.
    PerToken,
    /// One scale per row (feature channel).
    PerChannel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Weight,
    Activation,
}

/// Bit width, granularity and target of a quantizer. Always valid once built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantSpec {
    bits: u32,
    granularity: Granularity,
    target: Target,
}

impl QuantSpec {
    pub fn new(bits: u32, granularity: Granularity, target: Target) -> Result<Self> {
        if !(2..=16).contains(&bits) {
            return Err(Error::InvalidBits(bits));
        }
        if granularity == Granularity::PerToken && target == Target::Weight {
            return Err(Error::GranularityMismatch(
                "per-token granularity applies to activations only",
            ));
        }
        Ok(QuantSpec {
            bits,
            granularity,
            target,
        })
    }

    /// Per-channel weight quantizer.
    pub fn weight(bits: u32) -> Result<Self> {
        QuantSpec::new(bits, Granularity::PerChannel, Target::Weight)
    }

    pub fn activation(bits: u32, granularity: Granularity) -> Result<Self> {
        QuantSpec::new(bits, granularity, Target::Activation)
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    #[inline]
    pub fn target(&self) -> Target {
        self.target
    }

    /// Largest representable code magnitude, `2^(bits−1) − 1`.
    #[inline]
    pub fn max_code(&self) -> i32 {
        (1i32 << (self.bits - 1)) - 1
    }

    fn group_count(&self, rows: usize, cols: usize) -> usize {
        match self.granularity {
            Granularity::PerTensor => 1,
            Granularity::PerChannel => rows,
            Granularity::PerToken => cols,
        }
    }

    #[inline]
    fn group_of(&self, row: usize, col: usize) -> usize {
        match self.granularity {
            Granularity::PerTensor => 0,
            Granularity::PerChannel => row,
            Granularity::PerToken => col,
        }
    }
}

/// Integer codes plus one scale per quantization group.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    rows: usize,
    cols: usize,
    codes: Vec<i32>,
    scales: Vec<f64>,
    spec: QuantSpec,
}

impl QuantizedTensor {
    /// Assembles a tensor from raw parts, checking the code range, scale
    /// positivity and group count.
    pub fn from_parts(rows: usize, cols: usize, codes: Vec<i32>, scales: Vec<f64>, spec: QuantSpec) -> Result<Self> {
        if codes.len() != rows * cols {
            return Err(Error::BadShape {
                rows,
                cols,
                len: codes.len(),
            });
        }
        let groups = spec.group_count(rows, cols);
        if scales.len() != groups {
            return Err(Error::LengthMismatch {
                left: scales.len(),
                right: groups,
            });
        }
        if scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidConfig("quantization scales must be positive and finite"));
        }
        let max = spec.max_code();
        if codes.iter().any(|c| c.abs() > max) {
            return Err(Error::InvalidConfig("quantization code outside the symmetric range"));
        }
        Ok(QuantizedTensor {
            rows,
            cols,
            codes,
            scales,
            spec,
        })
    }

    #[inline]
    pub fn codes(&self) -> &[i32] {
        &self.codes
    }

    #[inline]
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    #[inline]
    pub fn spec(&self) -> QuantSpec {
        self.spec
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Scale of the group containing entry `(row, col)`.
    #[inline]
    pub fn scale_at(&self, row: usize, col: usize) -> f64 {
        self.scales[self.spec.group_of(row, col)]
    }

    /// `code × scale` for every entry.
    pub fn dequantize(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.codes.len());
        for r in 0..self.rows {
            for c in 0..self.cols {
                data.push(self.codes[r * self.cols + c] as f64 * self.scale_at(r, c));
            }
        }
        Matrix::from_raw(self.rows, self.cols, data)
    }
}

/// Scale for a group whose largest magnitude is `max_abs`.
///
/// Nominally `max_abs / max_code`. The value is nudged to a fixed point of
/// `s ↦ (max_code·s)/max_code` so that re-quantizing a dequantized tensor
/// recovers the same scale bit-for-bit.
fn group_scale(max_abs: f64, max_code: i32) -> f64 {
    if max_abs == 0.0 {
        return 1.0;
    }
    let q = max_code as f64;
    let mut s = max_abs / q;
    for _ in 0..8 {
        let next = (q * s) / q;
        if next == s {
            break;
        }
        s = next;
    }
    s
}

/// Quantizes `x` with symmetric per-group scales.
pub fn quantize(x: &Matrix, spec: QuantSpec) -> Result<QuantizedTensor> {
    let (rows, cols) = x.shape();
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut group_max = alloc::vec![0.0f64; spec.group_count(rows, cols)];
    for r in 0..rows {
        for c in 0..cols {
            let g = spec.group_of(r, c);
            group_max[g] = group_max[g].max(x.get(r, c).abs());
        }
    }
    let max_code = spec.max_code();
    let scales: Vec<f64> = group_max.iter().map(|&m| group_scale(m, max_code)).collect();

    let lim = max_code as f64;
    let mut codes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let s = scales[spec.group_of(r, c)];
            let q = libm::rint(x.get(r, c) / s).clamp(-lim, lim);
            codes.push(q as i32);
        }
    }
    Ok(QuantizedTensor {
        rows,
        cols,
        codes,
        scales,
        spec,
    })
}

/// `dequantize(quantize(x))`: the value `x` takes on the quantization grid.
pub fn fake_quant(x: &Matrix, spec: QuantSpec) -> Result<Matrix> {
    Ok(quantize(x, spec)?.dequantize())
}

/// Error of [`fake_quant`] relative to the input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantErrorStats {
    pub mse: f64,
    pub max_abs: f64,
}

pub fn quant_error_stats(x: &Matrix, spec: QuantSpec) -> Result<QuantErrorStats> {
    let fq = fake_quant(x, spec)?;
    let n = x.as_slice().len();
    let (mut sum_sq, mut max_abs) = (0.0, 0.0f64);
    for (a, b) in fq.as_slice().iter().zip(x.as_slice()) {
        let e = a - b;
        sum_sq += e * e;
        max_abs = max_abs.max(e.abs());
    }
    Ok(QuantErrorStats {
        mse: if n == 0 { 0.0 } else { sum_sq / n as f64 },
        max_abs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use alloc::vec;
    use proptest::prelude::*;

    fn act(bits: u32, g: Granularity) -> QuantSpec {
        QuantSpec::activation(bits, g).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert_eq!(QuantSpec::weight(1), Err(Error::InvalidBits(1)));
        assert_eq!(QuantSpec::weight(17), Err(Error::InvalidBits(17)));
        assert!(matches!(
            QuantSpec::new(4, Granularity::PerToken, Target::Weight),
            Err(Error::GranularityMismatch(_))
        ));
        assert_eq!(QuantSpec::weight(4).unwrap().max_code(), 7);
        assert_eq!(QuantSpec::weight(8).unwrap().max_code(), 127);
        assert_eq!(QuantSpec::weight(2).unwrap().max_code(), 1);
    }

    #[test]
    fn zeros_quantize_to_zero_with_unit_scale() {
        let x = Matrix::zeros(3, 4);
        let q = quantize(&x, act(4, Granularity::PerTensor)).unwrap();
        assert!(q.codes().iter().all(|&c| c == 0));
        assert_eq!(q.scales(), &[1.0]);
        assert_eq!(q.dequantize(), x);
        let stats = quant_error_stats(&x, act(4, Granularity::PerChannel)).unwrap();
        assert_eq!(stats.mse, 0.0);
    }

    #[test]
    fn grid_values_roundtrip_exactly() {
        let x = Matrix::from_rows(&[[-7.0, -3.0, 0.0, 3.0, 7.0]]).unwrap();
        let q = quantize(&x, act(4, Granularity::PerTensor)).unwrap();
        assert_eq!(q.scales(), &[1.0]);
        assert_eq!(q.codes(), &[-7, -3, 0, 3, 7]);
        assert_eq!(q.dequantize(), x);
        let stats = quant_error_stats(&x, act(4, Granularity::PerTensor)).unwrap();
        assert_eq!((stats.mse, stats.max_abs), (0.0, 0.0));
    }

    #[test]
    fn dequantize_multiplies() {
        let spec = act(4, Granularity::PerTensor);
        let q = QuantizedTensor::from_parts(1, 2, vec![1, -1], vec![0.5], spec).unwrap();
        assert_eq!(q.dequantize().as_slice(), &[0.5, -0.5]);
        assert!(QuantizedTensor::from_parts(1, 2, vec![8, 0], vec![0.5], spec).is_err());
        assert!(QuantizedTensor::from_parts(1, 2, vec![1, 0], vec![0.0], spec).is_err());
    }

    #[test]
    fn per_channel_error_bound_seed_3() {
        let x = Rng::new(3).normal_matrix(8, 16, 1.0);
        let spec = QuantSpec::weight(4).unwrap();
        let q = quantize(&x, spec).unwrap();
        let dq = q.dequantize();
        for r in 0..8 {
            let row_max = x.row(r).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let oracle_scale = row_max / 7.0;
            for c in 0..16 {
                let err = (dq.get(r, c) - x.get(r, c)).abs();
                assert!(err <= q.scale_at(r, c) / 2.0 + 1e-15);
                assert!((q.scale_at(r, c) - oracle_scale).abs() <= 1e-15 * oracle_scale);
            }
        }
    }

    #[test]
    fn per_tensor_8bit_bound_seed_9() {
        let x = Rng::new(9).normal_matrix(4, 4, 1.0);
        let q = quantize(&x, act(8, Granularity::PerTensor)).unwrap();
        let s = q.scales()[0];
        let err = q.dequantize().max_abs_diff(&x).unwrap();
        assert!(err <= s / 2.0);
    }

    #[test]
    fn per_channel_isolates_outlier_channel() {
        let mut x = Rng::new(4).normal_matrix(8, 32, 1.0).into_vec();
        x[2 * 32 + 5] = 1000.0;
        let x = Matrix::new(8, 32, x).unwrap();
        let tensor = fake_quant(&x, act(4, Granularity::PerTensor)).unwrap();
        let channel = fake_quant(&x, act(4, Granularity::PerChannel)).unwrap();
        let max_err = |fq: &Matrix, skip: usize| {
            (0..8)
                .filter(|&r| r != skip)
                .flat_map(|r| (0..32).map(move |c| (r, c)))
                .fold(0.0f64, |m, (r, c)| m.max((fq.get(r, c) - x.get(r, c)).abs()))
        };
        let tensor_stats = quant_error_stats(&x, act(4, Granularity::PerTensor)).unwrap();
        assert!(tensor_stats.max_abs <= 1000.0 / 7.0 / 2.0);
        assert!(max_err(&channel, 2) < max_err(&tensor, 2));
    }

    #[test]
    fn monotone_under_shared_scale() {
        // x ≤ y with the same anchor maximum in every group so scales match.
        let mut rng = Rng::new(12);
        let mut xs = vec![];
        let mut ys = vec![];
        for _ in 0..4 {
            let mut xr = vec![5.0];
            let mut yr = vec![5.0];
            for _ in 0..15 {
                let a = rng.uniform_in(-4.0, 4.0);
                xr.push(a);
                yr.push((a + rng.uniform_in(0.0, 1.0)).min(4.9));
            }
            xs.push(xr);
            ys.push(yr);
        }
        let x = Matrix::from_rows(&xs).unwrap();
        let y = Matrix::from_rows(&ys).unwrap();
        for g in [Granularity::PerTensor, Granularity::PerChannel] {
            let fx = fake_quant(&x, act(4, g)).unwrap();
            let fy = fake_quant(&y, act(4, g)).unwrap();
            assert!(fx.as_slice().iter().zip(fy.as_slice()).all(|(a, b)| a <= b));
        }
    }

    #[test]
    fn rotation_lowers_outlier_quant_error_seed_5() {
        use crate::numerics::HadamardMatrix;
        let mut x = Rng::new(5).normal_matrix(64, 32, 1.0).into_vec();
        for c in 0..32 {
            x[7 * 32 + c] *= 100.0;
        }
        let x = Matrix::new(64, 32, x).unwrap();
        let h = HadamardMatrix::new(64).unwrap();
        let spec = act(4, Granularity::PerToken);
        let plain = quant_error_stats(&x, spec).unwrap();
        let rotated = quant_error_stats(&h.apply(&x).unwrap(), spec).unwrap();
        assert!(rotated.mse < plain.mse, "{} vs {}", rotated.mse, plain.mse);
    }

    fn granularity() -> impl Strategy<Value = Granularity> {
        prop_oneof![
            Just(Granularity::PerTensor),
            Just(Granularity::PerToken),
            Just(Granularity::PerChannel)
        ]
    }

    proptest! {
        #[test]
        fn roundtrip_bound_and_idempotence(
            seed in any::<u64>(),
            rows in 1usize..8,
            cols in 1usize..8,
            bits in 2u32..=16,
            g in granularity(),
            mag in 1e-6f64..1e6,
        ) {
            let x = Rng::new(seed).uniform_matrix(rows, cols, -mag, mag);
            let spec = act(bits, g);
            let q = quantize(&x, spec).unwrap();
            prop_assert!(q.scales().iter().all(|&s| s > 0.0));
            let dq = q.dequantize();
            for r in 0..rows {
                for c in 0..cols {
                    let err = (dq.get(r, c) - x.get(r, c)).abs();
                    prop_assert!(err <= q.scale_at(r, c) / 2.0 * (1.0 + 1e-12));
                }
            }
            let twice = fake_quant(&dq, spec).unwrap();
            prop_assert_eq!(twice.as_slice(), dq.as_slice());
        }

        #[test]
        fn odd_symmetry(seed in any::<u64>(), g in granularity(), bits in 2u32..=8) {
            let x = Rng::new(seed).normal_matrix(5, 6, 3.0);
            let neg = x.map(|v| -v).unwrap();
            let spec = act(bits, g);
            let a = fake_quant(&x, spec).unwrap();
            let b = fake_quant(&neg, spec).unwrap();
            prop_assert!(a.as_slice().iter().zip(b.as_slice()).all(|(p, n)| *p == -*n));
        }

        #[test]
        fn per_channel_beats_per_tensor_on_outlier_channel(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let mut x = rng.normal_matrix(16, 32, 1.0).into_vec();
            let ch = rng.below(16);
            for c in 0..32 {
                x[ch * 32 + c] *= 100.0;
            }
            let x = Matrix::new(16, 32, x).unwrap();
            let pc = quant_error_stats(&x, act(4, Granularity::PerChannel)).unwrap();
            let pt = quant_error_stats(&x, act(4, Granularity::PerTensor)).unwrap();
            prop_assert!(pc.mse <= pt.mse);
        }
    }
}
