use crate::error::{Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based SplitMix64 generator.
///
/// Output `i` is a pure function of `(seed, i)`, so sequences are identical
/// across runs and platforms. Independent streams for parallel or per-sample
/// work come from [`Rng::stream`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Generator keyed by a seed plus any number of stream coordinates,
    /// e.g. `(seed, [epoch, sample_index])`.
    pub fn stream(seed: u64, keys: &[u64]) -> Self {
        let mut state = mix(seed ^ GOLDEN);
        for &k in keys {
            state = mix(state ^ mix(k.wrapping_add(GOLDEN)));
        }
        Rng { state }
    }

    /// Derives an independent child generator and advances this one.
    pub fn fork(&mut self) -> Self {
        Rng { state: mix(self.next_u64()) }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("uniform range [{lo}, {hi}) is empty")));
        }
        Ok(lo + (hi - lo) * self.next_f64())
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> Result<f64> {
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::InvalidArgument(format!("normal std must be > 0, got {std}")));
        }
        Ok(mean + std * self.standard_normal())
    }

    /// Box-Muller; one of the pair is discarded to keep the generator stateless
    /// beyond its counter.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Gamma(shape, 1) by Marsaglia-Tsang, with the `U^(1/a)` boost for shape < 1.
    pub fn gamma(&mut self, shape: f64) -> Result<f64> {
        if !(shape > 0.0) || !shape.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma shape must be > 0, got {shape}")));
        }
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0)?;
            let u = 1.0 - self.next_f64();
            return Ok(g * u.powf(1.0 / shape));
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let (x, v) = loop {
                let x = self.standard_normal();
                let v = 1.0 + c * x;
                if v > 0.0 {
                    break (x, v * v * v);
                }
            };
            let u = 1.0 - self.next_f64();
            if u < 1.0 - 0.0331 * x.powi(4) || u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return Ok(d * v);
            }
        }
    }

    /// Beta(a, b) as `X / (X + Y)` with `X ~ Gamma(a)`, `Y ~ Gamma(b)`.
    pub fn beta(&mut self, a: f64, b: f64) -> Result<f64> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidArgument(format!("beta parameters must be > 0, got ({a}, {b})")));
        }
        let x = self.gamma(a)?;
        let y = self.gamma(b)?;
        let sum = x + y;
        if sum == 0.0 {
            // Both draws underflowed; only possible for tiny shapes.
            return Ok(if self.next_f64() < a / (a + b) { 1.0 } else { 0.0 });
        }
        Ok((x / sum).clamp(0.0, 1.0))
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = Rng::new(1);
        let mut b = Rng::new(1);
        assert_eq!(a.uniform(0.0, 1.0).unwrap(), b.uniform(0.0, 1.0).unwrap());
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn known_first_outputs() {
        // SplitMix64 reference values for seed 0.
        let mut r = Rng::new(0);
        assert_eq!(r.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(r.next_u64(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn streams_differ_by_key() {
        let a = Rng::stream(5, &[0, 1]).next_u64();
        let b = Rng::stream(5, &[1, 0]).next_u64();
        let c = Rng::stream(5, &[0, 1]).next_u64();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn beta_mean_matches_analytic() {
        let mut r = Rng::new(3);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let v = r.beta(0.2, 0.2).unwrap();
            assert!((0.0..=1.0).contains(&v));
            sum += v;
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.02);

        let mut sum = 0.0;
        for _ in 0..n {
            sum += r.beta(2.0, 6.0).unwrap();
        }
        assert!((sum / n as f64 - 0.25).abs() < 0.02);
    }

    #[test]
    fn normal_mean_and_variance() {
        let mut r = Rng::new(9);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| r.normal(0.0, 1.0).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.03);
    }

    #[test]
    fn invalid_parameters() {
        let mut r = Rng::new(0);
        assert!(r.uniform(1.0, 1.0).is_err());
        assert!(r.uniform(2.0, 1.0).is_err());
        assert!(r.normal(0.0, 0.0).is_err());
        assert!(r.beta(0.0, 1.0).is_err());
        assert!(r.beta(1.0, -1.0).is_err());
    }

    #[test]
    fn uniform_in_range() {
        let mut r = Rng::new(4);
        for _ in 0..10_000 {
            let v = r.uniform(-2.0, 3.0).unwrap();
            assert!((-2.0..3.0).contains(&v));
        }
    }
}
