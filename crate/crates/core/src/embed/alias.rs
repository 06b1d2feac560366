//! Walker/Vose alias tables for O(1) sampling from a fixed discrete law.

use rand::Rng;

#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Builds a table from nonnegative weights with a positive, finite sum.
    pub fn new(weights: &[f64]) -> Option<Self> {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        if n == 0 || !(total > 0.0) || !total.is_finite() || weights.iter().any(|&w| w < 0.0) {
            return None;
        }
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![1.0; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in large.into_iter().chain(small) {
            prob[i] = 1.0;
        }
        Some(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }

    /// Exact probability of drawing `i`, reconstructed from the table.
    pub fn probability(&self, i: usize) -> f64 {
        let n = self.prob.len() as f64;
        let direct = self.prob[i];
        let via_alias: f64 = self
            .alias
            .iter()
            .zip(&self.prob)
            .filter(|(&a, _)| a as usize == i)
            .map(|(_, &p)| 1.0 - p)
            .sum();
        (direct + via_alias) / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reconstructs_normalized_weights() {
        let w = [1.0, 4.0, 0.25, 0.0, 2.75];
        let t = AliasTable::new(&w).unwrap();
        for (i, wi) in w.iter().enumerate() {
            assert!((t.probability(i) - wi / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_frequencies_within_three_sigma() {
        let w = [1.0 / 256.0, 1.0, 1.0 / 0.004, 3.0];
        let total: f64 = w.iter().sum();
        let t = AliasTable::new(&w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[t.sample(&mut rng)] += 1;
        }
        for i in 0..4 {
            let p = w[i] / total;
            let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!((counts[i] as f64 - draws as f64 * p).abs() <= 3.0 * sigma + 1.0);
        }
    }

    #[test]
    fn rejects_degenerate_weights() {
        assert!(AliasTable::new(&[]).is_none());
        assert!(AliasTable::new(&[0.0, 0.0]).is_none());
        assert!(AliasTable::new(&[1.0, -1.0, 2.0]).is_none());
    }
}
