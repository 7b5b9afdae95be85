use num::{BigInt, BigRational, One};

/// Derivative multi-index over the independent variables: `idx[i]` is the
/// order of differentiation in direction `i`. The length always equals the
/// number of independent variables of the session the index was built for.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, dir: usize) -> Self {
        let mut v = vec![0; n];
        v[dir] = 1;
        MultiIndex(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    /// Total order |alpha|.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    /// Componentwise comparison: true iff self >= other everywhere.
    pub fn geq(&self, other: &MultiIndex) -> bool {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn bump(&self, dir: usize) -> MultiIndex {
        let mut v = self.0.clone();
        v[dir] += 1;
        MultiIndex(v)
    }

    /// Componentwise difference; None unless self >= other.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !self.geq(other) {
            return None;
        }
        Some(MultiIndex(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    /// First direction with a nonzero entry.
    pub fn first_nonzero(&self) -> Option<usize> {
        self.0.iter().position(|&k| k > 0)
    }

    /// Product of componentwise binomial coefficients C(self_i, other_i).
    /// Zero when other !<= self.
    pub fn binom(&self, other: &MultiIndex) -> BigRational {
        if !self.geq(other) {
            return BigRational::from_integer(BigInt::from(0));
        }
        let mut acc = BigInt::one();
        for (&n, &k) in self.0.iter().zip(&other.0) {
            acc *= binomial(n, k);
        }
        BigRational::from_integer(acc)
    }

    /// All multi-indices alpha with alpha <= self (componentwise),
    /// including zero and self itself.
    pub fn iter_leq(&self) -> Vec<MultiIndex> {
        let mut out = vec![Vec::new()];
        for &cap in &self.0 {
            let mut next = Vec::new();
            for prefix in &out {
                for k in 0..=cap {
                    let mut p = prefix.clone();
                    p.push(k);
                    next.push(p);
                }
            }
            out = next;
        }
        out.into_iter().map(MultiIndex).collect()
    }
}

fn binomial(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::from(0);
    }
    let k = k.min(n - k);
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k {
        num *= BigInt::from(n - i);
        den *= BigInt::from(i + 1);
    }
    num / den
}
