//! Membership functions and the sculpted antecedent partition.
//!
//! Two MF shapes are supported: the plain Gaussian and the two-sided
//! Gaussian with independent left and right deviations. A
//! [`SculptedPartition`] derives a full bank of two-sided Gaussians from
//! `P + 2` scalars: the first center, the first left deviation, and one
//! right deviation per MF. Consecutive centers sit exactly four right
//! deviations apart and neighbouring MFs share the deviation of the
//! interval between them, which bounds the number of simultaneously
//! active MFs by two.

use thiserror::Error;

/// Grade below which an MF is considered inactive. Equals `exp(-8)`, the
/// grade of a Gaussian four deviations from its center.
pub const ACTIVATION_FLOOR: f64 = 3.354_626_279_025_118_5e-4;

#[derive(Debug, Error, PartialEq)]
pub enum MembershipError {
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("deviation {index} must be positive, got {value}")]
    NonPositiveDeviation { index: usize, value: f64 },
    #[error("a partition needs at least one right deviation")]
    EmptyPartition,
}

/// Gaussian MF with center `c` and deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussMF {
    pub c: f64,
    pub sigma: f64,
}

impl GaussMF {
    pub fn new(c: f64, sigma: f64) -> Result<Self, MembershipError> {
        if sigma <= 0.0 {
            return Err(MembershipError::NonPositiveSigma(sigma));
        }
        Ok(Self { c, sigma })
    }

    /// Membership grade `exp(-(z - c)^2 / (2 sigma^2))`.
    pub fn grade(&self, z: f64) -> f64 {
        let d = z - self.c;
        (-(d * d) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// Two-sided Gaussian: left branch below the center, right branch above.
/// Both branches reach 1 at the center, so the grade is continuous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gauss2MF {
    pub c: f64,
    pub sigma_l: f64,
    pub sigma_r: f64,
}

impl Gauss2MF {
    pub fn new(c: f64, sigma_l: f64, sigma_r: f64) -> Result<Self, MembershipError> {
        if sigma_l <= 0.0 {
            return Err(MembershipError::NonPositiveSigma(sigma_l));
        }
        if sigma_r <= 0.0 {
            return Err(MembershipError::NonPositiveSigma(sigma_r));
        }
        Ok(Self { c, sigma_l, sigma_r })
    }

    /// Membership grade; the left deviation applies for `z <= c`.
    pub fn grade(&self, z: f64) -> f64 {
        let sigma = if z <= self.c { self.sigma_l } else { self.sigma_r };
        let d = z - self.c;
        (-(d * d) / (2.0 * sigma * sigma)).exp()
    }
}

/// A bank of `P` two-sided Gaussians parameterized by `c1`, `sigma_l1`,
/// and a vector of `P` right deviations. Centers and left deviations are
/// derived:
///
/// - `centers[p + 1] = centers[p] + 4 * sigma_r[p]`
/// - `sigma_l[0] = sigma_l1`, `sigma_l[p + 1] = sigma_r[p]`
///
/// so centers are strictly increasing whenever every deviation is
/// positive, and any `z` sees at most two grades above
/// [`ACTIVATION_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct SculptedPartition {
    pub c1: f64,
    pub sigma_l1: f64,
    pub sigma_r: Vec<f64>,
    centers: Vec<f64>,
    sigma_l: Vec<f64>,
}

impl SculptedPartition {
    /// Builds the partition, deriving centers and left deviations from
    /// the free parameters.
    pub fn sculpt(c1: f64, sigma_l1: f64, sigma_r: Vec<f64>) -> Result<Self, MembershipError> {
        if sigma_r.is_empty() {
            return Err(MembershipError::EmptyPartition);
        }
        if sigma_l1 <= 0.0 {
            return Err(MembershipError::NonPositiveSigma(sigma_l1));
        }
        for (index, &value) in sigma_r.iter().enumerate() {
            if value <= 0.0 {
                return Err(MembershipError::NonPositiveDeviation { index, value });
            }
        }
        let p = sigma_r.len();
        let mut centers = Vec::with_capacity(p);
        let mut sigma_l = Vec::with_capacity(p);
        centers.push(c1);
        sigma_l.push(sigma_l1);
        for i in 1..p {
            centers.push(centers[i - 1] + 4.0 * sigma_r[i - 1]);
            sigma_l.push(sigma_r[i - 1]);
        }
        Ok(Self { c1, sigma_l1, sigma_r, centers, sigma_l })
    }

    /// Number of MFs in the bank.
    pub fn len(&self) -> usize {
        self.sigma_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma_r.is_empty()
    }

    /// Derived, strictly increasing centers.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Derived left deviations (`sigma_l[0]` is the free parameter).
    pub fn sigma_l(&self) -> &[f64] {
        &self.sigma_l
    }

    /// The `p`-th MF (0-based).
    pub fn mf(&self, p: usize) -> Gauss2MF {
        Gauss2MF {
            c: self.centers[p],
            sigma_l: self.sigma_l[p],
            sigma_r: self.sigma_r[p],
        }
    }

    /// Grade of the `p`-th MF (0-based) at `z`.
    pub fn grade(&self, p: usize, z: f64) -> f64 {
        self.mf(p).grade(z)
    }

    /// Interval index of `z` among the centers, 1-based: returns `p*` with
    /// `centers[p* - 1] <= z < centers[p*]`, `0` below the first center,
    /// and `P` at or above the last. Exact centers belong to the interval
    /// on their right (left-closed convention).
    pub fn locate(&self, z: f64) -> usize {
        self.centers.partition_point(|&c| c <= z)
    }

    /// The pair of 0-based rule indices with non-negligible grades at `z`.
    /// Below the first center the pair is (0, 1); at or above the last it
    /// is (P-2, P-1). A single-MF partition returns (0, 0).
    pub fn active_pair(&self, z: f64) -> (usize, usize) {
        let p = self.len();
        if p == 1 {
            return (0, 0);
        }
        match self.locate(z) {
            0 => (0, 1),
            i if i >= p => (p - 2, p - 1),
            i => (i - 1, i),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} != {b} (tol {tol})");
    }

    #[test]
    fn gauss_peak_and_analytic_points() {
        let mf = GaussMF::new(1.5, 0.7).unwrap();
        assert_eq!(mf.grade(1.5), 1.0);
        // two deviations right: exp(-2)
        assert_close(mf.grade(1.5 + 2.0 * 0.7), (-2.0f64).exp(), 1e-15);
        // one deviation left: exp(-0.5)
        assert_close(mf.grade(1.5 - 0.7), (-0.5f64).exp(), 1e-15);
    }

    #[test]
    fn gauss_rejects_non_positive_sigma() {
        assert!(GaussMF::new(0.0, 0.0).is_err());
        assert!(GaussMF::new(0.0, -1.0).is_err());
    }

    #[test]
    fn gauss2_branches() {
        let mf = Gauss2MF::new(2.0, 1.0, 2.0).unwrap();
        assert_eq!(mf.grade(2.0), 1.0);
        // left branch, two left-deviations out: exp(-2)
        assert_close(mf.grade(0.0), (-2.0f64).exp(), 1e-15);
        // right branch, one right-deviation out: exp(-0.5)
        assert_close(mf.grade(4.0), (-0.5f64).exp(), 1e-15);
    }

    #[test]
    fn gauss2_continuous_at_center() {
        let mf = Gauss2MF::new(0.3, 0.2, 1.7).unwrap();
        let left = mf.grade(0.3 - 1e-12);
        let right = mf.grade(0.3 + 1e-12);
        assert!((left - right).abs() <= 1e-15);
        assert_eq!(mf.grade(0.3), 1.0);
    }

    #[test]
    fn sculpt_derives_centers() {
        let part = SculptedPartition::sculpt(0.0, 0.5, vec![0.25, 0.5, 0.25, 0.5, 0.3]).unwrap();
        assert_eq!(part.centers(), &[0.0, 1.0, 3.0, 4.0, 6.0]);
        assert_eq!(part.sigma_l(), &[0.5, 0.25, 0.5, 0.25, 0.5]);
    }

    #[test]
    fn sculpt_single_mf() {
        let part = SculptedPartition::sculpt(1.0, 0.5, vec![0.5]).unwrap();
        assert_eq!(part.centers(), &[1.0]);
        assert_eq!(part.len(), 1);
        assert_eq!(part.active_pair(10.0), (0, 0));
    }

    #[test]
    fn sculpt_uniform_quarter_deviations() {
        let part = SculptedPartition::sculpt(-2.0, 0.25, vec![0.25; 5]).unwrap();
        assert_eq!(part.centers(), &[-2.0, -1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn sculpt_rejects_bad_deviations() {
        assert_eq!(
            SculptedPartition::sculpt(0.0, 0.5, vec![0.25, -0.1]),
            Err(MembershipError::NonPositiveDeviation { index: 1, value: -0.1 })
        );
        assert!(SculptedPartition::sculpt(0.0, 0.0, vec![0.25]).is_err());
        assert_eq!(
            SculptedPartition::sculpt(0.0, 0.5, vec![]),
            Err(MembershipError::EmptyPartition)
        );
    }

    #[test]
    fn locate_intervals_and_boundaries() {
        let part = SculptedPartition::sculpt(0.0, 0.5, vec![0.25, 0.5, 0.25, 0.5, 0.3]).unwrap();
        // centers: [0, 1, 3, 4, 6]
        assert_eq!(part.locate(2.0), 2);
        assert_eq!(part.locate(-5.0), 0);
        // exact center belongs to the interval on its right
        assert_eq!(part.locate(3.0), 3);
        assert_eq!(part.locate(6.0), 5);
        assert_eq!(part.locate(100.0), 5);
    }

    #[test]
    fn active_pair_boundary_conventions() {
        let part = SculptedPartition::sculpt(0.0, 0.5, vec![0.25; 4]).unwrap();
        // centers: [0, 1, 2, 3]
        assert_eq!(part.active_pair(-1.0), (0, 1));
        assert_eq!(part.active_pair(0.5), (0, 1));
        assert_eq!(part.active_pair(1.5), (1, 2));
        assert_eq!(part.active_pair(3.5), (2, 3));
        assert_eq!(part.active_pair(3.0), (2, 3));
    }

    #[test]
    fn tail_domination_outside_adjacent_pair() {
        let part = SculptedPartition::sculpt(-1.0, 0.3, vec![0.2, 0.7, 0.4, 0.55]).unwrap();
        let centers = part.centers();
        // Sample each interval and check non-adjacent MFs stay under
        // exp(-8). At an interval endpoint the next-but-one MF sits at
        // exactly four deviations, where the bound holds with equality;
        // allow a ~1e-12 relative slack for the rounding of the derived
        // centers.
        let bound = ACTIVATION_FLOOR * (1.0 + 1e-12);
        for p in 0..part.len() - 1 {
            for k in 0..=10 {
                let z = centers[p] + (centers[p + 1] - centers[p]) * k as f64 / 10.0;
                for q in 0..part.len() {
                    if q != p && q != p + 1 {
                        assert!(
                            part.grade(q, z) <= bound,
                            "grade {} active at z={z} in interval {p}",
                            q
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn activation_floor_is_exp_minus_eight() {
        assert_close(ACTIVATION_FLOOR, (-8.0f64).exp(), 1e-19);
    }
}
