//! Memory and flop-count models for the forward filters and the smoothers.
//!
//! Formulas are evaluated exactly: every fractional coefficient has a
//! denominator dividing 6, so counts are accumulated in sixths of a flop and
//! rounded (half up) to an integer only at the end.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mpf,
    Dbf,
    Sdbf,
    /// Rao-Blackwellized backward-simulation smoother with a Kalman filter per particle
    AlgL,
    /// Rao-Blackwellized smoother of the same family as `AlgL`
    Rbss,
    Dbsa,
    Sdbsa,
    Ddbsa,
    Sddbsa,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Mpf,
        Algorithm::Dbf,
        Algorithm::Sdbf,
        Algorithm::AlgL,
        Algorithm::Rbss,
        Algorithm::Dbsa,
        Algorithm::Sdbsa,
        Algorithm::Ddbsa,
        Algorithm::Sddbsa,
    ];
    pub const SMOOTHERS: [Algorithm; 4] = [Algorithm::Dbsa, Algorithm::Sdbsa, Algorithm::Ddbsa, Algorithm::Sddbsa];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mpf => "mpf",
            Algorithm::Dbf => "dbf",
            Algorithm::Sdbf => "sdbf",
            Algorithm::AlgL => "alg-l",
            Algorithm::Rbss => "rbss",
            Algorithm::Dbsa => "dbsa",
            Algorithm::Sdbsa => "sdbsa",
            Algorithm::Ddbsa => "ddbsa",
            Algorithm::Sddbsa => "sddbsa",
        }
    }

    fn disjoint(self) -> bool {
        matches!(self, Algorithm::Ddbsa | Algorithm::Sddbsa)
    }

    fn single_pass(self) -> bool {
        matches!(self, Algorithm::Sdbsa | Algorithm::Sddbsa)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

/// Problem sizes entering the cost models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_l: u64,
    pub d_n: u64,
    /// measurement dimension
    pub p: u64,
    pub n_p: u64,
    /// backward passes
    pub m: u64,
    pub n_i: u64,
    pub t: u64,
}

impl Dims {
    pub fn d(&self) -> u64 {
        self.d_l + self.d_n
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [("d_l", self.d_l), ("p", self.p), ("n_p", self.n_p), ("m", self.m), ("n_i", self.n_i), ("t", self.t)];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(Error::InvalidParam(format!("{name} must be at least 1"))),
            None => Ok(()),
        }
    }
}

/// Flop counts in sixths of a flop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
struct Sixths(i128);

impl Sixths {
    fn of(whole: i128) -> Self {
        Sixths(6 * whole)
    }
    /// `num / den` with `den` dividing 6.
    fn frac(num: i128, den: i128) -> Self {
        debug_assert!(6 % den == 0);
        Sixths(num * (6 / den))
    }
    fn times(self, k: i128) -> Self {
        Sixths(self.0 * k)
    }
    fn round(self) -> u64 {
        u64::try_from((self.0 + 3).div_euclid(6)).unwrap_or(0)
    }
}

impl std::ops::Add for Sixths {
    type Output = Sixths;
    fn add(self, o: Sixths) -> Sixths {
        Sixths(self.0 + o.0)
    }
}

impl std::iter::Sum for Sixths {
    fn sum<I: Iterator<Item = Sixths>>(it: I) -> Sixths {
        it.fold(Sixths::default(), |a, b| a + b)
    }
}

fn int(v: u64) -> i128 {
    v as i128
}

/// Real quantities stored over the whole interval.
pub fn memory_estimate(alg: Algorithm, dims: &Dims) -> Result<u64> {
    dims.validate()?;
    let (dl, dn, d, np, t) = (dims.d_l, dims.d_n, dims.d(), dims.n_p, dims.t);
    let mpf = np * t * (2 * dl * dl + 2 * dl + dn + 1);
    let dbf = t * (2 * d * d + 2 * d + np * dn + np);
    let sdbf = t * (2 * dl * dl + 2 * dl + np * dn + np);
    Ok(match alg {
        Algorithm::Mpf => mpf,
        Algorithm::Dbf => dbf,
        Algorithm::Sdbf => sdbf,
        Algorithm::AlgL | Algorithm::Rbss => mpf + dl * dl + d,
        Algorithm::Dbsa | Algorithm::Sdbsa => dbf + np + d * d + d + dn,
        Algorithm::Ddbsa | Algorithm::Sddbsa => sdbf + np + dl * dl + d,
    })
}

/// Leading-order flops of one forward recursion (dual filter when
/// `whole_state`, simplified dual filter otherwise): Gaussian measurement
/// update and moment conversion, Gaussian time update, and per particle the
/// innovation covariance with its factorization plus the marginalized
/// transition covariance with its sampling factor.
fn forward_per_step(dims: &Dims, whole_state: bool) -> Sixths {
    let (dl, dn, p, np) = (int(dims.d_l), int(dims.d_n), int(dims.p), int(dims.n_p));
    let dg = if whole_state { dl + dn } else { dl };
    let gaussian = Sixths::frac(14 * dg.pow(3), 3) + Sixths::of(2 * p * p * dg + 2 * p * dg * dg);
    let per_particle =
        Sixths::frac(p.pow(3), 3) + Sixths::of(2 * p * p * dl + 2 * p * dl * dl + 2 * dl * dl * dn + 2 * dl * dn * dn) + Sixths::frac(dn.pow(3), 3);
    gaussian + per_particle.times(np)
}

/// Per-backward-pass bracket of the closed-form smoother cost.
fn smoother_bracket(dims: &Dims, disjoint: bool) -> Sixths {
    let (dl, dn, np, ni) = (int(dims.d_l), int(dims.d_n), int(dims.n_p), int(dims.n_i));
    let dg = if disjoint { dl } else { dl + dn };
    let per_particle =
        Sixths::of(2 * dl * dl * dn + 2 * dl * dn * dn) + Sixths::frac(dn.pow(3), 3) + Sixths::of(5 * dl.pow(3));
    Sixths::frac(38 * dg.pow(3), 3)
        + Sixths::frac(20 * dn.pow(3), 3)
        + per_particle.times(ni * np)
        + Sixths::of(6 * ni * dg.pow(3))
}

fn flops_sixths(alg: Algorithm, dims: &Dims) -> Result<Sixths> {
    if !Algorithm::SMOOTHERS.contains(&alg) {
        return Err(Error::UnknownAlgorithm(format!("no flop model for {alg}")));
    }
    dims.validate()?;
    let disjoint = alg.disjoint();
    let passes = if alg.single_pass() { 1 } else { int(dims.m) };
    let per_step = forward_per_step(dims, !disjoint) + smoother_bracket(dims, disjoint).times(passes);
    Ok(per_step.times(int(dims.t)))
}

/// Closed-form flop count of a smoother over the whole interval: forward
/// recursions plus `M` backward passes (one pass for the marginal variants).
pub fn flops_estimate(alg: Algorithm, dims: &Dims) -> Result<u64> {
    flops_sixths(alg, dims).map(Sixths::round)
}

/// Costs of evaluating model matrices and functions once; zero by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionCosts {
    pub h: u64,
    pub b: u64,
    pub f: u64,
    pub a_l: u64,
    pub a_n: u64,
    pub g: u64,
    pub f_l: u64,
    pub f_n: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownOptions {
    /// forward weights reused in place of the measurement weights
    pub weight_reuse: bool,
    /// measurement messages stored by the forward pass
    pub store_ms: bool,
    pub costs: FunctionCosts,
}

/// Per-recursion flops of one backward step, by task.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PhaseCosts {
    /// backward prediction and linear pseudo-measurements
    pub c1: u64,
    pub pm1: u64,
    pub be1: u64,
    pub sm1: u64,
    pub bp2: u64,
    pub pm2: u64,
    pub ms2: u64,
    pub be2: u64,
    pub sm2: u64,
    /// all iterations of the refinement loop
    pub c2: u64,
    /// final selection and backward output
    pub c3: u64,
    pub total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub alg: Algorithm,
    pub memory_reals: u64,
    /// closed-form estimate, forward pass included
    pub flops_estimate: u64,
    /// task-by-task backward cost over all passes and steps
    pub backward_flops: u64,
    pub per_recursion: PhaseCosts,
}

/// Sampling a particle set of size `n`.
fn sampling_cost(n: i128) -> Sixths {
    Sixths::of(2 * n)
}

/// Task-by-task cost of one backward recursion, scaled to the whole run.
pub fn cost_breakdown(alg: Algorithm, dims: &Dims, opts: &BreakdownOptions) -> Result<CostReport> {
    let estimate = flops_sixths(alg, dims)?;
    let fc = &opts.costs;
    let c = |v: u64| Sixths::of(int(v));
    let (dl, dn, p, np, ni) = (int(dims.d_l), int(dims.d_n), int(dims.p), int(dims.n_p), int(dims.n_i));
    // whole-state expressions shrink to the linear block for the disjoint smoothers
    let (d, dn_g) = if alg.disjoint() { (dl, 0) } else { (dl + dn, dn) };
    let f = Sixths::frac;
    let w = Sixths::of;

    let w1 = c(fc.f) + f(26 * d.pow(3), 3) + f(-3 * d * d, 6) + f(5 * d, 6);
    let w1_vec = w(4 * d.pow(3) + 4 * d * d - 2 * d);
    let per_particle_1 = c(fc.f_n)
        + w(dn)
        + c(fc.a_n)
        + w(4 * dn.pow(3) - 2 * dn * dn)
        + w(2 * dn.pow(3) + dn * dn - dn)
        + f(2 * dn.pow(3), 3)
        + f(3 * dn * dn, 2)
        + f(5 * dn, 6)
        + w(2 * dn * dn - dn);
    let c1 = w1 + w1_vec + per_particle_1.times(np);

    let pm1 = w(2 * np * d - d)
        + w(5 * np * dl * dl + 4 * np * dn_g * dn_g + 4 * np * dl * dn_g + dl * dl + dn_g * dn_g + dl * dn_g);
    let chol_inv = |x: i128| f(2 * x.pow(3), 3) + f(3 * x * x, 2) + f(5 * x, 6);
    let be1 = f(14 * d.pow(3), 3) + f(d * d, 2) + f(5 * d, 6) + w(4 * d * d - d) + chol_inv(d) + w(2 * d * d - d);
    let sm1 = w(d * d + d) + chol_inv(d) + w(2 * d * d - d);
    let bp2 = (c(fc.a_n)
        + c(fc.f_n)
        + w(2 * dl * dn)
        + w(2 * dl * dl * dn + 2 * dl * dn * dn - dl * dn)
        + f(dn.pow(3), 3)
        + w(dn * dn)
        + f(5 * dn, 3)
        + w(2)
        + w(2 * dn * dn + 2 * dn - 1))
        .times(np);
    let pm2 = (c(fc.a_l)
        + w(2 * dl * dl)
        + w(4 * dl.pow(3) - dl * dl)
        + f(2 * dl.pow(3), 3)
        + f(5 * dl * dl, 2)
        + f(5 * dl, 6)
        + c(fc.f_l)
        + w(4 * dl * dl - dl)
        + f(dl.pow(3), 3)
        + w(2 * dl * dl)
        + f(5 * dl, 3)
        + w(2)
        + w(6 * dl * dl + 3 * dl - 1))
        .times(np);
    let ms2 = if opts.weight_reuse {
        Sixths::default()
    } else {
        (c(fc.b)
            + c(fc.g)
            + w(2 * p * dl)
            + w(2 * p * dl * dl + 2 * p * p * dl - p * dl)
            + f(dl.pow(3), 3)
            + w(dl * dl)
            + f(5 * dl, 3)
            + w(2)
            + f(2 * p.pow(3), 3)
            + f(7 * p * p, 2)
            + f(17 * p, 6)
            + w(-1))
        .times(np)
    };
    let d6 = if opts.weight_reuse { 1 } else { 2 };
    let be2 = w(d6 + d6 + W6_FLOPS).times(np);
    let sm2 = w(np + 2 * np - 1);
    let c2 = (pm1 + be1 + sm1 + bp2 + pm2 + ms2 + be2 + sm2).times(ni);

    let draw = if alg.single_pass() { w(dn * (2 * np - 1)) } else { sampling_cost(np) };
    let ms_terms = if opts.store_ms {
        Sixths::default()
    } else {
        c(fc.h) + w(2 * p * p * d + 2 * p * d * d - d * d - p * d) + c(fc.b) + c(fc.g) + w(2 * p * p * d + 3 * p * d + 2 * p * dl - p - d)
    };
    let be_out = ms_terms + w(d * d + d) + chol_inv(d) + w(2 * d * d - d);
    let c3 = draw + pm1 + be1 + be_out;
    let total = c1 + c2 + c3;

    let passes = if alg.single_pass() { 1 } else { int(dims.m) };
    let per_recursion = PhaseCosts {
        c1: c1.round(),
        pm1: pm1.round(),
        be1: be1.round(),
        sm1: sm1.round(),
        bp2: bp2.round(),
        pm2: pm2.round(),
        ms2: ms2.round(),
        be2: be2.round(),
        sm2: sm2.round(),
        c2: c2.round(),
        c3: c3.round(),
        total: total.round(),
    };
    Ok(CostReport {
        alg,
        memory_reals: memory_estimate(alg, dims)?,
        flops_estimate: estimate.round(),
        backward_flops: total.times(passes * int(dims.t)).round(),
        per_recursion,
    })
}

/// Flops of the final weight normalization term per particle.
const W6_FLOPS: i128 = 3;

/// Dominant backward terms of one pass, with the first-phase nonlinear term
/// counted once per particle as the task-by-task costs imply.
pub fn leading_backward_per_pass(alg: Algorithm, dims: &Dims) -> u64 {
    let (dl, dn, np, ni) = (int(dims.d_l), int(dims.d_n), int(dims.n_p), int(dims.n_i));
    let dg = if alg.disjoint() { dl } else { dl + dn };
    let per_particle =
        Sixths::of(2 * dl * dl * dn + 2 * dl * dn * dn) + Sixths::frac(dn.pow(3), 3) + Sixths::of(5 * dl.pow(3));
    (Sixths::frac(38 * dg.pow(3), 3)
        + Sixths::frac(20 * dn.pow(3), 3).times(np)
        + per_particle.times(ni * np)
        + Sixths::of(6 * ni * dg.pow(3)))
    .round()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims(d_l: u64, d_n: u64, p: u64, n_p: u64, m: u64, n_i: u64, t: u64) -> Dims {
        Dims { d_l, d_n, p, n_p, m, n_i, t }
    }

    #[test]
    fn memory_examples() {
        let x = dims(2, 2, 2, 100, 100, 1, 200);
        assert_eq!(memory_estimate(Algorithm::Mpf, &x).unwrap(), 300_000);
        assert_eq!(memory_estimate(Algorithm::Dbf, &x).unwrap(), 68_000);
        assert_eq!(memory_estimate(Algorithm::Dbsa, &x).unwrap(), 68_122);
        assert_eq!(memory_estimate(Algorithm::Sdbsa, &x).unwrap(), 68_122);
    }

    #[test]
    fn smoother_memory_below_kalman_bank_smoothers() {
        for n_p in [1, 10, 100, 1000] {
            let x = dims(2, 2, 2, n_p, 10, 1, 50);
            let lhs = (n_p * x.t * (2 * 4 + 2 * 2)) as i64;
            let rhs = (x.t * 2 * 16) as i64;
            if lhs > rhs {
                assert!(memory_estimate(Algorithm::Dbsa, &x).unwrap() < memory_estimate(Algorithm::AlgL, &x).unwrap());
            }
        }
    }

    #[test]
    fn bracket_for_four_state_dims() {
        // 38·64/3 + 20·8/3 = 864; per particle 16 + 16 + 8/3 + 40, times 100, plus 384
        let x = dims(2, 2, 2, 100, 1, 1, 1);
        assert_eq!(smoother_bracket(&x, false), Sixths::frac(3 * 864 + 3 * 7466 + 2 + 3 * 384, 3));
        let x2 = dims(2, 2, 2, 100, 1, 2, 1);
        assert_eq!(smoother_bracket(&x2, false).0 - smoother_bracket(&x, false).0, 6 * 7850 + 4);
    }

    #[test]
    fn flops_linear_in_m() {
        let base = dims(3, 2, 4, 50, 1, 1, 20);
        let f = |m| flops_estimate(Algorithm::Dbsa, &Dims { m, ..base }).unwrap() as i128;
        assert_eq!(f(3) - f(2), f(2) - f(1));
        assert_eq!(f(11) - f(1), 10 * (f(2) - f(1)));
    }

    #[test]
    fn disjoint_cheaper_than_redundant() {
        let x = dims(2, 2, 2, 100, 100, 1, 200);
        assert!(flops_estimate(Algorithm::Ddbsa, &x).unwrap() < flops_estimate(Algorithm::Dbsa, &x).unwrap());
        assert!(flops_estimate(Algorithm::Sdbsa, &x).unwrap() < flops_estimate(Algorithm::Dbsa, &x).unwrap());
    }

    #[test]
    fn filters_have_no_flop_model() {
        assert!(matches!(flops_estimate(Algorithm::Mpf, &dims(1, 1, 1, 1, 1, 1, 1)), Err(Error::UnknownAlgorithm(_))));
        assert!("spline".parse::<Algorithm>().is_err());
        assert_eq!("SDDBSA".parse::<Algorithm>().unwrap(), Algorithm::Sddbsa);
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(memory_estimate(Algorithm::Dbf, &dims(2, 2, 2, 0, 1, 1, 1)).is_err());
    }

    #[test]
    fn normalization_term_is_three_flops_per_particle() {
        let x = dims(2, 2, 2, 1, 1, 1, 1);
        let off = cost_breakdown(Algorithm::Dbsa, &x, &BreakdownOptions::default()).unwrap();
        // D6 + Z6 + w6 = 2 + 2 + 3 with one particle
        assert_eq!(off.per_recursion.be2, 7);
        let on = cost_breakdown(Algorithm::Dbsa, &x, &BreakdownOptions { weight_reuse: true, ..Default::default() }).unwrap();
        assert_eq!(on.per_recursion.be2, 5);
    }

    #[test]
    fn reuse_removes_measurement_weights() {
        let x = dims(2, 2, 3, 100, 10, 1, 10);
        let on = cost_breakdown(Algorithm::Dbsa, &x, &BreakdownOptions { weight_reuse: true, ..Default::default() }).unwrap();
        assert_eq!(on.per_recursion.ms2, 0);
        let off = cost_breakdown(Algorithm::Dbsa, &x, &BreakdownOptions::default()).unwrap();
        assert!(off.per_recursion.ms2 > 0);
        assert!(off.per_recursion.total > on.per_recursion.total);
    }

    #[test]
    fn storing_measurement_messages_lowers_final_phase() {
        let x = dims(2, 2, 3, 100, 10, 1, 10);
        let a = cost_breakdown(Algorithm::Dbsa, &x, &BreakdownOptions::default()).unwrap();
        let b = cost_breakdown(Algorithm::Dbsa, &x, &BreakdownOptions { store_ms: true, ..Default::default() }).unwrap();
        assert!(b.per_recursion.c3 < a.per_recursion.c3);
        assert_eq!(a.per_recursion.c2, b.per_recursion.c2);
    }

    #[test]
    fn function_costs_add_up() {
        let x = dims(2, 2, 3, 10, 1, 1, 1);
        let base = cost_breakdown(Algorithm::Dbsa, &x, &BreakdownOptions::default()).unwrap();
        let costs = FunctionCosts { f: 7, ..Default::default() };
        let with = cost_breakdown(Algorithm::Dbsa, &x, &BreakdownOptions { costs, ..Default::default() }).unwrap();
        assert_eq!(with.per_recursion.c1, base.per_recursion.c1 + 7);
    }

    #[test]
    fn breakdown_dominated_by_leading_terms_at_scale() {
        // large state and few sensors: the dropped quadratic terms fade as 1/D
        for alg in [Algorithm::Dbsa, Algorithm::Ddbsa] {
            let x = dims(100, 100, 2, 200, 1, 1, 1);
            let opts = BreakdownOptions { weight_reuse: true, store_ms: true, ..Default::default() };
            let full = cost_breakdown(alg, &x, &opts).unwrap().per_recursion.total as f64;
            let lead = leading_backward_per_pass(alg, &x) as f64;
            assert!((full / lead - 1.0).abs() < 0.05, "{alg}: {full} vs {lead}");
        }
    }

    #[test]
    fn breakdown_close_to_leading_terms_on_benchmark_dims() {
        let x = dims(2, 2, 2, 100, 1, 1, 1);
        let opts = BreakdownOptions { weight_reuse: true, store_ms: true, ..Default::default() };
        let full = cost_breakdown(Algorithm::Dbsa, &x, &opts).unwrap().per_recursion.total as f64;
        let lead = leading_backward_per_pass(Algorithm::Dbsa, &x) as f64;
        // lower-order terms still weigh in at D = 4
        assert!(full > lead && full < 3.0 * lead, "{full} vs {lead}");
    }

    #[test]
    fn marginal_variants_draw_by_mean() {
        let x = dims(2, 3, 2, 50, 10, 1, 1);
        let s = cost_breakdown(Algorithm::Sdbsa, &x, &BreakdownOptions::default()).unwrap();
        let d = cost_breakdown(Algorithm::Dbsa, &x, &BreakdownOptions::default()).unwrap();
        // D_N(2N_p - 1) versus 2N_p
        assert_eq!(s.per_recursion.c3 + 100, d.per_recursion.c3 + 3 * 99);
        assert_eq!(d.backward_flops, 10 * d.per_recursion.total);
    }

    fn arb_dims() -> impl Strategy<Value = Dims> {
        (1u64..6, 0u64..6, 1u64..30, 1u64..300, 1u64..50, 1u64..4, 1u64..100)
            .prop_map(|(d_l, d_n, p, n_p, m, n_i, t)| Dims { d_l, d_n, p, n_p, m, n_i, t })
    }

    proptest! {
        #[test]
        fn estimates_monotone(x in arb_dims(), which in 0usize..4) {
            let bumps = [
                Dims { n_p: x.n_p + 1, ..x },
                Dims { m: x.m + 1, ..x },
                Dims { n_i: x.n_i + 1, ..x },
                Dims { t: x.t + 1, ..x },
            ];
            for alg in Algorithm::SMOOTHERS {
                let base = flops_estimate(alg, &x).unwrap();
                prop_assert!(flops_estimate(alg, &bumps[which]).unwrap() >= base);
            }
            for alg in Algorithm::ALL {
                let base = memory_estimate(alg, &x).unwrap();
                prop_assert!(memory_estimate(alg, &bumps[which]).unwrap() >= base);
            }
        }
    }
}
