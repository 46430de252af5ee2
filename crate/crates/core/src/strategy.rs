//! Equilibrium bidding for a single shared resource and numeric checks of it:
//! a Monte Carlo best-response search and paired truthfulness probes on the
//! full mechanism.

use rand::Rng;
use thiserror::Error;

use crate::auction::{run_auction, AuctionError, AuctionSetup, OpenGate};
use crate::instances::{derive_seed, random_instance, rng, InstanceShape};
use crate::model::{AppIdx, PriceRule, ResourceKind};
use crate::valuation::ValuationMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("need more bidders than slots, got n={n}, m={m}")]
    NoCompetition { n: u32, m: u32 },
    #[error("valuation {0} outside [0, 1]")]
    ValuationOutOfRange(f64),
    #[error("grid step must be positive, got {0}")]
    BadGrid(f64),
    #[error("bid multiplier must be positive, got {0}")]
    BadMultiplier(f64),
    #[error(transparent)]
    Auction(#[from] AuctionError),
}

fn check(n: u32, m: u32, v: f64) -> Result<(), StrategyError> {
    if m < 1 || n <= m {
        return Err(StrategyError::NoCompetition { n, m });
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(StrategyError::ValuationOutOfRange(v));
    }
    Ok(())
}

/// Symmetric equilibrium bid `(n−m)/(n−m+1)·v` for `n` risk-neutral bidders
/// with uniform valuations competing for `m` slots.
pub fn equilibrium_bid(n: u32, m: u32, v: f64) -> Result<f64, StrategyError> {
    check(n, m, v)?;
    let k = f64::from(n - m);
    Ok(k / (k + 1.0) * v)
}

/// Expected payoff of bidding `b` with valuation `v` against rivals playing the
/// equilibrium: `((n−m+1)/(n−m)·b)^(n−m)·(v−b)`. Only meaningful while the
/// win probability stays below one, i.e. `b ≤ (n−m)/(n−m+1)`.
pub fn closed_form_utility(n: u32, m: u32, v: f64, b: f64) -> f64 {
    let k = f64::from(n - m);
    ((k + 1.0) / k * b).powf(k) * (v - b)
}

/// When the bidder under test takes a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WinRule {
    /// Beat every one of `n − m` rivals; the other `m − 1` slots are out of
    /// reach. This is the event whose probability the closed form integrates.
    #[default]
    RivalsForLastSlot,
    /// Rank among the `m` highest of all `n` bids.
    TopM,
}

/// How the win probability at each grid bid is estimated from the draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Estimator {
    /// Fraction of simulated auctions the bid wins.
    Direct,
    /// Estimate one rival's bid distribution from all draws pooled together,
    /// then combine the rivals analytically. Resolves win probabilities far
    /// below `1/samples`, which the direct count cannot.
    #[default]
    Pooled,
}

/// Settings of [`best_response_search`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub grid_step: f64,
    /// Simulated auctions; each draws one valuation per rival.
    pub samples: usize,
    pub seed: u64,
    pub rule: WinRule,
    pub estimator: Estimator,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            grid_step: 0.01,
            samples: 100_000,
            seed: 0,
            rule: WinRule::default(),
            estimator: Estimator::default(),
        }
    }
}

/// Monte Carlo expected-utility curve over a bid grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub argmax: f64,
    pub grid: Vec<f64>,
    pub utility: Vec<f64>,
    /// Estimated win probability at each grid bid.
    pub win_rate: Vec<f64>,
    pub samples: usize,
    pub estimator: Estimator,
    /// Rivals drawn per auction.
    pub rivals: u32,
    /// How many rivals may outbid the bidder while it still wins.
    pub allowed_above: u32,
    /// Largest rival bid, reached at valuation one.
    pub shade: f64,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

impl BestResponse {
    /// Win probability when each rival bids below `b` with probability `f`.
    pub fn win_probability(&self, f: f64) -> f64 {
        (0..=self.allowed_above)
            .map(|j| {
                binomial(self.rivals, j)
                    * (1.0 - f).powi(j as i32)
                    * f.powi((self.rivals - j) as i32)
            })
            .sum()
    }

    fn win_probability_slope(&self, f: f64) -> f64 {
        let (r, a) = (self.rivals, self.allowed_above);
        f64::from(r) * binomial(r - 1, a) * (1.0 - f).powi(a as i32) * f.powi((r - 1 - a) as i32)
    }

    /// Standard error of the utility estimate at grid point `k` if rivals
    /// really bid the equilibrium.
    pub fn standard_error(&self, k: usize, v: f64) -> f64 {
        let b = self.grid[k];
        let f = (b / self.shade).clamp(0.0, 1.0);
        let s = self.samples as f64;
        let sd = match self.estimator {
            Estimator::Direct => {
                let p = self.win_probability(f);
                (p * (1.0 - p) / s).sqrt()
            }
            Estimator::Pooled => {
                self.win_probability_slope(f)
                    * (f * (1.0 - f) / (s * f64::from(self.rivals))).sqrt()
            }
        };
        (v - b).abs() * sd
    }
}

/// Searches bids `0, step, 2·step, … ≤ v` for the best response of a bidder
/// with valuation `v` when every rival draws a uniform valuation and bids the
/// equilibrium. All grid points share the same draws, so the curve is smooth
/// and deterministic for a seed.
pub fn best_response_search(
    n: u32,
    m: u32,
    v: f64,
    opts: &SearchOptions,
) -> Result<BestResponse, StrategyError> {
    check(n, m, v)?;
    let step = opts.grid_step;
    if !(step.is_finite() && step > 0.0) {
        return Err(StrategyError::BadGrid(step));
    }
    let shade = equilibrium_bid(n, m, 1.0)?;
    let (rivals, allowed_above) = match opts.rule {
        WinRule::RivalsForLastSlot => (n - m, 0),
        WinRule::TopM => (n - 1, m - 1),
    };
    let mut rng = rng(opts.seed);
    let mut draws = vec![0.0; rivals as usize];
    // Direct: the bar a bid must clear in each auction. Pooled: every rival bid.
    let mut sorted = Vec::with_capacity(match opts.estimator {
        Estimator::Direct => opts.samples,
        Estimator::Pooled => opts.samples * rivals as usize,
    });
    for _ in 0..opts.samples {
        for d in draws.iter_mut() {
            *d = shade * rng.random::<f64>();
        }
        match opts.estimator {
            Estimator::Pooled => sorted.extend_from_slice(&draws),
            Estimator::Direct => {
                draws.sort_by(|a, b| b.total_cmp(a));
                sorted.push(draws[allowed_above as usize]);
            }
        }
    }
    sorted.sort_by(f64::total_cmp);

    let mut br = BestResponse {
        argmax: 0.0,
        grid: Vec::new(),
        utility: Vec::new(),
        win_rate: Vec::new(),
        samples: opts.samples,
        estimator: opts.estimator,
        rivals,
        allowed_above,
        shade,
    };
    let steps = (v / step + 1e-9).floor() as usize;
    br.grid = (0..=steps).map(|k| k as f64 * step).collect();
    for &b in &br.grid {
        let below = sorted.partition_point(|&x| x < b) as f64;
        let p = if sorted.is_empty() {
            0.0
        } else {
            match opts.estimator {
                Estimator::Direct => below / sorted.len() as f64,
                Estimator::Pooled => br.win_probability(below / sorted.len() as f64),
            }
        };
        br.win_rate.push(p);
        br.utility.push(p * (v - b));
    }
    let mut best = 0;
    for k in 1..br.utility.len() {
        if br.utility[k] > br.utility[best] {
            best = k;
        }
    }
    br.argmax = br.grid[best];
    Ok(br)
}

/// Monte Carlo search compared against the closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCheck {
    pub n: u32,
    pub m: u32,
    pub v: f64,
    pub argmax: f64,
    pub expected: f64,
    /// Largest |empirical − closed form| in standard errors over the interior.
    pub max_z: f64,
    pub interior_points: usize,
}

impl EquilibriumCheck {
    pub fn argmax_ok(&self, grid_step: f64, steps: f64) -> bool {
        (self.argmax - self.expected).abs() <= steps * grid_step + 1e-9
    }

    pub fn curve_ok(&self, z: f64) -> bool {
        self.max_z <= z
    }
}

/// Runs [`best_response_search`] and measures it against the equilibrium bid
/// and the closed-form utility. The interior excludes the grid's end points
/// and bids whose win probability is already zero or one.
pub fn check_equilibrium(
    n: u32,
    m: u32,
    v: f64,
    opts: &SearchOptions,
) -> Result<EquilibriumCheck, StrategyError> {
    let br = best_response_search(n, m, v, opts)?;
    let mut max_z: f64 = 0.0;
    let mut interior_points = 0;
    for (i, &b) in br.grid.iter().enumerate() {
        if i == 0 || i + 1 == br.grid.len() || b >= br.shade {
            continue;
        }
        let se = br.standard_error(i, v);
        if se == 0.0 {
            continue;
        }
        interior_points += 1;
        max_z = max_z.max((br.utility[i] - closed_form_utility(n, m, v, b)).abs() / se);
    }
    Ok(EquilibriumCheck {
        n,
        m,
        v,
        argmax: br.argmax,
        expected: equilibrium_bid(n, m, v)?,
        max_z,
        interior_points,
    })
}

/// Mean utility change from scaling one bidder's partial bids.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub mean_delta: f64,
    pub max_delta: f64,
    pub deltas: Vec<f64>,
    /// Bid increment of each trial's instance.
    pub epsilons: Vec<f64>,
    /// Resource count of each trial's instance.
    pub resources: Vec<usize>,
}

impl ProbeResult {
    /// Mean of `ε·K` over the trials.
    pub fn mean_tolerance(&self) -> f64 {
        if self.epsilons.is_empty() {
            return 0.0;
        }
        self.epsilons
            .iter()
            .zip(&self.resources)
            .map(|(e, k)| e * *k as f64)
            .sum::<f64>()
            / self.epsilons.len() as f64
    }

    /// Trials whose delta exceeds `factor` times their own ε.
    pub fn exceeding(&self, factor: f64) -> usize {
        self.deltas
            .iter()
            .zip(&self.epsilons)
            .filter(|(d, e)| **d > factor * **e)
            .count()
    }
}

/// Utility of `app` in one auction: valuation of what it wins minus payment.
pub fn auction_utility(
    values: &[Vec<f64>],
    resources: &[ResourceKind],
    epsilon: f64,
    rule: PriceRule,
    app: AppIdx,
    multiplier: Option<f64>,
) -> Result<f64, StrategyError> {
    let mut setup = AuctionSetup::new(resources, values.len(), epsilon);
    setup.price_rule = rule;
    setup.bid_scale = multiplier.map(|k| (app, k));
    let out = run_auction(
        &setup,
        &ValuationMatrix::new(values.to_vec()),
        &mut OpenGate,
    )?;
    let won = out
        .assignment
        .resource_of(app)
        .map_or(0.0, |r| values[app.0][r.0]);
    Ok(won - out.assignment.payments[app.0])
}

/// Runs the same instance twice, once truthfully and once with `app`'s bids
/// multiplied, and reports `utility(scaled) − utility(truthful)`.
pub fn truthfulness_probe(
    values: &[Vec<f64>],
    resources: &[ResourceKind],
    epsilon: f64,
    rule: PriceRule,
    app: AppIdx,
    multiplier: f64,
) -> Result<f64, StrategyError> {
    if !(multiplier.is_finite() && multiplier > 0.0) {
        return Err(StrategyError::BadMultiplier(multiplier));
    }
    if multiplier == 1.0 {
        return Ok(0.0);
    }
    let truthful = auction_utility(values, resources, epsilon, rule, app, None)?;
    let scaled = auction_utility(values, resources, epsilon, rule, app, Some(multiplier))?;
    Ok(scaled - truthful)
}

/// Paired probes over `trials` random instances; the probed application is
/// drawn per trial. Trial `k` uses the seed derived from `(seed, k)`.
pub fn truthfulness_sweep(
    shape: InstanceShape,
    multiplier: f64,
    trials: usize,
    seed: u64,
    rule: PriceRule,
) -> Result<ProbeResult, StrategyError> {
    let mut deltas = Vec::with_capacity(trials);
    let mut epsilons = Vec::with_capacity(trials);
    let mut resources = Vec::with_capacity(trials);
    for k in 0..trials {
        let trial_seed = derive_seed(seed, k as u64);
        let inst = random_instance(shape, trial_seed);
        let app = AppIdx(rng(trial_seed ^ 0x5eed).random_range(0..inst.values.len()));
        deltas.push(truthfulness_probe(
            &inst.values,
            &inst.resources,
            inst.epsilon(),
            rule,
            app,
            multiplier,
        )?);
        epsilons.push(inst.epsilon());
        resources.push(inst.resources.len());
    }
    let mean_delta = if deltas.is_empty() {
        0.0
    } else {
        deltas.iter().sum::<f64>() / deltas.len() as f64
    };
    let max_delta = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ProbeResult {
        mean_delta,
        max_delta,
        deltas,
        epsilons,
        resources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_examples() {
        assert_eq!(equilibrium_bid(2, 1, 1.0).unwrap(), 0.5);
        assert!((equilibrium_bid(11, 1, 0.6).unwrap() - 10.0 / 11.0 * 0.6).abs() < 1e-15);
        assert!((equilibrium_bid(11, 1, 0.6).unwrap() - 0.5455).abs() < 1e-4);
        assert_eq!(equilibrium_bid(7, 3, 0.0).unwrap(), 0.0);
        assert_eq!(
            equilibrium_bid(2, 2, 0.5),
            Err(StrategyError::NoCompetition { n: 2, m: 2 })
        );
        assert_eq!(
            equilibrium_bid(3, 0, 0.5),
            Err(StrategyError::NoCompetition { n: 3, m: 0 })
        );
    }

    #[test]
    fn equilibrium_approaches_value() {
        assert!(equilibrium_bid(1000, 1, 0.7).unwrap() >= 0.999 * 0.7);
    }

    /// Grid argmax of the closed form, as an oracle independent of sampling.
    fn closed_form_argmax(n: u32, m: u32, v: f64, step: f64) -> f64 {
        let steps = (v / step + 1e-9).floor() as usize;
        (0..=steps)
            .map(|k| k as f64 * step)
            .max_by(|a, b| {
                closed_form_utility(n, m, v, *a).total_cmp(&closed_form_utility(n, m, v, *b))
            })
            .unwrap()
    }

    fn opts(grid_step: f64, samples: usize, seed: u64, rule: WinRule) -> SearchOptions {
        SearchOptions {
            grid_step,
            samples,
            seed,
            rule,
            estimator: Estimator::Pooled,
        }
    }

    #[test]
    fn two_bidders_best_response_is_half() {
        let br =
            best_response_search(2, 1, 1.0, &opts(0.01, 100_000, 1, WinRule::default())).unwrap();
        assert!((br.argmax - 0.5).abs() <= 0.02, "argmax {}", br.argmax);
        assert!((closed_form_argmax(2, 1, 1.0, 0.01) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn five_two_best_response() {
        let br =
            best_response_search(5, 2, 0.8, &opts(0.01, 100_000, 2, WinRule::default())).unwrap();
        assert!(
            (br.argmax - 0.6).abs() <= 0.02 + 1e-9,
            "argmax {}",
            br.argmax
        );
        assert!((closed_form_argmax(5, 2, 0.8, 0.01) - 0.6).abs() < 1e-9);
    }

    #[test]
    fn top_m_ranking_moves_the_best_response() {
        // Ranking among all n bids gives a different win probability than the
        // closed form once m > 1; the best response drops well below 0.6.
        let br = best_response_search(5, 2, 0.8, &opts(0.01, 100_000, 2, WinRule::TopM)).unwrap();
        assert!(br.argmax < 0.56, "argmax {}", br.argmax);
        // With a single slot the two rules coincide.
        let a = best_response_search(4, 1, 0.8, &opts(0.01, 20_000, 3, WinRule::TopM)).unwrap();
        let b = best_response_search(
            4,
            1,
            0.8,
            &opts(0.01, 20_000, 3, WinRule::RivalsForLastSlot),
        )
        .unwrap();
        assert_eq!(a.utility, b.utility);
    }

    #[test]
    fn direct_count_agrees_on_easy_cases() {
        let mut o = opts(0.01, 100_000, 4, WinRule::default());
        o.estimator = Estimator::Direct;
        let br = best_response_search(2, 1, 1.0, &o).unwrap();
        assert!((br.argmax - 0.5).abs() <= 0.02, "argmax {}", br.argmax);
        // at b = 0.25 one rival bidding U/2 is beaten half the time
        let p = br.win_rate[25];
        assert!(
            (p - 0.5).abs() < 5.0 * br.standard_error(25, 1.0) / 0.75,
            "p {p}"
        );
    }

    #[test]
    fn win_probability_matches_binomial_counts() {
        let br = best_response_search(5, 2, 0.8, &opts(0.1, 10, 0, WinRule::TopM)).unwrap();
        // four rivals, at most one above: f^4 + 4 f^3 (1 − f)
        let f: f64 = 0.3;
        assert!((br.win_probability(f) - (f.powi(4) + 4.0 * f.powi(3) * (1.0 - f))).abs() < 1e-15);
        let br =
            best_response_search(5, 2, 0.8, &opts(0.1, 10, 0, WinRule::RivalsForLastSlot)).unwrap();
        assert!((br.win_probability(f) - f.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn zero_valuation_is_flat() {
        let br =
            best_response_search(3, 1, 0.0, &opts(0.01, 10_000, 3, WinRule::default())).unwrap();
        assert_eq!(br.argmax, 0.0);
        assert!(br.utility.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn search_is_deterministic() {
        let a =
            best_response_search(3, 1, 0.5, &opts(0.05, 10_000, 9, WinRule::default())).unwrap();
        let b =
            best_response_search(3, 1, 0.5, &opts(0.05, 10_000, 9, WinRule::default())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unit_multiplier_is_exactly_zero() {
        let values = vec![vec![0.5, 0.2], vec![0.4, 0.3]];
        let res: Vec<ResourceKind> = (0..2)
            .map(|j| ResourceKind {
                id: format!("r{j}"),
                label: String::new(),
                slots: 1,
            })
            .collect();
        assert_eq!(
            truthfulness_probe(&values, &res, 1e-3, PriceRule::Entry, AppIdx(0), 1.0).unwrap(),
            0.0
        );
    }
}
