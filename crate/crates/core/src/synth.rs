//! Synthetic ground truth drawn from the generative model, for recovery
//! tests and end-to-end fixtures.

use chrono::{Datelike, Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{RegionId, RegionLevel, RegionRecord};
use crate::error::{Error, Result};
use crate::hawkes::{check_simplex, susceptible_fraction};
use crate::sampling::poisson;

/// True reproduction number per day.
#[derive(Debug, Clone, PartialEq)]
pub enum RSchedule {
    Constant(f64),
    /// `(first_day, value)` breakpoints sorted by day; value holds until the
    /// next breakpoint. Days before the first breakpoint use its value.
    Piecewise(Vec<(usize, f64)>),
    /// One value per day; the last value is held past the end.
    Daily(Vec<f64>),
}

impl RSchedule {
    pub fn at(&self, day: usize) -> f64 {
        match self {
            RSchedule::Constant(r) => *r,
            RSchedule::Piecewise(points) => points
                .iter()
                .take_while(|(start, _)| *start <= day)
                .last()
                .or(points.first())
                .map_or(0.0, |&(_, r)| r),
            RSchedule::Daily(values) => values
                .get(day - 1)
                .or(values.last())
                .copied()
                .unwrap_or(0.0),
        }
    }

    fn values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            RSchedule::Constant(r) => Box::new(std::iter::once(*r)),
            RSchedule::Piecewise(points) => Box::new(points.iter().map(|p| p.1)),
            RSchedule::Daily(values) => Box::new(values.iter().copied()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub region: RegionId,
    pub start_date: NaiveDate,
    pub mu: f64,
    /// Lag weights w(0..L−1) on the simplex; `w[L-1]` applies to yesterday.
    pub weights: Vec<f64>,
    pub r_schedule: RSchedule,
    pub population: u64,
    /// Cumulative vaccinations per day; the last value is held past the end
    /// and an empty schedule means none. Vaccinations are capped at the
    /// uninfected population.
    pub vaccination: Vec<u64>,
    /// Counts imposed on the first days instead of sampled ones.
    pub initial_counts: Vec<u64>,
    /// Mobility rows per day; zeros of `mobility_dim` when absent.
    pub mobility: Option<Vec<Vec<f64>>>,
    pub mobility_dim: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// Constant-R world with no vaccination and zero mobility.
    pub fn constant(mu: f64, weights: Vec<f64>, r: f64, population: u64, seed: u64) -> Self {
        SynthSpec {
            region: RegionId::nation("SYN"),
            start_date: NaiveDate::from_ymd_opt(2020, 3, 2).unwrap(),
            mu,
            weights,
            r_schedule: RSchedule::Constant(r),
            population,
            vaccination: Vec::new(),
            initial_counts: Vec::new(),
            mobility: None,
            mobility_dim: 6,
            horizon: 365,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_simplex(&self.weights)?;
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::Argument(format!("base rate must be non-negative, got {}", self.mu)));
        }
        if self.r_schedule.values().any(|r| !(r.is_finite() && r >= 0.0)) {
            return Err(Error::Argument("reproduction schedule must be non-negative".into()));
        }
        if self.population == 0 || self.horizon == 0 {
            return Err(Error::Argument("population and horizon must be positive".into()));
        }
        if let Some(m) = &self.mobility {
            if m.len() < self.horizon {
                return Err(Error::Shape {
                    what: "synthetic mobility rows",
                    expected: self.horizon,
                    actual: m.len(),
                });
            }
        }
        Ok(())
    }

    fn vaccinated_on(&self, day: usize) -> u64 {
        self.vaccination
            .get(day - 1)
            .or(self.vaccination.last())
            .copied()
            .unwrap_or(0)
    }
}

/// Simulates the discounted Hawkes process day by day.
pub fn generate(spec: &SynthSpec) -> Result<RegionRecord> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lag = spec.weights.len();
    let pop = spec.population;
    let mut cases: Vec<u64> = Vec::with_capacity(spec.horizon);
    let mut cumulative = 0u64;
    // vaccinations only reach people not yet infected
    let mut vaccinated: Vec<u64> = Vec::with_capacity(spec.horizon);
    for t in 1..=spec.horizon {
        let v_prev = vaccinated.last().copied().unwrap_or(0);
        let v_today = spec.vaccinated_on(t).min(pop - cumulative).max(v_prev);
        let remaining = pop - cumulative - v_today;
        let draw = if let Some(&c) = spec.initial_counts.get(t - 1) {
            c
        } else {
            let excitation: f64 = (1..=lag.min(t - 1))
                .map(|i| spec.weights[lag - i] * spec.r_schedule.at(t - i) * cases[t - 1 - i] as f64)
                .sum();
            let frac = susceptible_fraction(cumulative as f64, v_prev as f64, pop as f64)?;
            poisson(frac * (spec.mu + excitation), &mut rng)
        };
        let c = draw.min(remaining);
        cumulative += c;
        cases.push(c);
        vaccinated.push(v_today);
    }
    let mobility = match &spec.mobility {
        Some(m) => m[..spec.horizon].to_vec(),
        None => vec![vec![0.0; spec.mobility_dim]; spec.horizon],
    };
    RegionRecord::new(spec.region.clone(), cases, mobility, vaccinated, pop, spec.start_date)
}

/// Restriction level in [0, 1] for a date: a stylized timeline with a
/// strict spring-2020 lockdown, gradual unlocking, and a partial lockdown in
/// spring 2021.
fn restriction(date: NaiveDate) -> f64 {
    let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
    let lerp = |from: NaiveDate, to: NaiveDate, a: f64, b: f64| {
        let x = (date - from).num_days() as f64 / (to - from).num_days() as f64;
        a + (b - a) * x.clamp(0.0, 1.0)
    };
    if date < d(2020, 3, 25) {
        0.0
    } else if date <= d(2020, 5, 31) {
        1.0
    } else if date <= d(2020, 12, 31) {
        lerp(d(2020, 5, 31), d(2020, 12, 31), 1.0, 0.3)
    } else if date < d(2021, 4, 15) {
        lerp(d(2021, 1, 1), d(2021, 4, 14), 0.3, 0.15)
    } else if date <= d(2021, 6, 15) {
        0.55
    } else {
        0.12
    }
}

/// Fully-restricted offsets for the six mobility columns (retail, grocery,
/// parks, transit, workplaces, residential).
const LOCKDOWN_MOBILITY: [f64; 6] = [-75.0, -40.0, -55.0, -65.0, -60.0, 25.0];

/// Stylized six-column mobility series with weekday effects and seeded
/// per-region noise.
pub fn stylized_mobility(start: NaiveDate, days: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 2.0).unwrap();
    (0..days)
        .map(|k| {
            let date = start + Days::new(k as u64);
            let s = restriction(date);
            let weekend = matches!(date.weekday(), chrono::Weekday::Sat | chrono::Weekday::Sun);
            LOCKDOWN_MOBILITY
                .iter()
                .enumerate()
                .map(|(j, base)| {
                    let weekday_effect = match (weekend, j) {
                        (true, 4) => 15.0,
                        (true, 5) => -5.0,
                        (true, 2) => 8.0,
                        _ => 0.0,
                    };
                    s * base + weekday_effect + noise.sample(&mut rng)
                })
                .collect()
        })
        .collect()
}

/// Settings for a small nation → state → districts world.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub districts: usize,
    pub start_date: NaiveDate,
    pub days: usize,
    pub mu: f64,
    /// Reproduction number at pre-pandemic mobility.
    pub r0: f64,
    /// Sensitivity of log R to mean activity (percent change / 100).
    pub mobility_effect: f64,
    /// Delay between mobility and its effect on R.
    pub effect_delay: usize,
    pub weights: Vec<f64>,
    pub district_population: u64,
    /// Daily vaccinations per district once vaccination starts.
    pub daily_vaccinations: u64,
    pub vaccination_start: NaiveDate,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        let lag = 7;
        // geometric decay towards older lags, most mass on recent days
        let raw: Vec<f64> = (0..lag).map(|j| 0.6f64.powi(lag - 1 - j)).collect();
        let total: f64 = raw.iter().sum();
        WorldSpec {
            districts: 3,
            start_date: NaiveDate::from_ymd_opt(2020, 2, 14).unwrap(),
            // through 2021-08-20
            days: 554,
            mu: 5.0,
            r0: 1.25,
            mobility_effect: 1.5,
            effect_delay: 7,
            weights: raw.into_iter().map(|w| w / total).collect(),
            district_population: 2_000_000,
            daily_vaccinations: 2_000,
            vaccination_start: NaiveDate::from_ymd_opt(2021, 1, 16).unwrap(),
            seed: 0,
        }
    }
}

/// A generated world: the full hierarchy plus one record per district.
#[derive(Debug, Clone)]
pub struct World {
    pub regions: Vec<RegionId>,
    pub populations: Vec<(String, u64)>,
    pub districts: Vec<RegionRecord>,
}

pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    if spec.districts == 0 {
        return Err(Error::Argument("a world needs at least one district".into()));
    }
    let nation = RegionId::nation("IN");
    let state = RegionId::child("ST1", RegionLevel::State, "IN");
    let mut regions = vec![nation.clone(), state.clone()];
    let mut populations = vec![
        (nation.id.clone(), spec.district_population * spec.districts as u64),
        (state.id.clone(), spec.district_population * spec.districts as u64),
    ];
    let mut districts = Vec::with_capacity(spec.districts);
    for k in 0..spec.districts {
        let seed = spec.seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
        let region = RegionId::child(format!("D{}", k + 1), RegionLevel::District, "ST1");
        let mobility = stylized_mobility(spec.start_date, spec.days, seed ^ 0x5eed);
        let r: Vec<f64> = (0..spec.days)
            .map(|idx| {
                let src = idx.saturating_sub(spec.effect_delay);
                let activity = mobility[src][..5].iter().sum::<f64>() / 500.0;
                spec.r0 * (spec.mobility_effect * activity).exp()
            })
            .collect();
        let vaccination = (0..spec.days)
            .map(|idx| {
                let date = spec.start_date + Days::new(idx as u64);
                let days_in = (date - spec.vaccination_start).num_days();
                if days_in < 0 {
                    0
                } else {
                    (days_in as u64 + 1) * spec.daily_vaccinations
                }
            })
            .collect();
        let synth = SynthSpec {
            region: region.clone(),
            start_date: spec.start_date,
            mu: spec.mu,
            weights: spec.weights.clone(),
            r_schedule: RSchedule::Daily(r),
            population: spec.district_population,
            vaccination,
            initial_counts: Vec::new(),
            mobility: Some(mobility),
            mobility_dim: 6,
            horizon: spec.days,
            seed,
        };
        districts.push(generate(&synth)?);
        populations.push((region.id.clone(), spec.district_population));
        regions.push(region);
    }
    Ok(World {
        regions,
        populations,
        districts,
    })
}
