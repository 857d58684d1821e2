//! Ground-truth synthetic data generator: latent probability templates,
//! parametric warp families, optional group effects, and Bernoulli trial
//! outcomes, all deterministic per seed.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fd::{Delay, Grid, Group, TrialSeries};
use crate::transforms::{inverse_logit_scalar, logit_scalar};

/// Latent success-probability template on the aligned time scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemplateFamily {
    /// Rising logistic ramp from near `floor` to near `ceiling`, inflecting
    /// at s = 0.25 so the plateau is reached around mid-domain.
    Sigmoid { rate: f64, floor: f64, ceiling: f64 },
    /// Flat curve at probability `p`.
    Constant { p: f64 },
    /// Gaussian bump of the given `height` above 0.5, centered at `center`
    /// with standard-deviation `width`.
    Bump { center: f64, width: f64, height: f64 },
}

impl TemplateFamily {
    fn validate(&self) -> Result<()> {
        match *self {
            TemplateFamily::Sigmoid { rate, floor, ceiling } => {
                if !rate.is_finite() {
                    return Err(Error::InvalidConfig("sigmoid rate must be finite".into()));
                }
                if !(0.0 < floor && floor < ceiling && ceiling < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "sigmoid needs 0 < floor < ceiling < 1, got {floor} and {ceiling}"
                    )));
                }
            }
            TemplateFamily::Constant { p } => {
                if !(0.0 < p && p < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "constant probability must lie in (0, 1), got {p}"
                    )));
                }
            }
            TemplateFamily::Bump { center, width, height } => {
                if !(0.0..=1.0).contains(&center) || width <= 0.0 || width.is_nan() || height.abs() >= 0.5 {
                    return Err(Error::InvalidConfig(format!(
                        "bump needs center in [0,1], width > 0, |height| < 0.5; got \
                         center {center}, width {width}, height {height}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Template probability at aligned time `s`.
    pub fn probability_at(&self, s: f64) -> f64 {
        match *self {
            TemplateFamily::Sigmoid { rate, floor, ceiling } => {
                floor + (ceiling - floor) * inverse_logit_scalar(rate * (s - 0.25))
            }
            TemplateFamily::Constant { p } => p,
            TemplateFamily::Bump { center, width, height } => {
                let z = (s - center) / width;
                0.5 + height * (-0.5 * z * z).exp()
            }
        }
    }
}

/// Family of per-subject time warps; parameters draw uniformly from the
/// stated range on each subject's own random stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WarpFamily {
    /// Every subject runs on the common clock.
    Identity,
    /// Power warps s^a with the exponent drawn from [min, max]. Their
    /// derivative-log transform has the closed form (a-1)(ln s + 1).
    Power { min: f64, max: f64 },
    /// Normalized logistic ramp with steepness drawn from [min, max];
    /// steepness near zero degenerates to the identity.
    LogisticTime { min: f64, max: f64 },
}

impl WarpFamily {
    fn validate(&self) -> Result<()> {
        match *self {
            WarpFamily::Identity => Ok(()),
            WarpFamily::Power { min, max } => {
                if !(min > 0.0 && min <= max && max.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "power exponents need 0 < min <= max, got [{min}, {max}]"
                    )));
                }
                Ok(())
            }
            WarpFamily::LogisticTime { min, max } => {
                if !(min.is_finite() && max.is_finite() && min <= max) {
                    return Err(Error::InvalidConfig(format!(
                        "logistic steepness range [{min}, {max}] is invalid"
                    )));
                }
                Ok(())
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> WarpInstance {
        match *self {
            WarpFamily::Identity => WarpInstance::Power { exponent: 1.0 },
            WarpFamily::Power { min, max } => WarpInstance::Power {
                exponent: if min == max { min } else { rng.gen_range(min..max) },
            },
            WarpFamily::LogisticTime { min, max } => WarpInstance::Logistic {
                steepness: if min == max { min } else { rng.gen_range(min..max) },
            },
        }
    }
}

/// A concrete subject warp with closed-form evaluation.
#[derive(Debug, Clone, Copy)]
enum WarpInstance {
    Power { exponent: f64 },
    Logistic { steepness: f64 },
}

impl WarpInstance {
    fn gamma_at(&self, s: f64) -> f64 {
        match *self {
            WarpInstance::Power { exponent } => s.powf(exponent),
            WarpInstance::Logistic { steepness } => {
                if steepness.abs() < 1e-8 {
                    return s;
                }
                let sig = |x: f64| inverse_logit_scalar(steepness * (x - 0.5));
                let lo = sig(0.0);
                let hi = sig(1.0);
                (sig(s) - lo) / (hi - lo)
            }
        }
    }

    /// Post-composition with a power warp, used for group phase effects.
    fn with_phase_shift(self, shift: f64) -> ShiftedWarp {
        ShiftedWarp {
            inner: self,
            outer_exponent: shift.exp(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ShiftedWarp {
    inner: WarpInstance,
    outer_exponent: f64,
}

impl ShiftedWarp {
    fn gamma_at(&self, s: f64) -> f64 {
        self.inner.gamma_at(s).powf(self.outer_exponent)
    }
}

/// Systematic differences applied to group L only.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GroupEffect {
    /// Added to the template on the log-odds scale.
    pub amplitude_logit_shift: f64,
    /// Post-composes each warp with s^exp(shift); zero leaves warps alone.
    pub phase_shift: f64,
}

/// Full description of a synthetic two-group scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub n_l: usize,
    pub n_c: usize,
    pub trials_per_subject: usize,
    pub template: TemplateFamily,
    pub warps: WarpFamily,
    pub group_effect: GroupEffect,
    pub delay: Delay,
    pub seed: u64,
}

impl ScenarioSpec {
    fn validate(&self) -> Result<()> {
        if self.n_l + self.n_c == 0 {
            return Err(Error::InvalidConfig("scenario has no subjects".into()));
        }
        if self.trials_per_subject < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 trials per subject, got {}",
                self.trials_per_subject
            )));
        }
        self.template.validate()?;
        self.warps.validate()
    }
}

/// Latent truth behind a generated scenario, on the trial-time grid.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub grid: Grid,
    /// Unaligned success probabilities mu_i(s), one row per subject.
    pub probability: Array2<f64>,
    /// Warps gamma_i(s), one row per subject.
    pub warps: Array2<f64>,
    pub labels: Vec<Group>,
    pub subject_ids: Vec<String>,
}

/// Generates Bernoulli trial series plus the latent ground truth.
///
/// Subject `i` draws from `ChaCha8` stream `i + 1` of the scenario seed, so
/// the output is reproducible subject-by-subject regardless of generation
/// order. All L subjects come first.
pub fn generate(spec: &ScenarioSpec) -> Result<(Vec<TrialSeries>, GroundTruth)> {
    spec.validate()?;
    let n = spec.n_l + spec.n_c;
    let t = spec.trials_per_subject;
    let grid = Grid::uniform(t)?;
    let times = grid.points().to_vec();

    let mut series = Vec::with_capacity(n);
    let mut probability = Array2::zeros((n, t));
    let mut warps = Array2::zeros((n, t));
    let mut labels = Vec::with_capacity(n);
    let mut subject_ids = Vec::with_capacity(n);

    for i in 0..n {
        let group = if i < spec.n_l { Group::L } else { Group::C };
        let index_in_group = if group == Group::L { i + 1 } else { i - spec.n_l + 1 };
        let subject_id = format!("{group}{index_in_group:02}");

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64 + 1);

        let base_warp = spec.warps.draw(&mut rng);
        let phase_shift = if group == Group::L {
            spec.group_effect.phase_shift
        } else {
            0.0
        };
        let warp = base_warp.with_phase_shift(phase_shift);
        let logit_shift = if group == Group::L {
            spec.group_effect.amplitude_logit_shift
        } else {
            0.0
        };

        let mut outcomes = Vec::with_capacity(t);
        for (j, &s) in times.iter().enumerate() {
            let gamma = warp.gamma_at(s);
            let template_p = spec.template.probability_at(gamma);
            let mu = if logit_shift == 0.0 {
                template_p
            } else {
                inverse_logit_scalar(logit_scalar(template_p) + logit_shift)
            };
            probability[[i, j]] = mu;
            warps[[i, j]] = gamma;
            outcomes.push(u8::from(rng.gen::<f64>() < mu));
        }
        series.push(TrialSeries::new(
            subject_id.clone(),
            group,
            spec.delay,
            times.clone(),
            outcomes,
        )?);
        labels.push(group);
        subject_ids.push(subject_id);
    }

    Ok((
        series,
        GroundTruth {
            grid,
            probability,
            warps,
            labels,
            subject_ids,
        },
    ))
}
