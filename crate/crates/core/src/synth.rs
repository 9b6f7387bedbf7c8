//! Seeded synthetic monthly datasets with a seasonal, slowly trending
//! prevalence signal and optional shock months.
//!
//! Every month draws from its own random stream, keyed by the month's index,
//! so a shock changes nothing outside its own record.

use std::collections::BTreeSet;

use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, MonthKey, MonthlyRecord};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};

/// A month whose screening volume and prevalence are perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shock {
    pub month: MonthKey,
    pub screening_multiplier: f64,
    pub prevalence_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub seed: u64,
    pub start_year: i32,
    pub n_years: u32,
    pub base_prevalence: f64,
    pub seasonal_amplitude: f64,
    pub trend_per_year: f64,
    /// Calendar months 1..=12 forming one contiguous (possibly year-wrapping) season.
    pub rain_season_months: Vec<u32>,
    pub noise_sd: f64,
    pub mean_screened: u32,
    pub shock_months: Vec<Shock>,
    /// Set `prev` to the latent proportion instead of drawing positives.
    pub exact_proportion: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            start_year: 1996,
            n_years: 22,
            base_prevalence: 0.25,
            seasonal_amplitude: 0.1,
            trend_per_year: -0.003,
            rain_season_months: (4..=11).collect(),
            noise_sd: 0.02,
            mean_screened: 400,
            shock_months: Vec::new(),
            exact_proportion: false,
        }
    }
}

const PREV_FLOOR: f64 = 0.01;
const PREV_CEIL: f64 = 0.99;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::param(format!("{field}: {why}")));
        if self.n_years == 0 {
            return bad("n_years", "must be >= 1".into());
        }
        if MonthKey::new(self.start_year, 1).is_err()
            || MonthKey::new(self.start_year + self.n_years as i32 - 1, 12).is_err()
        {
            return bad(
                "start_year",
                "generated years fall outside 1900..=2200".into(),
            );
        }
        for (field, v) in [
            ("base_prevalence", self.base_prevalence),
            ("seasonal_amplitude", self.seasonal_amplitude),
            ("trend_per_year", self.trend_per_year),
            ("noise_sd", self.noise_sd),
        ] {
            if !v.is_finite() {
                return bad(field, "must be finite".into());
            }
        }
        if self.seasonal_amplitude < 0.0 {
            return bad("seasonal_amplitude", "must be >= 0".into());
        }
        let drift = self.trend_per_year.abs() * self.n_years as f64;
        let (lo, hi) = (
            self.base_prevalence - self.seasonal_amplitude - drift,
            self.base_prevalence + self.seasonal_amplitude + drift,
        );
        if !(lo > 0.0 && hi < 1.0) {
            return bad(
                "base_prevalence",
                format!("signal range [{lo}, {hi}] must stay inside (0, 1)"),
            );
        }
        if self.noise_sd < 0.0 {
            return bad("noise_sd", "must be >= 0".into());
        }
        if self.mean_screened < 10 {
            return bad("mean_screened", "must be >= 10".into());
        }
        season_layout(&self.rain_season_months)?;
        let (first, last) = (self.first_key(), self.last_key());
        let mut seen = BTreeSet::new();
        for s in &self.shock_months {
            if s.month < first || s.month > last {
                return bad(
                    "shock_months",
                    format!("{} lies outside {first}..={last}", s.month),
                );
            }
            if !seen.insert(s.month) {
                return bad("shock_months", format!("{} listed twice", s.month));
            }
            if !(s.screening_multiplier > 0.0 && s.screening_multiplier.is_finite()) {
                return bad(
                    "shock_months",
                    format!("{}: screening_multiplier must be > 0", s.month),
                );
            }
            if !s.prevalence_delta.is_finite() {
                return bad(
                    "shock_months",
                    format!("{}: prevalence_delta must be finite", s.month),
                );
            }
        }
        Ok(())
    }

    pub fn first_key(&self) -> MonthKey {
        MonthKey::new(self.start_year, 1).expect("validated start year")
    }

    pub fn last_key(&self) -> MonthKey {
        self.first_key().offset(12 * self.n_years as i64 - 1)
    }
}

/// First month and length of the rainy season.
fn season_layout(months: &[u32]) -> Result<(u32, u32)> {
    let set: BTreeSet<u32> = months.iter().copied().collect();
    let field = "rain_season_months";
    if set.is_empty() || set.len() != months.len() || set.iter().any(|m| !(1..=12).contains(m)) {
        return Err(Error::param(format!(
            "{field}: need distinct months in 1..=12"
        )));
    }
    let len = set.len() as u32;
    if len == 12 {
        return Ok((1, 12));
    }
    // the season starts at the member whose predecessor is not a member
    let starts: Vec<u32> = set
        .iter()
        .copied()
        .filter(|m| !set.contains(&if *m == 1 { 12 } else { m - 1 }))
        .collect();
    if starts.len() != 1 {
        return Err(Error::param(format!(
            "{field}: months must form one contiguous run"
        )));
    }
    Ok((starts[0], len))
}

/// Raised-cosine profile: 0 outside the season, peaking at 1 mid-season.
pub fn seasonal_profile(month: u32, season_start: u32, season_len: u32) -> f64 {
    let offset = (month + 12 - season_start) % 12;
    if offset >= season_len {
        return 0.0;
    }
    let u = (offset as f64 + 0.5) / season_len as f64;
    0.5 * (1.0 - (2.0 * std::f64::consts::PI * u).cos())
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

fn draft_month(spec: &SynthSpec, index: usize, s: f64) -> Result<MonthlyRecord> {
    let key = spec.first_key().offset(index as i64);
    let mut r = rng(derive_seed(spec.seed, index as u64));
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut z = || std.sample(&mut r);
    let shock = spec.shock_months.iter().find(|sh| sh.month == key);

    let years = (key.year() - spec.start_year) as f64;
    let noise = spec.noise_sd * z();
    let mut latent =
        spec.base_prevalence + spec.seasonal_amplitude * s + spec.trend_per_year * years + noise;
    let mut screened = (spec.mean_screened as f64 * (1.0 + 0.1 * z()))
        .round()
        .max(1.0);
    if let Some(sh) = shock {
        latent += sh.prevalence_delta;
        screened = (screened * sh.screening_multiplier).round().max(1.0);
    }
    let latent = latent.clamp(PREV_FLOOR, PREV_CEIL);
    let screened = screened as u32;

    let rain = (40.0 + 180.0 * s + 20.0 * z()).max(0.0);
    let x_temp = 27.5 - 2.5 * s + 0.4 * z();
    let min_temp = x_temp - 4.5 - 0.5 * z().abs();
    let max_temp = x_temp + 5.0 + 0.5 * z().abs();
    let median_age_neg = (60.0 + 6.0 * z()).max(0.0);
    let median_age_pos = (45.0 + 6.0 * z()).max(0.0);
    let iqr_age_neg = (80.0 + 8.0 * z()).max(0.0);
    let iqr_age_pos = (60.0 + 8.0 * z()).max(0.0);
    let x_pd = (15_000.0 + 20_000.0 * latent + 1_500.0 * z()).max(0.0);
    let sd_pd = (0.8 * x_pd + 500.0 * z().abs()).max(0.0);

    let prev = if spec.exact_proportion {
        latent
    } else {
        let draw = Binomial::new(screened as u64, latent)
            .map_err(|e| Error::param(format!("binomial draw: {e}")))?;
        draw.sample(&mut r) as f64 / screened as f64
    };
    Ok(MonthlyRecord {
        key,
        number_screened: screened,
        median_age_neg: round_to(median_age_neg, 1),
        median_age_pos: round_to(median_age_pos, 1),
        iqr_age_neg: round_to(iqr_age_neg, 1),
        iqr_age_pos: round_to(iqr_age_pos, 1),
        x_pd: round_to(x_pd, 1),
        sd_pd: round_to(sd_pd, 1),
        mm_rf: round_to(rain, 1),
        mmp_rf: 0.0,
        min_temp: round_to(min_temp, 1),
        max_temp: round_to(max_temp, 1),
        x_temp: round_to(x_temp, 1),
        prev,
    })
}

/// Builds `12 * n_years` consecutive months starting in January of `start_year`.
pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let (start, len) = season_layout(&spec.rain_season_months)?;
    let n = 12 * spec.n_years as usize;
    let mut records: Vec<MonthlyRecord> = (0..n)
        .map(|i| {
            let month = (i % 12) as u32 + 1;
            draft_month(spec, i, seasonal_profile(month, start, len))
        })
        .collect::<Result<_>>()?;
    for year in records.chunks_mut(12) {
        let total: f64 = year.iter().map(|r| r.mm_rf).sum();
        for r in year.iter_mut() {
            r.mmp_rf = if total > 0.0 {
                round_to(r.mm_rf / total, 4)
            } else {
                0.0
            };
        }
    }
    Dataset::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> SynthSpec {
        SynthSpec {
            seed,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn default_spec_gives_expected_cardinality() {
        let d = generate(&spec(1)).unwrap();
        assert_eq!(d.len(), 264);
        assert_eq!(d.first_key(), MonthKey::new(1996, 1).unwrap());
        assert_eq!(d.last_key(), MonthKey::new(2017, 12).unwrap());
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&spec(5)).unwrap().to_csv_string();
        let b = generate(&spec(5)).unwrap().to_csv_string();
        assert_eq!(a, b);
        assert_ne!(a, generate(&spec(6)).unwrap().to_csv_string());
    }

    #[test]
    fn csv_round_trip_validates() {
        let d = generate(&spec(2)).unwrap();
        let text = d.to_csv_string();
        let back = Dataset::from_reader(text.as_bytes()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_csv_string(), text);
    }

    #[test]
    fn degenerate_spec_is_flat() {
        let s = SynthSpec {
            seasonal_amplitude: 0.0,
            trend_per_year: 0.0,
            noise_sd: 0.0,
            exact_proportion: true,
            ..spec(3)
        };
        let d = generate(&s).unwrap();
        assert!(d.records().iter().all(|r| r.prev == s.base_prevalence));
        // binomial realisation scatters around the base
        let d = generate(&SynthSpec {
            exact_proportion: false,
            ..s.clone()
        })
        .unwrap();
        let mean = d.records().iter().map(|r| r.prev).sum::<f64>() / d.len() as f64;
        assert!((mean - s.base_prevalence).abs() < 0.01);
    }

    #[test]
    fn rainy_months_carry_more_malaria() {
        for seed in 0..5 {
            let s = SynthSpec {
                noise_sd: 0.0,
                n_years: 3,
                ..spec(seed)
            };
            let d = generate(&s).unwrap();
            let (mut rain, mut dry) = (Vec::new(), Vec::new());
            for r in d.records() {
                if (4..=11).contains(&r.key.month()) {
                    rain.push(r.prev)
                } else {
                    dry.push(r.prev)
                }
            }
            let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            assert!(m(&rain) > m(&dry));
        }
    }

    #[test]
    fn shock_touches_only_its_month() {
        let when = MonthKey::new(2017, 9).unwrap();
        let plain = generate(&spec(8)).unwrap();
        let shocked = generate(&SynthSpec {
            shock_months: vec![Shock {
                month: when,
                screening_multiplier: 0.3,
                prevalence_delta: -0.15,
            }],
            ..spec(8)
        })
        .unwrap();
        for (a, b) in plain.records().iter().zip(shocked.records()) {
            if a.key == when {
                assert!(b.number_screened < a.number_screened);
                assert!(b.prev < a.prev);
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn profile_peaks_mid_season_and_wraps() {
        let (start, len) = season_layout(&(4..=11).collect::<Vec<_>>()).unwrap();
        assert_eq!((start, len), (4, 8));
        let peak = (1..=12)
            .max_by(|a, b| seasonal_profile(*a, 4, 8).total_cmp(&seasonal_profile(*b, 4, 8)))
            .unwrap();
        assert!(peak == 7 || peak == 8);
        assert_eq!(seasonal_profile(2, 4, 8), 0.0);
        assert_eq!(season_layout(&[11, 12, 1, 2]).unwrap(), (11, 4));
        assert!(season_layout(&[1, 3]).is_err());
    }

    #[test]
    fn invalid_specs_name_the_field() {
        let cases = [
            (
                SynthSpec {
                    mean_screened: 5,
                    ..spec(0)
                },
                "mean_screened",
            ),
            (
                SynthSpec {
                    noise_sd: -0.1,
                    ..spec(0)
                },
                "noise_sd",
            ),
            (
                SynthSpec {
                    base_prevalence: 0.95,
                    ..spec(0)
                },
                "base_prevalence",
            ),
            (
                SynthSpec {
                    rain_season_months: vec![1, 5],
                    ..spec(0)
                },
                "rain_season_months",
            ),
        ];
        for (s, field) in cases {
            let msg = generate(&s).unwrap_err().to_string();
            assert!(msg.contains(field), "{msg}");
        }
        let out = SynthSpec {
            shock_months: vec![Shock {
                month: MonthKey::new(2030, 1).unwrap(),
                screening_multiplier: 1.0,
                prevalence_delta: 0.0,
            }],
            ..spec(0)
        };
        assert!(generate(&out)
            .unwrap_err()
            .to_string()
            .contains("shock_months"));
    }
}
