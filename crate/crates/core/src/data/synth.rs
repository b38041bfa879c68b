//! Synthetic gait-like surrogate population.
//!
//! Each (user, activity) pair gets one continuous 6-channel trial: gravity
//! plus a stride oscillation and its second harmonic on the accelerometer,
//! the matching rotation rate on the gyroscope, and white noise. Every user
//! carries a private phone orientation and gait idiosyncrasies; gender
//! scales the stride frequency and overweight status scales the amplitude
//! by the configured effect sizes.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::loader::{DatasetLayout, SUBJECTS_FILE, TRIAL_COLUMNS};
use crate::data::profile::{Gender, UserProfile};
use crate::data::window::{window_signal, Activity, LabeledWindow, CHANNELS};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::seed::{rng_for, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_users: usize,
    pub windows_per_user: usize,
    pub window_len: usize,
    pub stride: usize,
    pub sample_rate_hz: f64,
    /// Relative stride-frequency shift between genders.
    pub gender_effect: f64,
    /// Relative amplitude shift between overweight and other users.
    pub bmi_effect: f64,
    /// Scales per-user orientation and gait variation; 0 makes users identical
    /// up to attributes and noise.
    pub user_heterogeneity: f64,
    pub noise_sd: f64,
    /// Relative frequency of walking versus each other activity.
    pub walking_weight: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 24,
            windows_per_user: 60,
            window_len: 32,
            stride: 32,
            sample_rate_hz: 50.0,
            gender_effect: 0.15,
            bmi_effect: 0.3,
            user_heterogeneity: 1.0,
            noise_sd: 0.05,
            walking_weight: 2.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || !self.n_users.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "n_users must be even and positive for gender balance, got {}",
                self.n_users
            )));
        }
        if self.windows_per_user < Activity::COUNT {
            return Err(Error::Config(format!(
                "windows_per_user must be at least {} so every activity appears",
                Activity::COUNT
            )));
        }
        if self.window_len == 0 || self.stride == 0 {
            return Err(Error::Config("window_len and stride must be positive".into()));
        }
        for (name, v) in [
            ("gender_effect", self.gender_effect),
            ("bmi_effect", self.bmi_effect),
            ("user_heterogeneity", self.user_heterogeneity),
            ("noise_sd", self.noise_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if self.gender_effect >= 1.0 || self.bmi_effect >= 1.0 {
            return Err(Error::Config("effect sizes must be below 1".into()));
        }
        if !(self.sample_rate_hz > 0.0) || !(self.walking_weight > 0.0) {
            return Err(Error::Config("sample_rate_hz and walking_weight must be positive".into()));
        }
        Ok(())
    }

    /// Windows per activity, walking weighted, summing to `windows_per_user`.
    pub fn activity_counts(&self) -> [usize; Activity::COUNT] {
        let weights: Vec<f64> = Activity::ALL
            .iter()
            .map(|&a| if a == Activity::Walking { self.walking_weight } else { 1.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        let exact: Vec<f64> = weights
            .iter()
            .map(|w| w / total * self.windows_per_user as f64)
            .collect();
        let mut counts = [0usize; Activity::COUNT];
        for (c, e) in counts.iter_mut().zip(&exact) {
            *c = (e.floor() as usize).max(1);
        }
        let mut order: Vec<usize> = (0..Activity::COUNT).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
        let mut i = 0;
        while counts.iter().sum::<usize>() < self.windows_per_user {
            counts[order[i % Activity::COUNT]] += 1;
            i += 1;
        }
        while counts.iter().sum::<usize>() > self.windows_per_user {
            let (j, _) = counts.iter().enumerate().max_by_key(|(_, &c)| c).expect("nonempty");
            counts[j] -= 1;
        }
        counts
    }
}

struct Pattern {
    freq: f64,
    amp: f64,
    direction: [f64; 3],
    gravity: [f64; 3],
    gyro_amp: f64,
    gyro_axis: [f64; 3],
}

fn pattern(a: Activity) -> Pattern {
    let (freq, amp, direction, gravity, gyro_amp, gyro_axis) = match a {
        Activity::Walking => (1.9, 0.35, [0.2, 1.0, 0.3], [0.0, 1.0, 0.1], 0.8, [1.0, 0.2, 0.3]),
        Activity::Jogging => (2.7, 0.9, [0.3, 1.0, 0.4], [0.05, 1.0, 0.1], 2.0, [1.0, 0.3, 0.4]),
        Activity::Upstairs => (1.5, 0.3, [0.5, 1.0, 0.5], [0.25, 0.97, 0.1], 0.9, [0.8, 0.5, 0.3]),
        Activity::Downstairs => (2.2, 0.5, [0.2, 1.0, 0.7], [-0.2, 0.97, 0.1], 1.1, [0.9, 0.2, 0.7]),
        Activity::Sitting => (0.3, 0.02, [1.0, 0.0, 0.0], [0.1, 0.3, 0.95], 0.02, [0.0, 0.0, 1.0]),
        Activity::Standing => (0.3, 0.02, [1.0, 0.0, 0.0], [0.05, 0.99, 0.1], 0.03, [0.0, 1.0, 0.0]),
    };
    Pattern {
        freq,
        amp,
        direction: unit(direction),
        gravity,
        gyro_amp,
        gyro_axis: unit(gyro_axis),
    }
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Rodrigues rotation matrix.
fn rotation(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let [x, y, z] = unit(axis);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn rotate(r: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
        r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
        r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub profiles: Vec<UserProfile>,
    /// One continuous trial per (user, activity), activities in canonical order.
    pub trials: Vec<Vec<(Activity, Tensor)>>,
    pub window_len: usize,
    pub stride: usize,
    pub sample_rate_hz: f64,
}

impl SyntheticDataset {
    pub fn windows(&self) -> Vec<Vec<LabeledWindow>> {
        self.profiles
            .iter()
            .zip(&self.trials)
            .map(|(p, trials)| {
                trials
                    .iter()
                    .flat_map(|(activity, stream)| {
                        window_signal(stream, self.window_len, self.stride)
                            .expect("trial shapes are generated consistently")
                            .into_iter()
                            .map(move |signal| LabeledWindow {
                                signal,
                                activity: *activity,
                                user: p.user,
                            })
                    })
                    .collect()
            })
            .collect()
    }

    /// Writes the dataset in the CSV layout read by [`crate::data::load_trials`].
    pub fn write_csv(&self, root: &Path, layout: DatasetLayout) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let mut written = Vec::new();
        let mut subjects = String::from("user_id,gender,weight_kg,height_m,age\n");
        for p in &self.profiles {
            let g = match p.gender {
                Gender::Female => "female",
                Gender::Male => "male",
            };
            let _ = writeln!(subjects, "{},{g},{:?},{:?},{:?}", p.user, p.weight_kg, p.height_m, p.age);
        }
        let path = root.join(SUBJECTS_FILE);
        std::fs::write(&path, subjects).map_err(|e| Error::io(&path, e))?;
        written.push(path);

        for (p, trials) in self.profiles.iter().zip(&self.trials) {
            for (activity, stream) in trials {
                let n = stream.shape()[1];
                let mut body = TRIAL_COLUMNS.join(",");
                body.push('\n');
                for i in 0..n {
                    let _ = write!(body, "{:?}", i as f64 / self.sample_rate_hz);
                    for c in 0..CHANNELS {
                        let _ = write!(body, ",{:?}", stream.data()[c * n + i]);
                    }
                    body.push('\n');
                }
                let path = root.join(format!("{}_{}_1.csv", p.user, layout.code(*activity)));
                std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

fn profiles(cfg: &SynthConfig) -> Vec<UserProfile> {
    let n = cfg.n_users;
    let mut rng = rng_for(cfg.seed, Stream::Synth, &[u64::MAX]);
    let mut genders: Vec<Gender> = (0..n)
        .map(|i| if i < n / 2 { Gender::Female } else { Gender::Male })
        .collect();
    genders.shuffle(&mut rng);

    // Half of each gender is overweight; the odd user out alternates so the
    // population total stays within one of n/2.
    let mut overweight = vec![false; n];
    for (gi, g) in [Gender::Female, Gender::Male].into_iter().enumerate() {
        let mut members: Vec<usize> = (0..n).filter(|&i| genders[i] == g).collect();
        members.shuffle(&mut rng);
        let take = if gi == 0 {
            members.len().div_ceil(2)
        } else {
            members.len() / 2
        };
        for &i in &members[..take] {
            overweight[i] = true;
        }
    }

    (0..n)
        .map(|i| {
            let (h_mean, h_sd) = match genders[i] {
                Gender::Female => (1.64, 0.06),
                Gender::Male => (1.77, 0.07),
            };
            let height = Normal::<f64>::new(h_mean, h_sd)
                .expect("valid normal")
                .sample(&mut rng)
                .clamp(1.45, 2.05);
            let bmi = if overweight[i] {
                rng.random_range(25.5..32.0)
            } else {
                rng.random_range(19.0..24.5)
            };
            UserProfile {
                user: i as u32 + 1,
                gender: genders[i],
                weight_kg: bmi * height * height,
                height_m: height,
                age: rng.random_range(18..61) as f64,
            }
        })
        .collect()
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let profiles = profiles(cfg);
    let counts = cfg.activity_counts();
    let noise = Normal::new(0.0, cfg.noise_sd).expect("validated noise sd");
    let het = cfg.user_heterogeneity;

    let trials = profiles
        .iter()
        .map(|p| {
            let mut rng = rng_for(cfg.seed, Stream::Synth, &[p.user as u64]);
            let axis = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let rot = rotation(axis, het * rng.random_range(0.0..0.6));
            let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
            let freq_user = (0.08 * het * std_normal.sample(&mut rng)).exp();
            let amp_user = (0.15 * het * std_normal.sample(&mut rng)).exp();
            let harmonic = 0.35 + het * rng.random_range(-0.25..0.25);
            let harmonic_phase = het * rng.random_range(-PI..PI);

            let gender_sign = if p.gender == Gender::Female { 1.0 } else { -1.0 };
            let bmi_sign = if p.bmi() > 25.0 { 1.0 } else { -1.0 };
            let freq_attr = 1.0 + cfg.gender_effect * gender_sign;
            let amp_attr = 1.0 + cfg.bmi_effect * bmi_sign;

            Activity::ALL
                .iter()
                .zip(counts)
                .map(|(&activity, count)| {
                    let pat = pattern(activity);
                    let n = cfg.window_len + (count - 1) * cfg.stride;
                    let f = pat.freq * freq_user * freq_attr;
                    let amp = pat.amp * amp_user * amp_attr;
                    let gyro_amp = pat.gyro_amp * amp_user * amp_attr;
                    let phase = rng.random_range(0.0..2.0 * PI);
                    let gravity = rotate(&rot, pat.gravity);
                    let dir = rotate(&rot, pat.direction);
                    let gaxis = rotate(&rot, pat.gyro_axis);
                    let mut data = vec![0.0; CHANNELS * n];
                    for i in 0..n {
                        let t = i as f64 / cfg.sample_rate_hz;
                        let w = 2.0 * PI * f * t + phase;
                        let osc = w.sin() + harmonic * (2.0 * w + harmonic_phase).sin();
                        let spin = w.cos();
                        for k in 0..3 {
                            data[k * n + i] = gravity[k] + amp * dir[k] * osc + noise.sample(&mut rng);
                            data[(k + 3) * n + i] = gyro_amp * gaxis[k] * spin + noise.sample(&mut rng);
                        }
                    }
                    (activity, Tensor::new(vec![CHANNELS, n], data).expect("trial shape"))
                })
                .collect()
        })
        .collect();

    Ok(SyntheticDataset {
        profiles,
        trials,
        window_len: cfg.window_len,
        stride: cfg.stride,
        sample_rate_hz: cfg.sample_rate_hz,
    })
}
