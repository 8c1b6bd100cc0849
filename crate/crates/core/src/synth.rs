//! Synthetic object images with known labels.
//!
//! Each image draws a Poisson number of objects over its extent. Every
//! object picks a phenotype from its class's mixture and draws one
//! intensity per channel from that phenotype's normal distribution,
//! truncated at zero. Locations are uniform or clustered (parents uniform
//! over the extent, offspring normally scattered around a random parent and
//! redrawn when they fall outside).

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ObjectImage, ObjectRecord};
use crate::seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("degenerate synthetic spec: {0}")]
    DegenerateSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phenotype {
    pub name: String,
    /// Per-channel mean intensity.
    pub mean: Vec<f32>,
    /// Per-channel standard deviation before truncation.
    pub spread: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialPattern {
    Uniform,
    Clustered { clusters: usize, radius_um: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    /// Phenotype proportions, one per phenotype, summing to 1.
    pub mixture: Vec<f64>,
    pub pattern: SpatialPattern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub width_um: f64,
    pub height_um: f64,
    pub resolution_um_per_px: f64,
    /// Expected objects per µm²; counts are Poisson around `density · area`.
    pub density: f64,
    pub channels: usize,
    pub phenotypes: Vec<Phenotype>,
    /// Class `i` generates images labelled `i`.
    pub classes: Vec<ClassSpec>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::DegenerateSpec(m));
        if !(self.width_um > 0.0 && self.height_um > 0.0 && self.resolution_um_per_px > 0.0) {
            return bad("extent and resolution must be positive".into());
        }
        if !(self.density.is_finite() && self.density >= 0.0) {
            return bad(format!("density {} must be >= 0", self.density));
        }
        if self.channels == 0 || self.phenotypes.is_empty() {
            return bad("need at least one channel and one phenotype".into());
        }
        if self.classes.is_empty() || self.classes.len() > 255 {
            return bad(format!("{} classes; need 1..=255", self.classes.len()));
        }
        for p in &self.phenotypes {
            if p.mean.len() != self.channels || p.spread.len() != self.channels {
                return bad(format!(
                    "phenotype {} needs {} channels",
                    p.name, self.channels
                ));
            }
            if p.mean.iter().any(|&m| !(m.is_finite() && m >= 0.0)) {
                return bad(format!("phenotype {} has a negative mean", p.name));
            }
            if p.spread.iter().any(|&s| !(s.is_finite() && s >= 0.0)) {
                return bad(format!("phenotype {} has a negative spread", p.name));
            }
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.mixture.len() != self.phenotypes.len() {
                return bad(format!("class {i} mixture has {} entries", c.mixture.len()));
            }
            if c.mixture.iter().any(|&m| m.is_nan() || m < 0.0) {
                return bad(format!("class {i} mixture has a negative entry"));
            }
            let sum: f64 = c.mixture.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return bad(format!("class {i} mixture sums to {sum}"));
            }
            if let SpatialPattern::Clustered {
                clusters,
                radius_um,
            } = c.pattern
            {
                if clusters == 0 || !(radius_um > 0.0 && radius_um.is_finite()) {
                    return bad(format!(
                        "class {i} clustering needs clusters >= 1, radius > 0"
                    ));
                }
            }
        }
        Ok(())
    }

    /// 672×504 µm, six channels, density 1/81.6 per µm². Phenotype 0 has
    /// high channel 0; class 1 holds `positive_fraction` of it, class 0
    /// `negative_fraction`.
    pub fn planted(positive_fraction: f64, negative_fraction: f64, seed: u64) -> Self {
        let mut other = vec![0.3f32; 6];
        other[0] = 0.1;
        let mut high = vec![0.3f32; 6];
        high[0] = 1.0;
        let class = |f: f64| ClassSpec {
            mixture: vec![f, 1.0 - f],
            pattern: SpatialPattern::Uniform,
        };
        Self {
            width_um: 672.0,
            height_um: 504.0,
            resolution_um_per_px: 0.5,
            density: 1.0 / 81.6,
            channels: 6,
            phenotypes: vec![
                Phenotype {
                    name: "marker_high".into(),
                    mean: high,
                    spread: vec![0.1; 6],
                },
                Phenotype {
                    name: "other".into(),
                    mean: other,
                    spread: vec![0.1; 6],
                },
            ],
            classes: vec![class(negative_fraction), class(positive_fraction)],
            seed,
        }
    }

    /// Planted task: 30% versus 10% marker-high objects.
    pub fn planted_default(seed: u64) -> Self {
        Self::planted(0.3, 0.1, seed)
    }

    /// Both classes identical: labels carry no signal.
    pub fn null_task(seed: u64) -> Self {
        Self::planted(0.2, 0.2, seed)
    }
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f32, sd: f32) -> f32 {
    if sd == 0.0 {
        return mean;
    }
    let n = Normal::new(mean, sd).expect("valid normal");
    loop {
        let v = n.sample(rng);
        if v >= 0.0 {
            return v;
        }
    }
}

fn locations<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    w: f64,
    h: f64,
    pattern: SpatialPattern,
) -> Vec<(f64, f64)> {
    match pattern {
        SpatialPattern::Uniform => (0..n)
            .map(|_| (rng.random_range(0.0..w), rng.random_range(0.0..h)))
            .collect(),
        SpatialPattern::Clustered {
            clusters,
            radius_um,
        } => {
            let parents: Vec<(f64, f64)> = (0..clusters)
                .map(|_| (rng.random_range(0.0..w), rng.random_range(0.0..h)))
                .collect();
            let scatter = Normal::new(0.0, radius_um).expect("valid normal");
            (0..n)
                .map(|_| {
                    let (px, py) = parents[rng.random_range(0..clusters)];
                    loop {
                        let x = px + scatter.sample(rng);
                        let y = py + scatter.sample(rng);
                        if (0.0..w).contains(&x) && (0.0..h).contains(&y) {
                            break (x, y);
                        }
                    }
                })
                .collect()
        }
    }
}

/// One image of class `class` from its own seed.
pub fn generate_image(
    spec: &SynthSpec,
    class: usize,
    id: &str,
    seed: u64,
) -> Result<ObjectImage, SynthError> {
    let c = &spec.classes[class];
    let mut rng = seed::rng(seed);
    let mean = spec.density * spec.width_um * spec.height_um;
    let n = if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize
    } else {
        0
    };
    let pick = WeightedIndex::new(&c.mixture)
        .map_err(|e| SynthError::DegenerateSpec(format!("class {class} mixture: {e}")))?;
    let locs = locations(&mut rng, n, spec.width_um, spec.height_um, c.pattern);
    let objects = locs
        .into_iter()
        .map(|(x, y)| {
            let ph = &spec.phenotypes[pick.sample(&mut rng)];
            let props = ph
                .mean
                .iter()
                .zip(&ph.spread)
                .map(|(&m, &s)| truncated_normal(&mut rng, m, s))
                .collect();
            ObjectRecord::new(x, y, props)
        })
        .collect();
    Ok(ObjectImage::new(
        id,
        spec.width_um,
        spec.height_um,
        spec.resolution_um_per_px,
        Some(class as u8),
        spec.channels,
        objects,
    )?)
}

/// `n_per_class` images of every class, class by class. Image `i` (in
/// output order) uses seed `derive_index(derive(spec.seed, "image"), i)`.
pub fn generate(spec: &SynthSpec, n_per_class: usize) -> Result<Vec<ObjectImage>, SynthError> {
    spec.validate()?;
    let base = seed::derive(spec.seed, "image");
    (0..spec.classes.len() * n_per_class)
        .into_par_iter()
        .map(|i| {
            let class = i / n_per_class;
            let id = format!("synth_c{class}_{:04}", i % n_per_class);
            generate_image(spec, class, &id, seed::derive_index(base, i as u64))
        })
        .collect()
}

/// Mean distance from each object to its nearest neighbour.
pub fn mean_nearest_neighbour(img: &ObjectImage) -> f64 {
    let o = img.objects();
    if o.len() < 2 {
        return f64::NAN;
    }
    let total: f64 = o
        .iter()
        .enumerate()
        .map(|(i, a)| {
            o.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| (a.x - b.x).hypot(a.y - b.y))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / o.len() as f64
}
