use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EnvironmentError;
use crate::trig::{wrap_phase, TrigField};

/// Declared constants of the structural control of `a` and `H` by `ã`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralConstants {
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "C1H")]
    pub c1h: f64,
    #[serde(rename = "C2H")]
    pub c2h: f64,
    #[serde(rename = "C2a")]
    pub c2a: f64,
}

impl StructuralConstants {
    pub(crate) fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("m", self.m),
            ("M", self.big_m),
            ("K", self.k),
            ("C1H", self.c1h),
            ("C2H", self.c2h),
            ("C2a", self.c2a),
        ]
    }
}

/// Unvalidated description of a coefficient environment. Matrix fields are
/// stored in full, row-major, `d×d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub dimension: usize,
    pub a: Vec<TrigField>,
    pub a_tilde: Vec<TrigField>,
    pub h: Vec<TrigField>,
    pub v: TrigField,
    pub f: Vec<TrigField>,
    pub d: TrigField,
    pub constants: StructuralConstants,
}

impl EnvironmentSpec {
    /// Environment with `a = ã = κ·Id` and every other field zero.
    pub fn isotropic(dimension: usize, kappa: f64) -> Self {
        let d = dimension;
        let diag = |v: f64| -> Vec<TrigField> {
            (0..d * d)
                .map(|k| {
                    if k / d == k % d {
                        TrigField::constant(v)
                    } else {
                        TrigField::zero()
                    }
                })
                .collect()
        };
        Self {
            dimension,
            a: diag(kappa),
            a_tilde: diag(1.0),
            h: vec![TrigField::zero(); d * d],
            v: TrigField::zero(),
            f: vec![TrigField::zero(); d],
            d: TrigField::zero(),
            constants: StructuralConstants {
                m: kappa,
                big_m: kappa,
                k: kappa.max(kappa.sqrt()).max(1.0),
                c1h: 1.0,
                c2h: 1.0,
                c2a: 1.0,
            },
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> usize {
        i * self.dimension + j
    }

    /// Every field, in a fixed order, for bulk operations.
    pub(crate) fn fields_mut(&mut self) -> impl Iterator<Item = &mut TrigField> {
        self.a
            .iter_mut()
            .chain(self.a_tilde.iter_mut())
            .chain(self.h.iter_mut())
            .chain(std::iter::once(&mut self.v))
            .chain(self.f.iter_mut())
            .chain(std::iter::once(&mut self.d))
    }

    pub(crate) fn fields(&self) -> impl Iterator<Item = &TrigField> {
        self.a
            .iter()
            .chain(self.a_tilde.iter())
            .chain(self.h.iter())
            .chain(std::iter::once(&self.v))
            .chain(self.f.iter())
            .chain(std::iter::once(&self.d))
    }

    pub fn max_abs_kt(&self) -> u32 {
        self.fields().map(TrigField::max_abs_kt).max().unwrap_or(0)
    }

    pub fn max_abs_kx(&self, axis: usize) -> u32 {
        self.fields().map(|f| f.max_abs_kx(axis)).max().unwrap_or(0)
    }

    pub fn is_time_independent(&self) -> bool {
        self.fields().all(TrigField::is_time_independent)
    }

    pub(crate) fn check_shapes(&self) -> Result<(), EnvironmentError> {
        let d = self.dimension;
        if d == 0 {
            return Err(EnvironmentError::DimensionMismatch(
                "dimension must be at least 1".into(),
            ));
        }
        let shape_err = |what: &str, got: usize, want: usize| {
            EnvironmentError::DimensionMismatch(format!("{what} has {got} entries, expected {want}"))
        };
        if self.a.len() != d * d {
            return Err(shape_err("a", self.a.len(), d * d));
        }
        if self.a_tilde.len() != d * d {
            return Err(shape_err("a_tilde", self.a_tilde.len(), d * d));
        }
        if self.h.len() != d * d {
            return Err(shape_err("H", self.h.len(), d * d));
        }
        if self.f.len() != d {
            return Err(shape_err("f", self.f.len(), d));
        }
        if let Some(bad) = self.fields().find(|g| !g.has_dimension(d)) {
            return Err(EnvironmentError::DimensionMismatch(format!(
                "a mode wavevector does not have length {d}: {bad:?}"
            )));
        }
        Ok(())
    }

    /// The spec translated by `(t0, x0)`: every field `g` becomes
    /// `g(· + t0, · + x0)`.
    pub fn translated(&self, t0: f64, x0: &[f64]) -> Self {
        let mut out = self.clone();
        for g in out.fields_mut() {
            *g = g.translated(t0, x0);
        }
        out
    }

    /// One random-phase draw of the environment.
    ///
    /// Each distinct wavevector `k = (kt, kx)` receives an independent
    /// uniform phase shift `φ(k)` (with `φ(-k) = -φ(k)`), applied to every
    /// field carrying that wavevector. Entries of a matrix field sharing a
    /// mode are shifted identically, so symmetry of `a`, `ã` and
    /// antisymmetry of `H` survive. Amplitudes and wavenumbers are untouched.
    pub fn sample_random_phase(&self, seed: u64) -> Self {
        let mut keys: BTreeMap<(i32, Vec<i32>), f64> = BTreeMap::new();
        for g in self.fields() {
            for m in &g.modes {
                keys.insert(canonical_wavevector(m.kt, &m.kx).0, 0.0);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in keys.values_mut() {
            *v = rng.random::<f64>() * TAU;
        }
        let mut out = self.clone();
        for g in out.fields_mut() {
            for m in &mut g.modes {
                let (key, sign) = canonical_wavevector(m.kt, &m.kx);
                if key.0 == 0 && key.1.iter().all(|k| *k == 0) {
                    continue;
                }
                m.phase = wrap_phase(m.phase + sign * keys[&key]);
            }
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self, EnvironmentError> {
        let doc: EnvironmentDocument = serde_json::from_str(text).map_err(|e| EnvironmentError::Json(e.to_string()))?;
        doc.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&EnvironmentDocument::from(self)).expect("environment document serializes")
    }
}

fn canonical_wavevector(kt: i32, kx: &[i32]) -> ((i32, Vec<i32>), f64) {
    let first_nonzero = std::iter::once(kt).chain(kx.iter().copied()).find(|k| *k != 0);
    match first_nonzero {
        Some(k) if k < 0 => ((-kt, kx.iter().map(|v| -v).collect()), -1.0),
        _ => ((kt, kx.to_vec()), 1.0),
    }
}

/// On-disk JSON layout. Matrix fields may be given by their upper triangle
/// (`a`, `a_tilde`), strict upper triangle (`H`), or in full row-major form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvironmentDocument {
    pub dimension: usize,
    pub a: Vec<TrigField>,
    pub a_tilde: Vec<TrigField>,
    #[serde(rename = "H", default)]
    pub h: Vec<TrigField>,
    #[serde(rename = "V", default = "TrigField::zero")]
    pub v: TrigField,
    #[serde(default)]
    pub f: Vec<TrigField>,
    #[serde(default = "TrigField::zero")]
    pub d: TrigField,
    pub constants: StructuralConstants,
}

fn expand_symmetric(d: usize, name: &str, src: Vec<TrigField>) -> Result<Vec<TrigField>, EnvironmentError> {
    if src.len() == d * d {
        return Ok(src);
    }
    if src.len() != d * (d + 1) / 2 {
        return Err(EnvironmentError::DimensionMismatch(format!(
            "{name} needs {} (upper triangle) or {} (full) entries, got {}",
            d * (d + 1) / 2,
            d * d,
            src.len()
        )));
    }
    let mut out = vec![TrigField::zero(); d * d];
    let mut it = src.into_iter();
    for i in 0..d {
        for j in i..d {
            let g = it.next().expect("length checked");
            out[j * d + i] = g.clone();
            out[i * d + j] = g;
        }
    }
    Ok(out)
}

fn expand_antisymmetric(d: usize, src: Vec<TrigField>) -> Result<Vec<TrigField>, EnvironmentError> {
    if src.len() == d * d && d > 1 {
        return Ok(src);
    }
    if src.is_empty() {
        return Ok(vec![TrigField::zero(); d * d]);
    }
    if src.len() != d * (d - 1) / 2 {
        return Err(EnvironmentError::DimensionMismatch(format!(
            "H needs {} (strict upper triangle) or {} (full) entries, got {}",
            d * (d - 1) / 2,
            d * d,
            src.len()
        )));
    }
    let mut out = vec![TrigField::zero(); d * d];
    let mut it = src.into_iter();
    for i in 0..d {
        for j in i + 1..d {
            let g = it.next().expect("length checked");
            out[j * d + i] = g.scaled(-1.0);
            out[i * d + j] = g;
        }
    }
    Ok(out)
}

impl TryFrom<EnvironmentDocument> for EnvironmentSpec {
    type Error = EnvironmentError;

    fn try_from(doc: EnvironmentDocument) -> Result<Self, Self::Error> {
        let d = doc.dimension;
        if d == 0 {
            return Err(EnvironmentError::DimensionMismatch(
                "dimension must be at least 1".into(),
            ));
        }
        let f = if doc.f.is_empty() {
            vec![TrigField::zero(); d]
        } else {
            doc.f
        };
        let spec = EnvironmentSpec {
            dimension: d,
            a: expand_symmetric(d, "a", doc.a)?,
            a_tilde: expand_symmetric(d, "a_tilde", doc.a_tilde)?,
            h: expand_antisymmetric(d, doc.h)?,
            v: doc.v,
            f,
            d: doc.d,
            constants: doc.constants,
        };
        spec.check_shapes()?;
        Ok(spec)
    }
}

impl From<&EnvironmentSpec> for EnvironmentDocument {
    fn from(spec: &EnvironmentSpec) -> Self {
        let d = spec.dimension;
        let symmetric = |m: &[TrigField]| (0..d).all(|i| (0..d).all(|j| m[i * d + j] == m[j * d + i]));
        let pack_upper = |m: &[TrigField]| -> Vec<TrigField> {
            if symmetric(m) {
                (0..d)
                    .flat_map(|i| (i..d).map(move |j| (i, j)))
                    .map(|(i, j)| m[i * d + j].clone())
                    .collect()
            } else {
                m.to_vec()
            }
        };
        let h_packable = (0..d).all(|i| {
            spec.h[i * d + i].is_zero() && (0..d).all(|j| spec.h[i * d + j] == spec.h[j * d + i].scaled(-1.0) || i == j)
        });
        let h = if h_packable {
            (0..d)
                .flat_map(|i| (i + 1..d).map(move |j| (i, j)))
                .map(|(i, j)| spec.h[i * d + j].clone())
                .collect()
        } else {
            spec.h.clone()
        };
        EnvironmentDocument {
            dimension: d,
            a: pack_upper(&spec.a),
            a_tilde: pack_upper(&spec.a_tilde),
            h,
            v: spec.v.clone(),
            f: spec.f.clone(),
            d: spec.d.clone(),
            constants: spec.constants.clone(),
        }
    }
}
