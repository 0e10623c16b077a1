//! Online phase: effective matrices assembled from model predictions, and
//! their comparison with the reference PG-LOD solution.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coeff::Coefficient;
use crate::error::{Error, Result};
use crate::fem::{assemble_mass, mass_norm};
use crate::linalg::{spectral_norm, CsrMatrix, LinearOperator};
use crate::lod::{
    coarse_l2_error, pg_lod_solve, EffectiveMatrix, FineReference, LocalEffectiveMatrix, LodContext, Provenance,
};
use crate::mesh::CartesianMesh;
use crate::nn::MlpParameters;

/// Differences up to this dimension are formed as dense matrices for the
/// spectral norm; larger ones are applied through two sparse products.
pub const DENSE_DIFFERENCE_LIMIT: usize = 1000;

/// Maps restricted coefficients to flattened local effective matrices.
pub trait LocalMatrixModel {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;

    /// Predictions for a row-major batch of inputs; `elements[k]` is the
    /// coarse element whose patch produced row `k`.
    fn predict(&self, inputs: &[f64], elements: &[usize]) -> Result<Vec<f64>>;
}

impl LocalMatrixModel for MlpParameters {
    fn input_len(&self) -> usize {
        self.architecture().input_len()
    }

    fn output_len(&self) -> usize {
        self.architecture().output_len()
    }

    fn predict(&self, inputs: &[f64], elements: &[usize]) -> Result<Vec<f64>> {
        Ok(self.forward(inputs, elements.len()))
    }
}

/// Exact model: solves the corrector problems for every input.
pub struct ReferenceModel<'a> {
    ctx: &'a LodContext,
}

impl<'a> ReferenceModel<'a> {
    pub fn new(ctx: &'a LodContext) -> Self {
        Self { ctx }
    }
}

impl LocalMatrixModel for ReferenceModel<'_> {
    fn input_len(&self) -> usize {
        self.ctx.input_len()
    }

    fn output_len(&self) -> usize {
        self.ctx.label_len()
    }

    fn predict(&self, inputs: &[f64], elements: &[usize]) -> Result<Vec<f64>> {
        let r = self.input_len();
        let mut out = Vec::with_capacity(elements.len() * self.output_len());
        for (k, &e) in elements.iter().enumerate() {
            let patch = self.ctx.patch(e)?;
            let local = self.ctx.local_matrix_from_values(&patch, &inputs[k * r..(k + 1) * r])?;
            out.extend(local.flatten());
        }
        Ok(out)
    }
}

/// Network-assembled effective matrix: all restricted coefficients go
/// through one batched prediction, rows and columns without a global
/// counterpart are zeroed, and the blocks are scattered in element order.
pub fn assemble_network_matrix<M: LocalMatrixModel + ?Sized>(
    ctx: &LodContext,
    coeff: &Coefficient,
    model: &M,
) -> Result<EffectiveMatrix> {
    if model.input_len() != ctx.input_len() || model.output_len() != ctx.label_len() {
        return Err(Error::ArchitectureMismatch {
            expected: vec![ctx.input_len(), ctx.label_len()],
            found: vec![model.input_len(), model.output_len()],
        });
    }
    let inputs: Vec<f64> = ctx.restrictions(coeff)?.concat();
    let elements: Vec<usize> = (0..ctx.num_elements()).collect();
    let predictions = model.predict(&inputs, &elements)?;
    let p = ctx.label_len();
    if predictions.len() != elements.len() * p {
        return Err(Error::config(format!(
            "model returned {} values for {} elements of label length {p}",
            predictions.len(),
            elements.len()
        )));
    }
    let locals = elements
        .iter()
        .map(|&e| {
            let mut local = LocalEffectiveMatrix::unflatten(&predictions[e * p..(e + 1) * p])?;
            local.mask(&ctx.patch(e)?);
            Ok(local)
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.assemble(&locals, Provenance::Network)
}

/// Mesh line of a cross section: `x1 = position` or `x2 = position`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X1,
    X2,
}

/// Nodal values of a coarse function along one mesh line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Position of the line after snapping to the mesh.
    pub position: f64,
    /// Coordinate along the line.
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

/// Values of the interior nodal vector `u` along the mesh line nearest to
/// `position`, including the zero boundary values at both ends.
pub fn cross_section(mesh: &CartesianMesh, u: &[f64], axis: Axis, position: f64) -> Result<Trace> {
    if u.len() != mesh.num_interior_nodes() {
        return Err(Error::config(format!(
            "nodal vector has length {}, mesh has {} interior nodes",
            u.len(),
            mesh.num_interior_nodes()
        )));
    }
    if !(0.0..=1.0).contains(&position) {
        return Err(Error::config(format!(
            "cross-section position {position} outside [0, 1]"
        )));
    }
    let n = mesh.n();
    let line = (position * n as f64).round() as usize;
    let snapped = line as f64 * mesh.h();
    if (snapped - position).abs() > 1e-12 {
        log::warn!("cross section at {position} is off the mesh, using the line at {snapped}");
    }
    let mut coords = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let (ix, iy) = match axis {
            Axis::X1 => (line, k),
            Axis::X2 => (k, line),
        };
        coords.push(k as f64 * mesh.h());
        values.push(mesh.interior_index(ix as i64, iy as i64).map_or(0.0, |g| u[g]));
    }
    Ok(Trace {
        position: snapped,
        coords,
        values,
    })
}

/// Reference and network traces along one line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub axis: Axis,
    pub position: f64,
    pub coords: Vec<f64>,
    pub reference: Vec<f64>,
    pub network: Vec<f64>,
}

impl CrossSection {
    /// CSV with columns `x, u_ref, u_nn`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,u_ref,u_nn\n");
        for ((x, r), n) in self.coords.iter().zip(&self.reference).zip(&self.network) {
            writeln!(s, "{x},{r},{n}").unwrap();
        }
        s
    }
}

/// Errors of both coarse solutions against a fine-scale solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineComparison {
    pub reference_error: f64,
    pub network_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub name: String,
    pub family: String,
    pub coarse_level: u32,
    pub eps_level: u32,
    pub layers: usize,
    /// `|u_h - u_nn|_L2` on the coarse mesh.
    pub l2_error: f64,
    /// `l2_error / |u_h|_L2`.
    pub relative_l2_error: f64,
    pub reference_norm: f64,
    /// `|S_A - S_nn|_2` of the raw matrices.
    pub spectral_difference: f64,
    pub spectral_converged: bool,
    /// Relative L2 errors against the fine reference, if requested.
    pub fine: Option<FineComparison>,
    pub cross_sections: Vec<CrossSection>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Debug)]
pub struct EvaluateOptions {
    pub name: String,
    pub family: String,
    pub fine_reference: bool,
    pub spectral_tol: f64,
    pub spectral_max_iter: usize,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            name: "evaluation".into(),
            family: "custom".into(),
            fine_reference: false,
            spectral_tol: 1e-10,
            spectral_max_iter: 20_000,
        }
    }
}

struct Difference<'a> {
    a: &'a CsrMatrix,
    b: &'a CsrMatrix,
}

impl LinearOperator for Difference<'_> {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }
    fn ncols(&self) -> usize {
        self.a.ncols()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.a.matvec(x);
        y.iter_mut().zip(self.b.matvec(x)).for_each(|(u, v)| *u -= v);
        y
    }
    fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.a.matvec_transpose(x);
        y.iter_mut().zip(self.b.matvec_transpose(x)).for_each(|(u, v)| *u -= v);
        y
    }
}

/// Spectral norm of `a - b`.
pub fn spectral_difference(a: &CsrMatrix, b: &CsrMatrix, tol: f64, max_iter: usize) -> Result<(f64, bool)> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::config("matrices of different shapes"));
    }
    let est = if a.nrows() <= DENSE_DIFFERENCE_LIMIT {
        spectral_norm(&a.to_dense().sub(&b.to_dense()), tol, max_iter)
    } else {
        spectral_norm(&Difference { a, b }, tol, max_iter)
    };
    Ok((est.value, est.converged))
}

/// Compares the reference PG-LOD solution with the one from `model`.
pub fn evaluate<M, F>(
    ctx: &LodContext,
    coeff: &Coefficient,
    f: F,
    model: &M,
    opts: &EvaluateOptions,
) -> Result<EvaluationReport>
where
    M: LocalMatrixModel + ?Sized,
    F: Fn(f64, f64) -> f64,
{
    let reference = ctx.assemble_effective(coeff)?;
    let network = assemble_network_matrix(ctx, coeff, model)?;
    let load = ctx.load_vector(&f)?;
    let u = pg_lod_solve(&reference, &load)?;
    let u_nn = pg_lod_solve(&network, &load)?;

    let mesh = ctx.coarse_mesh();
    let mass = assemble_mass(mesh);
    let diff: Vec<f64> = u.iter().zip(&u_nn).map(|(a, b)| a - b).collect();
    let l2_error = mass_norm(&mass, &diff);
    let reference_norm = mass_norm(&mass, &u);
    let relative_l2_error = if reference_norm > 0.0 {
        l2_error / reference_norm
    } else {
        l2_error
    };
    let (spectral, converged) = spectral_difference(
        &reference.matrix,
        &network.matrix,
        opts.spectral_tol,
        opts.spectral_max_iter,
    )?;

    let fine = if opts.fine_reference {
        let fine_ref = FineReference::new(coeff, &f)?;
        Some(FineComparison {
            reference_error: coarse_l2_error(&fine_ref, mesh, &u)?,
            network_error: coarse_l2_error(&fine_ref, mesh, &u_nn)?,
        })
    } else {
        None
    };

    let mut cross_sections = Vec::new();
    for axis in [Axis::X1, Axis::X2] {
        let r = cross_section(mesh, &u, axis, 0.5)?;
        let n = cross_section(mesh, &u_nn, axis, 0.5)?;
        cross_sections.push(CrossSection {
            axis,
            position: r.position,
            coords: r.coords,
            reference: r.values,
            network: n.values,
        });
    }

    Ok(EvaluationReport {
        name: opts.name.clone(),
        family: opts.family.clone(),
        coarse_level: mesh.level(),
        eps_level: ctx.eps_level(),
        layers: ctx.layers(),
        l2_error,
        relative_l2_error,
        reference_norm,
        spectral_difference: spectral,
        spectral_converged: converged,
        fine,
        cross_sections,
    })
}

/// Means and maxima of the errors of one family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyAggregate {
    pub family: String,
    pub count: usize,
    pub mean_relative_l2_error: f64,
    pub max_relative_l2_error: f64,
    pub mean_spectral_difference: f64,
}

pub fn aggregate_by_family(reports: &[EvaluationReport]) -> Vec<FamilyAggregate> {
    let mut groups: BTreeMap<&str, Vec<&EvaluationReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(&r.family).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(family, rs)| {
            let n = rs.len() as f64;
            FamilyAggregate {
                family: family.to_string(),
                count: rs.len(),
                mean_relative_l2_error: rs.iter().map(|r| r.relative_l2_error).sum::<f64>() / n,
                max_relative_l2_error: rs.iter().map(|r| r.relative_l2_error).fold(0.0, f64::max),
                mean_spectral_difference: rs.iter().map(|r| r.spectral_difference).sum::<f64>() / n,
            }
        })
        .collect()
}
