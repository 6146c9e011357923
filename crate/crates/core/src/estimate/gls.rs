use crate::bias::intercept_precision;
use crate::design::DesignLayout;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::simulate::CellTable;
use crate::variance::VarianceComponents;

use super::{assemble, require_identifiable, FitResult, Method, ModelKind};

/// Fixed-effect estimates `(β̂, τ̂)` and their covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GlsEstimate<S> {
    pub coef: Vec<S>,
    pub covariance: Matrix<S>,
}

/// Generalized least squares on cluster-period means with known variance
/// components, `Σ_i = σ²_α J + diag(σ²_ε/n_ij)`. `means[i][j]` and
/// `sizes[i][j]` are indexed by cluster then period.
pub fn gls<S: Scalar>(
    layout: &DesignLayout,
    model: ModelKind,
    vc: &VarianceComponents<S>,
    sizes: &[Vec<usize>],
    means: &[Vec<S>],
) -> Result<GlsEstimate<S>> {
    if model == ModelKind::C {
        return Err(Error::InvalidConfig(
            "known-variance GLS covers models A and B; fit model C by REML".into(),
        ));
    }
    vc.validate()?;
    require_identifiable(layout, model)?;
    let t = layout.periods();
    if sizes.len() != layout.clusters() || means.len() != layout.clusters() {
        return Err(Error::DimensionMismatch {
            expected: layout.clusters(),
            got: means.len().min(sizes.len()),
            context: "clusters in the cell table",
        });
    }
    let mats = layout.matrices::<S>();
    let mut lhs: Option<Matrix<S>> = None;
    let mut rhs: Option<Matrix<S>> = None;
    for ((tm, n_i), y_i) in mats.iter().zip(sizes).zip(means) {
        if n_i.len() != t || y_i.len() != t || n_i.contains(&0) {
            return Err(Error::InvalidConfig("each cluster needs T nonempty cells".into()));
        }
        let trt = if model == ModelKind::A { &tm.x } else { &tm.z };
        let d = Matrix::<S>::identity(t).hstack(trt);
        let diag: Vec<S> = n_i
            .iter()
            .map(|&n| vc.residual.clone() / S::from_int(n as i64))
            .collect();
        let dv = d.t_matmul(&intercept_precision(&vc.cluster, &diag));
        let l = dv.matmul(&d);
        let r = dv.matmul(&Matrix::column_vector(y_i));
        lhs = Some(match lhs {
            Some(acc) => acc.add(&l),
            None => l,
        });
        rhs = Some(match rhs {
            Some(acc) => acc.add(&r),
            None => r,
        });
    }
    let (lhs, rhs) = (lhs.expect("layout has clusters"), rhs.expect("layout has clusters"));
    let covariance = lhs
        .inverse()
        .map_err(|e| Error::singular(format!("GLS normal equations for model {model}"), e))?;
    let coef = covariance.matmul(&rhs).column(0);
    Ok(GlsEstimate { coef, covariance })
}

/// Known-variance GLS fit of model A or B to a cell table.
pub fn fit_gls(table: &CellTable, layout: &DesignLayout, model: ModelKind, vc: &VarianceComponents) -> Result<FitResult> {
    let sizes = table.sizes();
    let means: Vec<Vec<f64>> = (0..table.clusters)
        .map(|i| (0..table.periods).map(|j| table.cell(i, j).mean).collect())
        .collect();
    let est = gls(layout, model, vc, &sizes, &means)?;
    let mut vc = vc.clone();
    vc.random_effects.clear();
    Ok(assemble(
        model,
        Method::Gls,
        layout.periods(),
        layout.interventions(),
        &est.coef,
        est.covariance.to_rows(),
        vc,
        f64::NAN,
    ))
}
