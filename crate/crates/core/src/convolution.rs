//! Dense convolution matrices over a multishape.
//!
//! `Conv[m, n] = Int[n] · χ(x_m − x_n)` with Cartesian displacements, so
//! `Conv · ρ` approximates `∫ χ(x − x') ρ(x') dx'` at every node.

use nalgebra::DMatrix;
use rayon::prelude::*;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::assembly::MultiShape;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelForm {
    /// `χ(d1, d2)`.
    Displacement,
    /// `χ(|d|)`.
    Radial,
}

type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Convolution kernel.
#[derive(Clone)]
pub struct Kernel {
    form: KernelForm,
    f: KernelFn,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel").field("form", &self.form).finish_non_exhaustive()
    }
}

impl Kernel {
    pub fn displacement(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Kernel {
            form: KernelForm::Displacement,
            f: Arc::new(f),
        }
    }

    /// Kernel of the distance only; `f` receives `|d|`.
    pub fn radial(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Kernel {
            form: KernelForm::Radial,
            f: Arc::new(move |r, _| f(r)),
        }
    }

    pub fn form(&self) -> KernelForm {
        self.form
    }

    pub fn eval(&self, d1: f64, d2: f64) -> f64 {
        match self.form {
            KernelForm::Displacement => (self.f)(d1, d2),
            KernelForm::Radial => (self.f)(d1.hypot(d2), 0.0),
        }
    }
}

/// `M × M` convolution matrix.
pub fn convolution_matrix(ms: &MultiShape, kernel: &Kernel) -> Result<DMatrix<f64>> {
    let m = ms.m();
    let pts = &ms.pts_cart;
    let int = &ms.ops.int;
    let mut out = DMatrix::zeros(m, m);
    // column-major storage: chunk n is column n
    out.as_mut_slice()
        .par_chunks_mut(m)
        .enumerate()
        .try_for_each(|(n, col)| {
            let xn = pts[n];
            for (r, v) in col.iter_mut().enumerate() {
                let d = [pts[r][0] - xn[0], pts[r][1] - xn[1]];
                let k = kernel.eval(d[0], d[1]);
                if !k.is_finite() {
                    return Err(Error::NumericFailure(format!(
                        "kernel is not finite at displacement {d:?}"
                    )));
                }
                *v = int[n] * k;
            }
            Ok(())
        })?;
    Ok(out)
}

/// Stacked `[Conv_x; Conv_y]` (`2M × M`) for the Cartesian components of a
/// kernel gradient `(∂χ/∂d1, ∂χ/∂d2)`. Rows are Cartesian components; see
/// [`MultiShape::to_local_components`] to rotate results into local frames.
pub fn convolution_matrix_vector_field(
    ms: &MultiShape,
    grad_kernel: (&Kernel, &Kernel),
) -> Result<DMatrix<f64>> {
    let m = ms.m();
    let cx = convolution_matrix(ms, grad_kernel.0)?;
    let cy = convolution_matrix(ms, grad_kernel.1)?;
    let mut out = DMatrix::zeros(2 * m, m);
    out.rows_mut(0, m).copy_from(&cx);
    out.rows_mut(m, m).copy_from(&cy);
    Ok(out)
}

/// Named store of convolution matrices.
///
/// With `reuse` set, a matrix already stored under the key is returned
/// without recomputation; otherwise it is rebuilt and replaced.
#[derive(Debug, Default)]
pub struct ConvolutionCache {
    store: HashMap<String, Arc<DMatrix<f64>>>,
}

impl ConvolutionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_build(
        &mut self,
        key: &str,
        ms: &MultiShape,
        kernel: &Kernel,
        reuse: bool,
    ) -> Result<Arc<DMatrix<f64>>> {
        if reuse {
            if let Some(m) = self.store.get(key) {
                return Ok(Arc::clone(m));
            }
        }
        let m = Arc::new(convolution_matrix(ms, kernel)?);
        self.store.insert(key.to_string(), Arc::clone(&m));
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }
}
