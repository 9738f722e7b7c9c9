//! Encrypted evaluation of a server segment and the parameters it needs.

use duetlite_ckks::tensor::{fc_forward, matvec_rotation_steps, square_activate};
use duetlite_ckks::{build_context, CipherVector, CkksContext, EvaluationKeys, Real, Result as CkksResult};

use crate::error::{DuetError, Result};
use crate::model::{chain_with_scale, required_depth, Layer, LayerShape, LayerSpec};

/// Smallest power-of-two degree whose slots hold every dense layer of the
/// segment after padding.
pub fn min_poly_degree(shapes: &[LayerShape]) -> usize {
    let widest = shapes
        .iter()
        .filter_map(|s| match *s {
            LayerShape::Dense { rows, cols } => Some(rows.max(cols).next_power_of_two()),
            _ => None,
        })
        .max()
        .unwrap_or(1);
    (2 * widest).max(8)
}

/// Context for a segment: one chain prime per level plus the two outer ones.
pub fn segment_context(shapes: &[LayerShape], poly_degree: usize, scale_bits: u32) -> Result<CkksContext> {
    let depth = required_depth(shapes)?;
    let need = min_poly_degree(shapes);
    if poly_degree < need {
        return Err(DuetError::Config(format!(
            "poly degree {poly_degree} is too small for this segment (needs at least {need})"
        )));
    }
    build_context(poly_degree, &chain_with_scale(depth, scale_bits), scale_bits)
        .map_err(|e| DuetError::Config(format!("CKKS parameters: {e}")))
}

/// Union of the Galois steps used by every dense layer, sorted.
pub fn rotation_steps(shapes: &[LayerShape], slots: usize) -> Result<Vec<i64>> {
    let mut steps = Vec::new();
    for s in shapes {
        if let LayerShape::Dense { rows, cols } = *s {
            steps.extend(
                matvec_rotation_steps(rows, cols, slots).map_err(|e| DuetError::Config(format!("rotation plan: {e}")))?,
            );
        }
    }
    steps.sort_unstable();
    steps.dedup();
    Ok(steps)
}

/// One server layer applied to an encrypted vector.
pub fn apply_layer<T: Real>(
    ctx: &CkksContext,
    layer: &LayerSpec<T>,
    cv: &CipherVector,
    keys: &EvaluationKeys,
) -> CkksResult<CipherVector> {
    match &layer.layer {
        Layer::Dense(d) => fc_forward(ctx, cv, &d.weights, &d.bias, keys),
        Layer::Square => square_activate(ctx, cv, keys),
        Layer::Conv(_) | Layer::Flatten => Err(duetlite_ckks::CkksError::State(format!(
            "{} has no encrypted form",
            layer.name
        ))),
    }
}

/// Runs `layers` under encryption, reporting every intermediate result.
pub fn encrypted_forward<T: Real>(
    ctx: &CkksContext,
    layers: &[LayerSpec<T>],
    input: CipherVector,
    keys: &EvaluationKeys,
    mut observe: impl FnMut(&LayerSpec<T>, &CipherVector),
) -> CkksResult<CipherVector> {
    layers.iter().try_fold(input, |cv, l| {
        let out = apply_layer(ctx, l, &cv, keys)?;
        observe(l, &out);
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_for_both_segments() {
        let fc2 = [LayerShape::Dense { rows: 10, cols: 128 }];
        assert_eq!(rotation_steps(&fc2, 4096).unwrap(), vec![-128, 1, 16]);
        let tail = [
            LayerShape::Dense { rows: 128, cols: 392 },
            LayerShape::Square,
            LayerShape::Dense { rows: 10, cols: 128 },
        ];
        assert_eq!(rotation_steps(&tail, 4096).unwrap(), vec![-512, -128, 1, 16, 32]);
        assert_eq!(min_poly_degree(&tail), 1024);
    }
}
