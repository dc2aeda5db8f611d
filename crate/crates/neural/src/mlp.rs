//! Affine + activation stacks over the tape.

use rand::Rng;

use crate::error::Result;
use crate::params::ParamStore;
use crate::tape::{Tape, ValueId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

/// Create `{prefix}.w{i}` / `{prefix}.b{i}` for each affine layer of the
/// stack described by `sizes` (input first). Biases start at zero.
pub fn init_mlp<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    sizes: &[usize],
    rng: &mut R,
) -> Result<()> {
    for i in 0..sizes.len().saturating_sub(1) {
        store.init_matrix(&format!("{prefix}.w{i}"), sizes[i + 1], sizes[i], rng)?;
        store.init_zero_vector(&format!("{prefix}.b{i}"), sizes[i + 1])?;
    }
    Ok(())
}

/// Standard affine stack: the activation applies after every layer except
/// the last, which stays linear.
pub fn mlp_forward(
    tape: &mut Tape,
    store: &ParamStore,
    prefix: &str,
    x: ValueId,
    sizes: &[usize],
    activation: Activation,
) -> Result<ValueId> {
    let layers = sizes.len().saturating_sub(1);
    let mut h = x;
    for i in 0..layers {
        let wx = tape.matvec(store, &format!("{prefix}.w{i}"), h)?;
        let b = tape.param(store, &format!("{prefix}.b{i}"))?;
        h = tape.add(wx, b)?;
        if i + 1 < layers {
            h = match activation {
                Activation::Relu => tape.relu(h)?,
                Activation::Sigmoid => tape.sigmoid(h)?,
                Activation::Linear => h,
            };
        }
    }
    Ok(h)
}

/// Same stack with frozen weights taken from another store (no gradients to
/// those weights; gradients still flow through to the input).
pub fn mlp_forward_frozen(
    tape: &mut Tape,
    frozen: &ParamStore,
    prefix: &str,
    x: ValueId,
    sizes: &[usize],
    activation: Activation,
) -> Result<ValueId> {
    let layers = sizes.len().saturating_sub(1);
    let mut h = x;
    for i in 0..layers {
        let w = frozen.get(&format!("{prefix}.w{i}"))?;
        let b = frozen.get(&format!("{prefix}.b{i}"))?;
        let wx = tape.matvec_frozen(w, h)?;
        let bc = tape.constant(b.data().to_vec())?;
        h = tape.add(wx, bc)?;
        if i + 1 < layers {
            h = match activation {
                Activation::Relu => tape.relu(h)?,
                Activation::Sigmoid => tape.sigmoid(h)?,
                Activation::Linear => h,
            };
        }
    }
    Ok(h)
}
