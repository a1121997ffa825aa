use rand::seq::SliceRandom;

use crate::data::LabeledExample;
use crate::error::{invalid, Result};
use crate::rng::RngStream;

use super::net::loss_and_grad_refs;
use super::{ModelParams, OptimizerKind, OptimizerState};

/// Minibatch training from `params` on `examples`. The order is reshuffled
/// every epoch; the last batch may be short. Optimizer state starts fresh.
pub fn local_train(
    params: &ModelParams,
    examples: &[LabeledExample],
    epochs: usize,
    batch_size: usize,
    optimizer: OptimizerKind,
    rng: &mut RngStream,
) -> Result<ModelParams> {
    if epochs < 1 {
        return invalid("local epochs must be at least 1");
    }
    if batch_size < 1 {
        return invalid("batch size must be at least 1");
    }
    if examples.is_empty() {
        return invalid("cannot train on an empty shard");
    }
    optimizer.validate()?;
    let mut state = OptimizerState::new(optimizer);
    let mut params = params.clone();
    let mut order: Vec<&LabeledExample> = examples.iter().collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        for batch in order.chunks(batch_size) {
            let (_, grads) = loss_and_grad_refs(&params, batch)?;
            state.step_in_place(&mut params, &grads)?;
        }
    }
    Ok(params)
}
