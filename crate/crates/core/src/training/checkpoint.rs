//! `FSC1` checkpoints: JSON header (network shapes, config, counters, log)
//! followed by little-endian f64 values: initial and best validation loss,
//! current weights, best weights, Adam first moments, Adam second moments.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, EpochRecord, TrainConfig, TrainState};
use crate::container;
use crate::error::{Error, Result};
use crate::model::io::{flatten, NetworkHeader};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FSC1";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    network: NetworkHeader,
    config: TrainConfig,
    adam_steps: u64,
    epoch: usize,
    best_epoch: usize,
    stale_epochs: usize,
    log: Vec<EpochRecord>,
}

pub fn encode_checkpoint(state: &TrainState) -> Result<Vec<u8>> {
    let n = state.net.parameter_count();
    if state.best.parameter_count() != n || state.adam.m.len() != n || state.adam.v.len() != n {
        return Err(Error::Shape("checkpoint arrays disagree in length".into()));
    }
    let header = CheckpointHeader {
        network: NetworkHeader::of(&state.net),
        config: state.config,
        adam_steps: state.adam.t,
        epoch: state.epoch,
        best_epoch: state.best_epoch,
        stale_epochs: state.stale_epochs,
        log: state.log.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = container::join(CHECKPOINT_MAGIC, &json, 8 * (2 + 4 * n));
    container::put_f64s(&mut out, &[state.initial_val_loss, state.best_val_loss]);
    container::put_f64s(&mut out, &flatten(&state.net));
    container::put_f64s(&mut out, &flatten(&state.best));
    container::put_f64s(&mut out, &state.adam.m);
    container::put_f64s(&mut out, &state.adam.v);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainState> {
    let (header, payload) = container::split(bytes, CHECKPOINT_MAGIC, "checkpoint")?;
    let h: CheckpointHeader = serde_json::from_slice(header)
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let n = h.network.value_count();
    if payload.len() != 8 * (2 + 4 * n) {
        return Err(Error::Format(format!(
            "checkpoint: header implies {} payload bytes, found {}",
            8 * (2 + 4 * n),
            payload.len()
        )));
    }
    let values = container::get_f64s(payload);
    let (losses, rest) = values.split_at(2);
    let (net_v, rest) = rest.split_at(n);
    let (best_v, rest) = rest.split_at(n);
    let (m, v) = rest.split_at(n);
    let net = h.network.clone().assemble(net_v, "checkpoint")?;
    let best = h.network.assemble(best_v, "checkpoint")?;
    Ok(TrainState {
        config: h.config,
        best,
        net,
        adam: AdamState {
            m: m.to_vec(),
            v: v.to_vec(),
            t: h.adam_steps,
        },
        epoch: h.epoch,
        initial_val_loss: losses[0],
        best_val_loss: losses[1],
        best_epoch: h.best_epoch,
        stale_epochs: h.stale_epochs,
        log: h.log,
    })
}

pub fn save_checkpoint(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(state)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
