use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::NetworkWeights;
use crate::error::{Error, Result};
use crate::raster::{write_pgm, ChannelRole, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterExportMode {
    /// One image per filter: the mean over input channels.
    #[default]
    ChannelMean,
    /// One image per filter and input channel.
    PerChannel,
}

/// Write the first-layer kernels as min-max scaled PGM images into `dir`.
/// Returns the written paths in filter order.
pub fn export_layer1_filters(
    net: &NetworkWeights,
    dir: impl AsRef<Path>,
    mode: FilterExportMode,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let layer = &net.layers[0];
    let k = layer.kernel_size;
    let tap = |o: usize, i: usize| &layer.kernels[layer.kernel_index(o, i, 0, 0)..][..k * k];
    let mut written = Vec::new();
    for o in 0..layer.out_channels {
        let images: Vec<(String, Vec<f64>)> = match mode {
            FilterExportMode::ChannelMean => {
                let mut mean = vec![0.0; k * k];
                for i in 0..layer.in_channels {
                    for (m, w) in mean.iter_mut().zip(tap(o, i)) {
                        *m += w / layer.in_channels as f64;
                    }
                }
                vec![(format!("conv1_filter{:02}.pgm", o + 1), mean)]
            }
            FilterExportMode::PerChannel => (0..layer.in_channels)
                .map(|i| {
                    let name = ChannelRole::NETWORK_ORDER
                        .get(i)
                        .map_or_else(|| format!("in{i}"), |r| r.as_str().to_string());
                    (
                        format!("conv1_filter{:02}_{name}.pgm", o + 1),
                        tap(o, i).to_vec(),
                    )
                })
                .collect(),
        };
        for (name, values) in images {
            let path = dir.join(name);
            write_pgm(&Raster::from_vec(k, k, values)?, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}
