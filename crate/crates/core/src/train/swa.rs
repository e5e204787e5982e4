use crate::error::Result;
use crate::network::Network;
use crate::tensor::Float;

/// First averaged epoch (1-based) for a run of `total_epochs`: `ceil(0.75·total)`.
pub fn swa_start_epoch(total_epochs: usize) -> usize {
    (3 * total_epochs).div_ceil(4).max(1)
}

/// Running arithmetic mean of weight snapshots.
#[derive(Debug, Clone)]
pub struct SwaState<T = f32> {
    averaged: Option<Network<T>>,
    n_models: usize,
    start_epoch: usize,
}

impl<T: Float> SwaState<T> {
    pub fn new(start_epoch: usize) -> Self {
        SwaState { averaged: None, n_models: 0, start_epoch }
    }

    pub fn start_epoch(&self) -> usize {
        self.start_epoch
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    pub fn averaged(&self) -> Option<&Network<T>> {
        self.averaged.as_ref()
    }

    pub fn into_averaged(self) -> Option<Network<T>> {
        self.averaged
    }

    /// Folds `net` into the average when `epoch ≥ start_epoch`; returns
    /// whether a snapshot was taken.
    pub fn update(&mut self, net: &Network<T>, epoch: usize) -> Result<bool> {
        if epoch < self.start_epoch {
            return Ok(false);
        }
        self.snapshot(net)?;
        Ok(true)
    }

    /// Folds `net` into the average regardless of epoch.
    ///
    /// Uses `avg + (w − avg)/(n+1)`, which equals `(avg·n + w)/(n+1)` and
    /// leaves the average bit-exact when every snapshot is identical.
    pub fn snapshot(&mut self, net: &Network<T>) -> Result<()> {
        match &mut self.averaged {
            None => self.averaged = Some(net.clone()),
            Some(avg) => {
                if avg.specs() != net.specs() {
                    return Err(crate::Error::ShapeMismatch("SWA snapshot has different layer specs".into()));
                }
                let k = T::from_usize(self.n_models + 1);
                for (a, w) in avg.params_mut().zip(net.params()) {
                    for (ai, &wi) in a.data_mut().iter_mut().zip(w.data()) {
                        *ai += (wi - *ai) / k;
                    }
                }
            }
        }
        self.n_models += 1;
        Ok(())
    }
}
