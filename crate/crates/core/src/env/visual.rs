//! Pixel rendering of the tabular models: each node is a pixel that turns
//! white when active, interventions light the red channel, the image is
//! blurred and then mixed with the previously emitted frame.

use serde::{Deserialize, Serialize};

use super::frame::{gaussian_blur, temporal_mix, Frame};
use super::tabular::{ExogenousDraw, Setting, TabularEnv, TabularParams, TabularState};
use super::{Environment, TraceStep, Transition};
use crate::error::EnvError;
use crate::GymRng;

pub const VISUAL_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualParams {
    pub node_coords: [(usize, usize); 3],
    pub blur_sigma: f64,
    /// Weight of the previous frame in the temporal mix.
    pub mix: f64,
}

impl Default for VisualParams {
    fn default() -> Self {
        Self {
            node_coords: [(1, 1), (4, 4), (6, 1)],
            blur_sigma: 1.0,
            mix: 0.5,
        }
    }
}

impl VisualParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        let c = &self.node_coords;
        if c.iter().any(|&(r, col)| r >= VISUAL_SIZE || col >= VISUAL_SIZE) {
            return Err(EnvError::InvalidParams {
                field: "node_coords",
                reason: "coordinates out of bounds".into(),
            });
        }
        if c[0] == c[1] || c[0] == c[2] || c[1] == c[2] {
            return Err(EnvError::InvalidParams {
                field: "node_coords",
                reason: "coordinates must be distinct".into(),
            });
        }
        if !(self.blur_sigma > 0.0 && self.blur_sigma.is_finite()) {
            return Err(EnvError::InvalidParams {
                field: "blur_sigma",
                reason: format!("{} is not positive", self.blur_sigma),
            });
        }
        super::check_prob("mix", self.mix)
    }
}

/// Sharp (unblurred) render of one step.
pub fn render_sharp(
    state: &TabularState,
    exo: &ExogenousDraw,
    setting: Setting,
    go_cue: bool,
    params: &VisualParams,
) -> Frame {
    let mut frame = Frame::black(VISUAL_SIZE, VISUAL_SIZE);
    for (i, &(r, c)) in params.node_coords.iter().enumerate() {
        if state.s[i] {
            frame.set_pixel(r, c, [1.0, 1.0, 1.0]);
        }
    }
    if setting.observes_z() {
        for k in 0..2 {
            if exo.z[k] {
                let (r, c) = params.node_coords[k + 1];
                frame.set(r, c, 0, 1.0);
            }
        }
    }
    if go_cue {
        frame.set(0, 0, 1, 1.0);
    }
    frame
}

#[derive(Debug, Clone)]
pub struct VisualEnv {
    inner: TabularEnv,
    params: VisualParams,
    last: Frame,
}

impl VisualEnv {
    pub fn new(
        params: TabularParams,
        visual: VisualParams,
        setting: Setting,
    ) -> Result<Self, EnvError> {
        visual.validate()?;
        Ok(Self {
            inner: TabularEnv::new(params, setting)?,
            params: visual,
            last: Frame::black(VISUAL_SIZE, VISUAL_SIZE),
        })
    }

    pub fn inner(&self) -> &TabularEnv {
        &self.inner
    }

    pub fn frame(&self) -> &Frame {
        &self.last
    }

    fn emit(&mut self) -> Vec<f64> {
        let go = self.inner.setting() == Setting::OnPolicy
            && self.inner.state().t == self.inner.response_step();
        let sharp = render_sharp(
            self.inner.state(),
            self.inner.exogenous(),
            self.inner.setting(),
            go,
            &self.params,
        );
        let blurred = gaussian_blur(&sharp, self.params.blur_sigma);
        self.last = temporal_mix(&self.last, &blurred, self.params.mix);
        self.last.as_slice().to_vec()
    }

    pub fn reset_with_model(&mut self, rng: &mut GymRng, model: super::ModelKind) -> Vec<f64> {
        self.inner.reset_with_model(rng, model);
        self.last = Frame::black(VISUAL_SIZE, VISUAL_SIZE);
        self.emit()
    }
}

impl Environment for VisualEnv {
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    fn obs_dim(&self) -> usize {
        VISUAL_SIZE * VISUAL_SIZE * 3
    }

    fn max_episode_len(&self) -> usize {
        self.inner.max_episode_len()
    }

    fn reset(&mut self, rng: &mut GymRng) -> Vec<f64> {
        self.inner.reset_typed(rng);
        self.last = Frame::black(VISUAL_SIZE, VISUAL_SIZE);
        self.emit()
    }

    fn step(&mut self, action: usize, rng: &mut GymRng) -> Result<Transition, EnvError> {
        let tr = self.inner.step(action, rng)?;
        let obs = if tr.done {
            self.last.as_slice().to_vec()
        } else {
            self.emit()
        };
        Ok(Transition {
            obs,
            reward: tr.reward,
            done: tr.done,
        })
    }

    fn trace(&self) -> TraceStep {
        TraceStep {
            frame: Some(self.last.clone()),
            ..self.inner.trace()
        }
    }
}
