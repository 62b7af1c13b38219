//! Random circular shifting of 3D tensors along one axis, with optional
//! constant fill of the wrapped slab.
//!
//! A draw picks the axis uniformly from `{0, 1, 2}`, the direction uniformly
//! from `{-1, +1}` and the shift count uniformly from `0..=floor(p * len)`.
//! The result is the circular roll of the input; with padding enabled, the
//! slab of elements that wrapped around (leading face for `+1`, trailing face
//! for `-1`) is overwritten with the padding value.
//!
//! Every draw is returned as a [`ShiftEvent`] so it can be logged and replayed
//! with [`apply_shift`].

use ndarray::{Array3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Shift3DConfig {
    /// Maximum shift as a fraction of the axis length, in `[0, 1]`.
    pub max_shift_fraction: f64,
    pub padding: bool,
    pub padding_value: f32,
    /// Probability that [`Shift3D::maybe_apply`] shifts at all.
    pub apply_probability: f64,
}

impl Default for Shift3DConfig {
    fn default() -> Self {
        Self {
            max_shift_fraction: 0.2,
            padding: false,
            padding_value: 0.0,
            apply_probability: 1.0,
        }
    }
}

impl Shift3DConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_shift_fraction) {
            return Err(Error::invalid(format!(
                "max shift fraction must lie in [0, 1], got {}",
                self.max_shift_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(Error::invalid(format!(
                "apply probability must lie in [0, 1], got {}",
                self.apply_probability
            )));
        }
        Ok(())
    }

    /// Largest admissible shift for an axis of length `len`.
    pub fn max_shift(&self, len: usize) -> usize {
        (self.max_shift_fraction * len as f64).floor() as usize
    }
}

/// One recorded shift: roll by `direction * shift` along `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftEvent {
    pub axis: usize,
    pub direction: i8,
    pub shift: usize,
}

impl ShiftEvent {
    /// The event undoing this one (ignoring padding).
    pub fn reverse(&self) -> Self {
        Self {
            direction: -self.direction,
            ..*self
        }
    }
}

pub fn sample_event<R: Rng + ?Sized>(shape: [usize; 3], cfg: &Shift3DConfig, rng: &mut R) -> ShiftEvent {
    let axis = rng.random_range(0..3usize);
    let direction = if rng.random_range(0..=1u8) > 0 { -1 } else { 1 };
    let shift = rng.random_range(0..=cfg.max_shift(shape[axis]));
    ShiftEvent {
        axis,
        direction,
        shift,
    }
}

/// Draws a shift event and applies it.
pub fn shift3d<T: Clone, R: Rng + ?Sized>(
    t: &Array3<T>,
    cfg: &Shift3DConfig,
    pad: T,
    rng: &mut R,
) -> Result<(Array3<T>, ShiftEvent)> {
    cfg.validate()?;
    if t.is_empty() {
        return Err(Error::invalid("cannot shift an empty tensor"));
    }
    let shape = [t.shape()[0], t.shape()[1], t.shape()[2]];
    let event = sample_event(shape, cfg, rng);
    let out = roll_and_pad(t, &event, cfg.padding.then_some(pad));
    Ok((out, event))
}

/// Deterministic replay of a recorded event.
pub fn apply_shift<T: Clone>(t: &Array3<T>, event: &ShiftEvent, cfg: &Shift3DConfig, pad: T) -> Result<Array3<T>> {
    cfg.validate()?;
    if event.axis > 2 {
        return Err(Error::invalid(format!("shift axis {} out of range", event.axis)));
    }
    if event.direction != 1 && event.direction != -1 {
        return Err(Error::invalid(format!("shift direction must be +-1, got {}", event.direction)));
    }
    let len = t.shape()[event.axis];
    let max = cfg.max_shift(len);
    if event.shift > max {
        return Err(Error::invalid(format!(
            "shift {} exceeds the admissible maximum {max} for axis {} of length {len}",
            event.shift, event.axis
        )));
    }
    Ok(roll_and_pad(t, event, cfg.padding.then_some(pad)))
}

fn roll_and_pad<T: Clone>(t: &Array3<T>, event: &ShiftEvent, pad: Option<T>) -> Array3<T> {
    let len = t.shape()[event.axis];
    let s = event.shift % len.max(1);
    let signed = if event.direction > 0 { s } else { (len - s) % len };
    // out[i] = t[(i - k) mod len]
    let mut out = Array3::from_shape_fn(t.raw_dim(), |(z, y, x)| {
        let mut idx = [z, y, x];
        idx[event.axis] = (idx[event.axis] + len - signed) % len;
        t[idx].clone()
    });
    if let Some(value) = pad {
        // the whole axis wraps when shift == len
        let width = event.shift.min(len);
        let range = if event.direction > 0 { 0..width } else { len - width..len };
        for i in range {
            out.index_axis_mut(Axis(event.axis), i).fill(value.clone());
        }
    }
    out
}

/// Shift3D with an application probability, for use in a training input pipeline.
#[derive(Debug, Clone, Copy)]
pub struct Shift3D {
    pub cfg: Shift3DConfig,
}

impl Shift3D {
    pub fn new(cfg: Shift3DConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    /// Returns `None` (and the input unchanged) when the application draw fails.
    pub fn maybe_apply<R: Rng + ?Sized>(
        &self,
        t: &Array3<f32>,
        rng: &mut R,
    ) -> Result<(Array3<f32>, Option<ShiftEvent>)> {
        if self.cfg.apply_probability < 1.0 && rng.random::<f64>() >= self.cfg.apply_probability {
            return Ok((t.clone(), None));
        }
        let (out, e) = shift3d(t, &self.cfg, self.cfg.padding_value, rng)?;
        Ok((out, Some(e)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(axis: usize) -> Array3<i32> {
        let mut shape = [1usize; 3];
        shape[axis] = 4;
        Array3::from_shape_fn((shape[0], shape[1], shape[2]), |(z, y, x)| (z + y + x) as i32 + 1)
    }

    fn along(t: &Array3<i32>) -> Vec<i32> {
        t.iter().copied().collect()
    }

    #[test]
    fn zero_fraction_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = Array3::from_shape_fn((3, 4, 5), |(z, y, x)| (z * 20 + y * 5 + x) as i32);
        for padding in [false, true] {
            let cfg = Shift3DConfig {
                max_shift_fraction: 0.0,
                padding,
                ..Default::default()
            };
            let (out, e) = shift3d(&t, &cfg, -1, &mut rng).unwrap();
            assert_eq!(e.shift, 0);
            assert_eq!(out, t);
        }
    }

    #[test]
    fn roll_by_one_matches_hand_example() {
        let cfg = Shift3DConfig {
            max_shift_fraction: 1.0,
            ..Default::default()
        };
        for axis in 0..3 {
            let t = line(axis);
            let e = ShiftEvent {
                axis,
                direction: 1,
                shift: 1,
            };
            assert_eq!(along(&apply_shift(&t, &e, &cfg, 0).unwrap()), vec![4, 1, 2, 3]);
            let padded = Shift3DConfig { padding: true, ..cfg };
            assert_eq!(along(&apply_shift(&t, &e, &padded, 0).unwrap()), vec![0, 1, 2, 3]);
            let back = e.reverse();
            assert_eq!(along(&apply_shift(&t, &back, &cfg, 0).unwrap()), vec![2, 3, 4, 1]);
            assert_eq!(along(&apply_shift(&t, &back, &padded, 0).unwrap()), vec![2, 3, 4, 0]);
        }
    }

    #[test]
    fn padded_slab_size() {
        let cfg = Shift3DConfig {
            max_shift_fraction: 1.0,
            padding: true,
            ..Default::default()
        };
        let t = Array3::from_shape_fn((4, 3, 2), |(z, y, x)| (z * 6 + y * 2 + x) as i32 + 1);
        let e = ShiftEvent {
            axis: 0,
            direction: 1,
            shift: 1,
        };
        let out = apply_shift(&t, &e, &cfg, 0).unwrap();
        assert_eq!(out.iter().filter(|&&v| v == 0).count(), t.len() / 4);
    }

    #[test]
    fn max_shift_floor() {
        let cfg = Shift3DConfig::default();
        assert_eq!(cfg.max_shift(250), 50);
        assert_eq!(cfg.max_shift(4), 0);
    }

    #[test]
    fn full_period_is_identity() {
        let cfg = Shift3DConfig {
            max_shift_fraction: 1.0,
            ..Default::default()
        };
        let t = Array3::from_shape_fn((3, 5, 2), |(z, y, x)| (z * 10 + y * 2 + x) as i32);
        for direction in [-1, 1] {
            let e = ShiftEvent {
                axis: 1,
                direction,
                shift: 5,
            };
            assert_eq!(apply_shift(&t, &e, &cfg, 0).unwrap(), t);
        }
    }

    #[test]
    fn out_of_bounds_event_rejected() {
        let cfg = Shift3DConfig::default();
        let t = Array3::<i32>::zeros((10, 10, 10));
        let too_far = ShiftEvent {
            axis: 0,
            direction: 1,
            shift: 3,
        };
        assert!(apply_shift(&t, &too_far, &cfg, 0).is_err());
        let bad_axis = ShiftEvent {
            axis: 3,
            direction: 1,
            shift: 0,
        };
        assert!(apply_shift(&t, &bad_axis, &cfg, 0).is_err());
        let bad_dir = ShiftEvent {
            axis: 0,
            direction: 0,
            shift: 0,
        };
        assert!(apply_shift(&t, &bad_dir, &cfg, 0).is_err());
        let bad_cfg = Shift3DConfig {
            max_shift_fraction: 1.5,
            ..cfg
        };
        assert!(apply_shift(&t, &too_far, &bad_cfg, 0).is_err());
    }

    #[test]
    fn replay_is_bit_identical_and_event_serializes() {
        let cfg = Shift3DConfig {
            padding: true,
            padding_value: -1000.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = Array3::from_shape_fn((10, 12, 15), |(z, y, x)| (z * 180 + y * 15 + x) as f32 * 0.5);
        for _ in 0..20 {
            let (out, e) = shift3d(&t, &cfg, cfg.padding_value, &mut rng).unwrap();
            let json = serde_json::to_string(&e).unwrap();
            let e2: ShiftEvent = serde_json::from_str(&json).unwrap();
            let replay = apply_shift(&t, &e2, &cfg, cfg.padding_value).unwrap();
            assert_eq!(out, replay);
        }
    }

    #[test]
    fn zero_application_probability_never_shifts() {
        let op = Shift3D::new(Shift3DConfig {
            apply_probability: 0.0,
            ..Default::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = Array3::from_shape_fn((5, 5, 5), |(z, y, x)| (z + y * x) as f32);
        for _ in 0..10 {
            let (out, e) = op.maybe_apply(&t, &mut rng).unwrap();
            assert!(e.is_none());
            assert_eq!(out, t);
        }
    }
}
