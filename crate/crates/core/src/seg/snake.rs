//! Semi-implicit active contour (snake) on a 2D image.

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::contour::Contour2D;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnakeParams {
    /// Elasticity (membrane) weight.
    pub alpha: f64,
    /// Rigidity (thin plate) weight.
    pub beta: f64,
    /// Time step parameter; smaller values take larger implicit steps.
    pub gamma: f64,
    pub max_iterations: usize,
    /// Mean point displacement (pixels) below which the snake has converged.
    pub tolerance: f64,
    /// Weight of the external edge energy.
    pub edge_weight: f64,
    /// Gaussian smoothing applied before the gradient magnitude (pixels).
    pub sigma: f64,
    /// Largest move of a point per iteration (pixels).
    pub max_step: f64,
}

impl Default for SnakeParams {
    fn default() -> Self {
        SnakeParams {
            alpha: 0.015,
            beta: 0.3,
            gamma: 0.001,
            max_iterations: 500,
            tolerance: 0.1,
            edge_weight: 10.0,
            sigma: 2.0,
            max_step: 0.25,
        }
    }
}

impl SnakeParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.gamma, self.tolerance, self.edge_weight, self.sigma, self.max_step]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("snake parameters must be finite".into()));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.edge_weight < 0.0 || self.sigma < 0.0 {
            return Err(Error::Config("alpha, beta, edge_weight and sigma must be non-negative".into()));
        }
        if self.gamma <= 0.0 || self.tolerance <= 0.0 || self.max_step <= 0.0 {
            return Err(Error::Config("gamma, tolerance and max_step must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

/// Separable Gaussian filter with mirrored borders.
pub fn gaussian_blur(img: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma == 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (h, w) = img.dim();
    let rows: Array2<f64> = Array2::from_shape_fn((h, w), |(y, x)| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * img[[y, reflect(x as isize + i as isize - r, w)]])
            .sum()
    });
    Array2::from_shape_fn((h, w), |(y, x)| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * rows[[reflect(y as isize + i as isize - r, h), x]])
            .sum()
    })
}

/// Central differences inside, one-sided at the borders: (d/drow, d/dcol).
pub fn gradient(img: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (h, w) = img.dim();
    let diff = |n: usize, i: usize, f: &dyn Fn(usize) -> f64| -> f64 {
        if n < 2 {
            0.0
        } else if i == 0 {
            f(1) - f(0)
        } else if i == n - 1 {
            f(n - 1) - f(n - 2)
        } else {
            (f(i + 1) - f(i - 1)) / 2.0
        }
    };
    let gy = Array2::from_shape_fn((h, w), |(y, x)| diff(h, y, &|j| img[[j, x]]));
    let gx = Array2::from_shape_fn((h, w), |(y, x)| diff(w, x, &|j| img[[y, j]]));
    (gy, gx)
}

/// Force field `w * grad |grad (G_sigma * I)|`, pulling points toward edges.
pub fn edge_force(img: &Array2<f64>, sigma: f64, weight: f64) -> (Array2<f64>, Array2<f64>) {
    let smooth = gaussian_blur(img, sigma);
    let (gy, gx) = gradient(&smooth);
    let mag = ndarray::Zip::from(&gy).and(&gx).map_collect(|a, b| (a * a + b * b).sqrt());
    let (fy, fx) = gradient(&mag);
    (fy * weight, fx * weight)
}

fn bilinear(f: &Array2<f64>, y: f64, x: f64) -> f64 {
    let (h, w) = f.dim();
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (ty, tx) = (y - y0 as f64, x - x0 as f64);
    let top = f[[y0, x0]] * (1.0 - tx) + f[[y0, x1]] * tx;
    let bot = f[[y1, x0]] * (1.0 - tx) + f[[y1, x1]] * tx;
    top * (1.0 - ty) + bot * ty
}

/// `(A + gamma I)^-1` for the cyclic pentadiagonal internal-energy matrix.
fn implicit_operator(n: usize, p: &SnakeParams) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::<f64>::zeros(n, n);
    let taps = [
        (0isize, 2.0 * p.alpha + 6.0 * p.beta + p.gamma),
        (1, -p.alpha - 4.0 * p.beta),
        (-1, -p.alpha - 4.0 * p.beta),
        (2, p.beta),
        (-2, p.beta),
    ];
    for i in 0..n {
        for &(off, v) in &taps {
            let j = (i as isize + off).rem_euclid(n as isize) as usize;
            m[(i, j)] += v;
        }
    }
    m.try_inverse()
        .ok_or_else(|| Error::NonFinite("snake system matrix is singular".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnakeOutcome {
    pub contour: Contour2D,
    pub iterations: usize,
    pub converged: bool,
}

/// Lag of the displacement test. An even lag cancels the two-step
/// oscillation of a contour sitting on an edge.
const HISTORY: usize = 10;

/// Evolves `seed` on `image` until the mean displacement over the last
/// `HISTORY` iterations drops below the tolerance. The converged contour is
/// the average of the iterates in that window.
pub fn active_contour(image: &Array2<f64>, seed: &Contour2D, params: &SnakeParams) -> Result<SnakeOutcome> {
    params.validate()?;
    let (h, w) = image.dim();
    if h < 2 || w < 2 {
        return Err(Error::InvalidArgument("snake image must be at least 2x2".into()));
    }
    if !seed.within((h, w)) {
        return Err(Error::InvalidArgument("seed contour leaves the image".into()));
    }
    let n = seed.len();
    let inv = implicit_operator(n, params)?;
    let (fy, fx) = edge_force(image, params.sigma, params.edge_weight);
    let mut ys = nalgebra::DVector::from_iterator(n, seed.points().iter().map(|p| p[0]));
    let mut xs = nalgebra::DVector::from_iterator(n, seed.points().iter().map(|p| p[1]));
    let mut history: std::collections::VecDeque<(nalgebra::DVector<f64>, nalgebra::DVector<f64>)> =
        std::collections::VecDeque::with_capacity(HISTORY);
    history.push_back((ys.clone(), xs.clone()));
    for it in 1..=params.max_iterations {
        let ey = nalgebra::DVector::from_iterator(n, (0..n).map(|i| bilinear(&fy, ys[i], xs[i])));
        let ex = nalgebra::DVector::from_iterator(n, (0..n).map(|i| bilinear(&fx, ys[i], xs[i])));
        let ny = &inv * (&ys * params.gamma + ey);
        let nx = &inv * (&xs * params.gamma + ex);
        for i in 0..n {
            ys[i] = (ys[i] + params.max_step * (ny[i] - ys[i]).tanh()).clamp(0.0, (h - 1) as f64);
            xs[i] = (xs[i] + params.max_step * (nx[i] - xs[i]).tanh()).clamp(0.0, (w - 1) as f64);
        }
        if !ys.iter().chain(xs.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("snake iteration {it}")));
        }
        let (py, px) = &history[0];
        let moved = (0..n).map(|i| (ys[i] - py[i]).hypot(xs[i] - px[i])).sum::<f64>() / n as f64;
        if (history.len() == HISTORY || it == 1) && moved < params.tolerance {
            let k = history.len() as f64 + 1.0;
            let my = history.iter().fold(ys.clone(), |acc, h| acc + &h.0) / k;
            let mx = history.iter().fold(xs.clone(), |acc, h| acc + &h.1) / k;
            return Ok(SnakeOutcome {
                contour: to_contour(&my, &mx)?,
                iterations: it,
                converged: true,
            });
        }
        if history.len() == HISTORY {
            history.pop_front();
        }
        history.push_back((ys.clone(), xs.clone()));
    }
    Ok(SnakeOutcome {
        contour: to_contour(&ys, &xs)?,
        iterations: params.max_iterations,
        converged: false,
    })
}

fn to_contour(ys: &nalgebra::DVector<f64>, xs: &nalgebra::DVector<f64>) -> Result<Contour2D> {
    Contour2D::new(ys.iter().zip(xs.iter()).map(|(&y, &x)| [y, x]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(c: [f64; 2], r: f64, n: usize) -> Contour2D {
        Contour2D::new(
            (0..n)
                .map(|k| {
                    let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    [c[0] + r * t.sin(), c[1] + r * t.cos()]
                })
                .collect(),
        )
        .unwrap()
    }

    fn disc_image(size: usize, c: [f64; 2], r: f64) -> Array2<f64> {
        Array2::from_shape_fn((size, size), |(y, x)| {
            if (y as f64 - c[0]).hypot(x as f64 - c[1]) <= r {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn blur_preserves_constants() {
        let img = Array2::from_elem((9, 13), 3.25);
        assert!(gaussian_blur(&img, 2.0).iter().all(|v| (v - 3.25).abs() < 1e-12));
        let (gy, gx) = gradient(&Array2::from_shape_fn((5, 6), |(y, x)| 2.0 * y as f64 - x as f64));
        assert!(gy.iter().all(|v| (v - 2.0).abs() < 1e-12) && gx.iter().all(|v| (v + 1.0).abs() < 1e-12));
    }

    #[test]
    fn flat_image_shrinks_contour() {
        let img = Array2::zeros((60, 60));
        let mut c = circle([30.0, 30.0], 20.0, 63);
        let p = SnakeParams {
            max_iterations: 1,
            ..SnakeParams::default()
        };
        let mut area = c.area();
        for _ in 0..8 {
            c = active_contour(&img, &c, &p).unwrap().contour;
            assert!(c.area() < area);
            area = c.area();
        }
    }

    #[test]
    fn converges_onto_disc_edge() {
        let centre = [40.0, 41.0];
        let r = 18.0;
        let img = disc_image(80, centre, r);
        let seed = circle(centre, r + 5.0, 72);
        let out = active_contour(&img, &seed, &SnakeParams::default()).unwrap();
        assert!(out.converged, "{} iterations", out.iterations);
        let mean_err = out
            .contour
            .points()
            .iter()
            .map(|p| ((p[0] - centre[0]).hypot(p[1] - centre[1]) - r).abs())
            .sum::<f64>()
            / out.contour.len() as f64;
        assert!(mean_err < 1.5, "{mean_err}");
        assert!(out.contour.within((80, 80)));
    }

    #[test]
    fn seed_on_edge_stops_immediately() {
        let centre = [30.0, 30.0];
        let img = disc_image(60, centre, 15.0);
        let seed = circle(centre, 15.5, 48);
        let p = SnakeParams {
            tolerance: 2.0,
            ..SnakeParams::default()
        };
        let out = active_contour(&img, &seed, &p).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn points_stay_in_bounds() {
        let img = Array2::from_shape_fn((20, 20), |(y, x)| ((y * 7 + x * 3) % 5) as f64);
        let seed = Contour2D::new(vec![[0.0, 0.0], [0.0, 19.0], [19.0, 19.0], [19.0, 0.0]]).unwrap();
        let out = active_contour(&img, &seed, &SnakeParams::default()).unwrap();
        assert!(out.contour.within((20, 20)));
        let outside = Contour2D::new(vec![[-1.0, 0.0], [0.0, 5.0], [5.0, 5.0]]).unwrap();
        assert!(active_contour(&img, &outside, &SnakeParams::default()).is_err());
    }
}
