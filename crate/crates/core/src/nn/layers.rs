use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use rand::Rng;

use super::{cast, Real};
use crate::error::{Error, Result};

/// Lower bound applied to vector norms in cosine similarity.
pub const NORM_EPS: f64 = 1e-8;

static DEGENERATE_COSINES: AtomicU64 = AtomicU64::new(0);

/// Number of cosine evaluations so far that hit the norm floor.
pub fn degenerate_cosine_count() -> u64 {
    DEGENERATE_COSINES.load(Ordering::Relaxed)
}

/// A named trainable matrix and its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Array2<T>,
    pub grad: Array2<T>,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Array2<T>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn scalar(name: impl Into<String>, v: T) -> Self {
        Self::new(name, Array2::from_elem((1, 1), v))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }

    pub fn grad_is_zero(&self) -> bool {
        self.grad.iter().all(|g| *g == T::zero())
    }

    pub fn cast<U: Real>(&self) -> Parameter<U> {
        Parameter {
            name: self.name.clone(),
            value: self.value.mapv(|v| cast(v.to_f64().expect("finite"))),
            grad: self.grad.mapv(|v| cast(v.to_f64().expect("finite"))),
        }
    }
}

/// Uniform Glorot initialization, bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || cast(rng.random_range(-bound..bound)))
}

pub fn linear_forward<T: Real>(input: ArrayView2<T>, weight: &Parameter<T>) -> Result<Array2<T>> {
    if input.ncols() != weight.value.nrows() {
        return Err(Error::Shape(format!(
            "linear {}: input has {} columns, weight is {:?}",
            weight.name,
            input.ncols(),
            weight.value.dim()
        )));
    }
    Ok(input.dot(&weight.value))
}

/// Reverse pass of `y = x W`: accumulates `x^T dy` into the weight gradient and
/// returns `dy W^T` when `want_input_grad` is set.
pub fn linear_backward<T: Real>(
    input: ArrayView2<T>,
    weight: &mut Parameter<T>,
    upstream: ArrayView2<T>,
    want_input_grad: bool,
) -> Option<Array2<T>> {
    let dw = input.t().dot(&upstream);
    weight.grad.zip_mut_with(&dw, |g, &d| *g = *g + d);
    want_input_grad.then(|| upstream.dot(&weight.value.t()))
}

/// `x` where `x >= 0`, `slope * x` elsewhere.
pub fn prelu_forward<T: Real>(input: ArrayView2<T>, slope: &Parameter<T>) -> Array2<T> {
    let a = slope.value[[0, 0]];
    input.mapv(|x| if x >= T::zero() { x } else { a * x })
}

/// Returns the input gradient; accumulates the slope gradient.
pub fn prelu_backward<T: Real>(
    input: ArrayView2<T>,
    slope: &mut Parameter<T>,
    upstream: ArrayView2<T>,
) -> Array2<T> {
    let a = slope.value[[0, 0]];
    let mut da = 0.0f64;
    let mut dx = Array2::zeros(input.raw_dim());
    Zip::from(&mut dx)
        .and(&input)
        .and(&upstream)
        .for_each(|d, &x, &g| {
            if x >= T::zero() {
                *d = g;
            } else {
                *d = a * g;
                da += (x * g).to_f64().unwrap_or(f64::NAN);
            }
        });
    slope.grad[[0, 0]] = slope.grad[[0, 0]] + cast(da);
    dx
}

fn norm_and_dot<T: Real>(a: ArrayView1<T>, b: ArrayView1<T>) -> (f64, f64, f64) {
    let (mut aa, mut bb, mut ab) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (x, y) = (x.to_f64().unwrap_or(f64::NAN), y.to_f64().unwrap_or(f64::NAN));
        aa += x * x;
        bb += y * y;
        ab += x * y;
    }
    (aa.sqrt(), bb.sqrt(), ab)
}

/// Cosine similarity with norms floored at [`NORM_EPS`], clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Real>(a: ArrayView1<T>, b: ArrayView1<T>) -> f64 {
    let (na, nb, ab) = norm_and_dot(a, b);
    if na < NORM_EPS || nb < NORM_EPS {
        DEGENERATE_COSINES.fetch_add(1, Ordering::Relaxed);
    }
    (ab / (na.max(NORM_EPS) * nb.max(NORM_EPS))).clamp(-1.0, 1.0)
}

/// Value and gradients of [`cosine_similarity`] with respect to both inputs.
pub fn cosine_similarity_backward<T: Real>(
    a: ArrayView1<T>,
    b: ArrayView1<T>,
) -> (f64, Array1<T>, Array1<T>) {
    let (na_raw, nb_raw, ab) = norm_and_dot(a, b);
    let na = na_raw.max(NORM_EPS);
    let nb = nb_raw.max(NORM_EPS);
    if na_raw < NORM_EPS || nb_raw < NORM_EPS {
        DEGENERATE_COSINES.fetch_add(1, Ordering::Relaxed);
    }
    let c = ab / (na * nb);
    let inv = 1.0 / (na * nb);
    // Below the floor the norm is a constant, so its derivative term vanishes.
    let ka = if na_raw >= NORM_EPS { c / (na * na) } else { 0.0 };
    let kb = if nb_raw >= NORM_EPS { c / (nb * nb) } else { 0.0 };
    let f = |x: T| x.to_f64().unwrap_or(f64::NAN);
    let da = Array1::from_iter(
        a.iter()
            .zip(b.iter())
            .map(|(&x, &y)| cast::<T>(f(y) * inv - ka * f(x))),
    );
    let db = Array1::from_iter(
        a.iter()
            .zip(b.iter())
            .map(|(&x, &y)| cast::<T>(f(x) * inv - kb * f(y))),
    );
    (c.clamp(-1.0, 1.0), da, db)
}
