//! Dormand-Prince 5(4) stepper with Hairer's continuous extension.

pub const DIM: usize = 6;
pub type Vector = [f64; DIM];

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// Interpolant over one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub t0: f64,
    pub h: f64,
    r: [Vector; 5],
}

impl Dense {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// State at normalized position `theta` in `[0, 1]`.
    pub fn eval_theta(&self, theta: f64) -> Vector {
        let th1 = 1.0 - theta;
        let mut out = [0.0; DIM];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.r[0][i]
                + theta * (self.r[1][i] + th1 * (self.r[2][i] + theta * (self.r[3][i] + th1 * self.r[4][i])));
        }
        out
    }

    pub fn eval(&self, t: f64) -> Vector {
        self.eval_theta(((t - self.t0) / self.h).clamp(0.0, 1.0))
    }
}

/// Result of one attempted step.
pub struct Attempt {
    pub y1: Vector,
    /// Derivative at the step end (first stage of the next step).
    pub k7: Vector,
    /// Weighted RMS error; the step is acceptable when `<= 1`.
    pub err: f64,
    pub dense: Dense,
}

fn axpy(y: &Vector, h: f64, terms: &[(f64, &Vector)]) -> Vector {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

/// Takes one Dormand-Prince step of size `h` from `(t, y)` with first stage `k1`.
pub fn attempt<F>(f: &F, t: f64, y: &Vector, k1: &Vector, h: f64, rtol: f64, atol: f64) -> Attempt
where
    F: Fn(f64, &Vector) -> Vector,
{
    let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(
        t + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = f(
        t + h,
        &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let y1 = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(t + h, &y1);

    let mut sum = 0.0;
    for i in 0..DIM {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let scale = atol + rtol * y[i].abs().max(y1[i].abs());
        sum += (e / scale).powi(2);
    }
    let err = (sum / DIM as f64).sqrt();

    let mut r = [[0.0; DIM]; 5];
    for i in 0..DIM {
        let diff = y1[i] - y[i];
        let bspl = h * k1[i] - diff;
        r[0][i] = y[i];
        r[1][i] = diff;
        r[2][i] = bspl;
        r[3][i] = diff - h * k7[i] - bspl;
        r[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Attempt {
        y1,
        k7,
        err,
        dense: Dense { t0: t, h, r },
    }
}

/// Step-size factor for the next attempt.
pub fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        FAC_MAX
    } else {
        (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
    }
}

/// Initial step guess (Hairer & Wanner, II.4).
pub fn initial_step<F>(f: &F, t: f64, y: &Vector, k1: &Vector, rtol: f64, atol: f64, h_max: f64) -> f64
where
    F: Fn(f64, &Vector) -> Vector,
{
    let norm = |v: &Vector| {
        let s: f64 = v
            .iter()
            .zip(y)
            .map(|(a, b)| (a / (atol + rtol * b.abs())).powi(2))
            .sum();
        (s / DIM as f64).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(k1);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(h_max);
    let y1 = axpy(y, h0, &[(1.0, k1)]);
    let k2 = f(t + h0, &y1);
    let diff: Vector = std::array::from_fn(|i| k2[i] - k1[i]);
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(h_max)
}
