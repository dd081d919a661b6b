//! Fourier-series control signals parametrized by shape and span.
//!
//! A bounded periodic control is described by three independent pieces:
//! the *shape* (its profile normalized to [0, 1]), the *span* (the pair of
//! infimum and supremum it actually attains) and the fundamental frequency.
//! The shape of a truncated Fourier series depends only on the direction of
//! its harmonic amplitude vector, so it is parametrized by a point on the
//! unit hypersphere in 2K dimensions, i.e. by 2K-1 angles. The span is
//! parametrized relative to the control bounds [m, M] by two fractions
//! (p, q) in (0, 1]. Together with the frequency this gives a box-bounded
//! parameter vector that a global optimizer can search directly, while every
//! decoded control is guaranteed to respect its bounds.

use std::f64::consts::PI;
use std::io::{self, Write};

use thiserror::Error;

use crate::export::format_float;

/// Number of evenly spaced samples over one period used to estimate the
/// span of a shape signal.
pub const SPAN_SAMPLE_POINTS: usize = 1000;

/// Lower clamp for the span fractions p and q. The mathematical domain is
/// the half-open interval (0, 1], which a box-constrained optimizer cannot
/// express; proposals are clamped to [SPAN_PARAM_EPS, 1].
pub const SPAN_PARAM_EPS: f64 = 1e-9;

/// Relative threshold below which a sampled span counts as degenerate
/// (the signal is numerically constant and has no shape).
const DEGENERACY_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("angle {index} = {value} lies outside its interval [{lo}, {hi})")]
    AngleOutOfBounds {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("a spherical direction needs an odd number of angles (2K-1 for K harmonics), got {0}")]
    BadAngleCount(usize),
    #[error("span fractions must lie in [{SPAN_PARAM_EPS}, 1], got p = {p}, q = {q}")]
    SpanParamsOutOfRange { p: f64, q: f64 },
    #[error("control bounds need lower < upper, got [{lower}, {upper}]")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("fundamental frequency must be positive and finite, got {0}")]
    InvalidOmega(f64),
    #[error("signal is degenerate: sampled span width {width:.3e} is below the constancy threshold")]
    DegenerateShape { width: f64 },
    #[error("harmonic amplitude vector must be nonzero")]
    ZeroAmplitudes,
    #[error("a span needs inf < sup, got ({inf}, {sup})")]
    InvalidSpan { inf: f64, sup: f64 },
}

/// A point on the unit hypersphere S^(2K-1), i.e. the direction of the
/// harmonic amplitude vector, given by 2K-1 spherical angles. The first
/// 2K-2 angles range over [0, pi], the last over [0, 2*pi). For K = 1 the
/// single angle takes the [0, 2*pi) role.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalDirection {
    angles: Vec<f64>,
}

impl SphericalDirection {
    pub fn new(angles: Vec<f64>) -> Result<Self, ControlError> {
        if angles.is_empty() || angles.len() % 2 == 0 {
            return Err(ControlError::BadAngleCount(angles.len()));
        }
        let last = angles.len() - 1;
        for (i, &phi) in angles.iter().enumerate() {
            let (lo, hi) = if i == last { (0.0, 2.0 * PI) } else { (0.0, PI) };
            let ok = if i == last {
                phi >= lo && phi < hi
            } else {
                phi >= lo && phi <= hi
            };
            if !ok || !phi.is_finite() {
                return Err(ControlError::AngleOutOfBounds {
                    index: i,
                    value: phi,
                    lo,
                    hi,
                });
            }
        }
        Ok(Self { angles })
    }

    /// Number of harmonics K = (len + 1) / 2.
    pub fn harmonic_count(&self) -> usize {
        (self.angles.len() + 1) / 2
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Cartesian coordinates of the direction: a unit vector of length 2K.
    ///
    /// Component i is cos(phi_i) times the product of the sines of all
    /// earlier angles; the final component is the full sine product.
    pub fn to_cartesian(&self) -> Vec<f64> {
        let n = self.angles.len();
        let mut coords = vec![0.0; n + 1];
        let mut sin_prod = 1.0;
        for (i, &phi) in self.angles.iter().enumerate() {
            coords[i] = sin_prod * phi.cos();
            sin_prod *= phi.sin();
        }
        coords[n] = sin_prod;
        coords
    }
}

/// Span fractions (p, q): p places the supremum within [m, M], q sets how
/// much of the room below the supremum the signal uses. Both live in
/// [SPAN_PARAM_EPS, 1]; p = q = 1 means the control fills [m, M] exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanParams {
    p: f64,
    q: f64,
}

impl SpanParams {
    pub fn new(p: f64, q: f64) -> Result<Self, ControlError> {
        let in_range = |v: f64| v.is_finite() && (SPAN_PARAM_EPS..=1.0).contains(&v);
        if !in_range(p) || !in_range(q) {
            return Err(ControlError::SpanParamsOutOfRange { p, q });
        }
        Ok(Self { p, q })
    }

    /// Clamps arbitrary optimizer proposals into the valid range.
    pub fn clamped(p: f64, q: f64) -> Self {
        Self {
            p: p.clamp(SPAN_PARAM_EPS, 1.0),
            q: q.clamp(SPAN_PARAM_EPS, 1.0),
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}

/// The box [lower, upper] every value of an admissible control must stay in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBounds {
    lower: f64,
    upper: f64,
}

impl ControlBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self, ControlError> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(ControlError::InvalidBounds { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Infimum/supremum pair of a bounded signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub inf: f64,
    pub sup: f64,
}

impl Span {
    pub fn new(inf: f64, sup: f64) -> Result<Self, ControlError> {
        if !(inf.is_finite() && sup.is_finite() && inf < sup) {
            return Err(ControlError::InvalidSpan { inf, sup });
        }
        Ok(Self { inf, sup })
    }

    pub fn width(&self) -> f64 {
        self.sup - self.inf
    }
}

/// The optimizer-facing description of one control component: a direction
/// on the amplitude hypersphere, span fractions, fundamental frequency and
/// the admissible box.
///
/// When tied to a time window [tau0, tau_f], omega is additionally expected
/// to satisfy omega >= 2*pi/(tau_f - tau0); that constraint belongs to the
/// optimization bounds, not to this type.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSpec {
    pub direction: SphericalDirection,
    pub span: SpanParams,
    pub omega: f64,
    pub bounds: ControlBounds,
}

impl ControlSpec {
    pub fn new(
        direction: SphericalDirection,
        span: SpanParams,
        omega: f64,
        bounds: ControlBounds,
    ) -> Result<Self, ControlError> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(ControlError::InvalidOmega(omega));
        }
        Ok(Self {
            direction,
            span,
            omega,
            bounds,
        })
    }

    pub fn harmonic_count(&self) -> usize {
        self.direction.harmonic_count()
    }
}

/// An evaluable truncated Fourier series
/// `u(t) = a0/2 + sum_k a_k cos(k w t) + b_k sin(k w t)`.
///
/// The DC coefficient is stored as `a0`, with the conventional factor of
/// one half applied at evaluation time, not at storage time.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSeriesControl {
    a0: f64,
    harmonics: Vec<(f64, f64)>,
    omega: f64,
}

impl FourierSeriesControl {
    pub fn new(a0: f64, harmonics: Vec<(f64, f64)>, omega: f64) -> Result<Self, ControlError> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(ControlError::InvalidOmega(omega));
        }
        let norm_sq: f64 = harmonics.iter().map(|(a, b)| a * a + b * b).sum();
        if !(norm_sq > 0.0) || !norm_sq.is_finite() {
            return Err(ControlError::ZeroAmplitudes);
        }
        Ok(Self {
            a0,
            harmonics,
            omega,
        })
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn harmonics(&self) -> &[(f64, f64)] {
        &self.harmonics
    }

    pub fn harmonic_count(&self) -> usize {
        self.harmonics.len()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Evaluates `a0/2 + sum_k a_k cos(k w t) + b_k sin(k w t)`.
    pub fn eval(&self, t: f64) -> f64 {
        let mut acc = 0.5 * self.a0;
        for (k, (a, b)) in self.harmonics.iter().enumerate() {
            let arg = (k + 1) as f64 * self.omega * t;
            let (s, c) = arg.sin_cos();
            acc += a * c + b * s;
        }
        acc
    }

    /// The sign-flipped control `-u(t)`.
    pub fn negated(&self) -> Self {
        Self {
            a0: -self.a0,
            harmonics: self.harmonics.iter().map(|&(a, b)| (-a, -b)).collect(),
            omega: self.omega,
        }
    }

    /// Writes the coefficients as CSV: a header carrying `a0` and `omega`,
    /// then one `k,a_k,b_k` row per harmonic.
    pub fn write_coefficients_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# a0={},omega={}",
            format_float(self.a0),
            format_float(self.omega)
        )?;
        writeln!(w, "k,a_k,b_k")?;
        for (k, (a, b)) in self.harmonics.iter().enumerate() {
            writeln!(w, "{},{},{}", k + 1, format_float(*a), format_float(*b))?;
        }
        Ok(())
    }
}

/// Evaluates the pure shape signal `H . [cos wt, sin wt, ..., cos Kwt, sin Kwt]`
/// for a unit amplitude direction `H` of even length 2K.
pub fn eval_shape_signal(direction: &[f64], omega: f64, t: f64) -> f64 {
    debug_assert!(direction.len() % 2 == 0 && !direction.is_empty());
    debug_assert!(
        (direction.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-9,
        "shape signal expects a unit direction"
    );
    let mut acc = 0.0;
    for k in 0..direction.len() / 2 {
        let arg = (k + 1) as f64 * omega * t;
        let (s, c) = arg.sin_cos();
        acc += direction[2 * k] * c + direction[2 * k + 1] * s;
    }
    acc
}

/// Estimates the span of a periodic signal by sampling it at
/// [`SPAN_SAMPLE_POINTS`] evenly spaced points over one period [0, 2*pi/w),
/// left-closed. The sampled minimum and maximum stand in for the infimum
/// and supremum.
pub fn estimate_span_numeric<F>(signal: F, omega: f64) -> Result<Span, ControlError>
where
    F: Fn(f64) -> f64,
{
    if !(omega.is_finite() && omega > 0.0) {
        return Err(ControlError::InvalidOmega(omega));
    }
    let period = 2.0 * PI / omega;
    let dt = period / SPAN_SAMPLE_POINTS as f64;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for i in 0..SPAN_SAMPLE_POINTS {
        let v = signal(i as f64 * dt);
        min = min.min(v);
        max = max.max(v);
    }
    let width = max - min;
    if !(width.is_finite()) || width < DEGENERACY_REL_TOL * max.abs().max(1.0) {
        return Err(ControlError::DegenerateShape { width });
    }
    Ok(Span { inf: min, sup: max })
}

/// Maps a signal value onto [0, 1] relative to its span:
/// `(f - inf) / (sup - inf)`. The `Span` type guarantees a nonzero width.
pub fn normalize_shape(value: f64, span: &Span) -> f64 {
    (value - span.inf) / span.width()
}

/// Computes the target span from the fractions (p, q) and the admissible
/// box [m, M]:
///
/// ```text
/// sup = p (M - m) + m
/// inf = (M - m)(1 - q) p + m
/// ```
///
/// which guarantees `m <= inf < sup <= M` for p, q in (0, 1]. At the extreme
/// corner where `p q (M - m)` underflows below the floating-point resolution
/// of the bounds the span collapses and a degenerate-shape error is returned.
pub fn span_from_params(span: SpanParams, bounds: ControlBounds) -> Result<Span, ControlError> {
    let width = bounds.width();
    let sup = span.p * width + bounds.lower;
    let inf = width * (1.0 - span.q) * span.p + bounds.lower;
    if !(inf < sup) {
        return Err(ControlError::DegenerateShape { width: sup - inf });
    }
    Ok(Span { inf, sup })
}

/// Builds the concrete Fourier coefficients for a control spec.
///
/// Pipeline: angles -> unit amplitude direction -> sampled span of the shape
/// signal -> target span from (p, q) -> affine rescale. Because every step
/// is affine in the shape signal, the result has harmonic coefficients
/// `c * H` for a single positive scale `c = target_width / sampled_width`,
/// and a DC term chosen so the sampled infimum lands on the target infimum.
pub fn build_control(spec: &ControlSpec) -> Result<FourierSeriesControl, ControlError> {
    let direction = spec.direction.to_cartesian();
    build_from_amplitudes(&direction, spec.omega, spec.span, spec.bounds)
}

/// Same as [`build_control`] but starting from a raw (not necessarily
/// normalized) harmonic amplitude vector of even length 2K. The amplitude
/// vector is normalized first, so only its direction matters: scaling it by
/// any positive constant leaves the result unchanged.
pub fn build_from_amplitudes(
    amplitudes: &[f64],
    omega: f64,
    span: SpanParams,
    bounds: ControlBounds,
) -> Result<FourierSeriesControl, ControlError> {
    if amplitudes.is_empty() || amplitudes.len() % 2 != 0 {
        return Err(ControlError::BadAngleCount(amplitudes.len()));
    }
    if !(omega.is_finite() && omega > 0.0) {
        return Err(ControlError::InvalidOmega(omega));
    }
    let norm = amplitudes.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(ControlError::ZeroAmplitudes);
    }
    let unit: Vec<f64> = amplitudes.iter().map(|x| x / norm).collect();

    let sampled = estimate_span_numeric(|t| eval_shape_signal(&unit, omega, t), omega)?;
    let target = span_from_params(span, bounds)?;

    let scale = target.width() / sampled.width();
    let a0 = 2.0 * (target.inf - scale * sampled.inf);
    let harmonics: Vec<(f64, f64)> = unit
        .chunks_exact(2)
        .map(|ab| (scale * ab[0], scale * ab[1]))
        .collect();
    FourierSeriesControl::new(a0, harmonics, omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const FRAC_PI_2: f64 = std::f64::consts::FRAC_PI_2;

    #[test]
    fn direction_k1_axes() {
        let d = SphericalDirection::new(vec![0.0]).unwrap();
        assert_eq!(d.harmonic_count(), 1);
        let v = d.to_cartesian();
        assert_relative_eq!(v[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(v[1], 0.0, epsilon = 1e-15);

        let d = SphericalDirection::new(vec![FRAC_PI_2]).unwrap();
        let v = d.to_cartesian();
        assert!(v[0].abs() < 1e-15);
        assert_relative_eq!(v[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn direction_k2_cascade() {
        let d = SphericalDirection::new(vec![FRAC_PI_2; 3]).unwrap();
        assert_eq!(d.harmonic_count(), 2);
        let v = d.to_cartesian();
        for &c in &v[..3] {
            assert!(c.abs() < 1e-15, "leading components should vanish: {v:?}");
        }
        assert_relative_eq!(v[3], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn direction_rejects_out_of_bounds() {
        // Interior angles live in [0, pi].
        assert!(matches!(
            SphericalDirection::new(vec![3.5, 0.0, 0.0]),
            Err(ControlError::AngleOutOfBounds { index: 0, .. })
        ));
        // The last angle excludes 2*pi.
        assert!(SphericalDirection::new(vec![2.0 * PI]).is_err());
        assert!(SphericalDirection::new(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn shape_signal_matches_hand_values() {
        assert_relative_eq!(eval_shape_signal(&[1.0, 0.0], 1.0, 0.0), 1.0);
        assert_relative_eq!(eval_shape_signal(&[0.0, 1.0], 1.0, FRAC_PI_2), 1.0);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(
            eval_shape_signal(&[r, r], 2.0, PI / 8.0),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn span_of_sine_is_unit() {
        let span = estimate_span_numeric(|t| t.sin(), 1.0).unwrap();
        assert!((span.inf + 1.0).abs() < 2e-5);
        assert!((span.sup - 1.0).abs() < 2e-5);
    }

    #[test]
    fn span_of_constant_is_degenerate() {
        assert!(matches!(
            estimate_span_numeric(|_| 3.0, 1.0),
            Err(ControlError::DegenerateShape { .. })
        ));
    }

    #[test]
    fn span_of_two_harmonics() {
        // cos t + cos 2t peaks at exactly 2 (t = 0) and bottoms out at
        // -1.125 where cos t = -1/4; both frozen from a dense-grid check.
        let span = estimate_span_numeric(|t| t.cos() + (2.0 * t).cos(), 1.0).unwrap();
        assert!((span.sup - 2.0).abs() < 1e-12);
        assert!((span.inf + 1.125).abs() < 1e-4);
    }

    #[test]
    fn normalization_is_affine() {
        let span = Span::new(-2.0, 6.0).unwrap();
        assert_eq!(normalize_shape(-2.0, &span), 0.0);
        assert_eq!(normalize_shape(6.0, &span), 1.0);
        assert_eq!(normalize_shape(2.0, &span), 0.5);
    }

    #[test]
    fn span_from_params_examples() {
        let bounds = ControlBounds::new(-4.0, 4.0).unwrap();
        let full = span_from_params(SpanParams::new(1.0, 1.0).unwrap(), bounds).unwrap();
        assert_eq!((full.inf, full.sup), (-4.0, 4.0));

        let half = span_from_params(SpanParams::new(0.5, 1.0).unwrap(), bounds).unwrap();
        assert_eq!((half.inf, half.sup), (-4.0, 0.0));

        let quarter = span_from_params(SpanParams::new(0.5, 0.5).unwrap(), bounds).unwrap();
        assert_eq!((quarter.inf, quarter.sup), (-2.0, 0.0));
    }

    #[test]
    fn built_sine_fills_symmetric_bounds() {
        let spec = ControlSpec::new(
            SphericalDirection::new(vec![FRAC_PI_2]).unwrap(),
            SpanParams::new(1.0, 1.0).unwrap(),
            1.0,
            ControlBounds::new(-4.0, 4.0).unwrap(),
        )
        .unwrap();
        let ctrl = build_control(&spec).unwrap();
        // The 1000-point grid hits the extrema of sin exactly, so the
        // coefficients are 4*sin(t) to rounding.
        assert!(ctrl.a0().abs() < 1e-9);
        assert!(ctrl.harmonics()[0].0.abs() < 1e-9);
        assert_relative_eq!(ctrl.harmonics()[0].1, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn built_cosine_shifts_into_positive_bounds() {
        let spec = ControlSpec::new(
            SphericalDirection::new(vec![0.0]).unwrap(),
            SpanParams::new(1.0, 1.0).unwrap(),
            1.0,
            ControlBounds::new(0.0, 2.0).unwrap(),
        )
        .unwrap();
        let ctrl = build_control(&spec).unwrap();
        // cos mapped from (-1, 1) onto (0, 2): u = 1 + cos t.
        assert_relative_eq!(ctrl.a0(), 2.0, epsilon = 1e-9);
        assert_relative_eq!(ctrl.harmonics()[0].0, 1.0, epsilon = 1e-9);
        assert!(ctrl.harmonics()[0].1.abs() < 1e-9);
    }

    #[test]
    fn eval_control_hand_values() {
        let c = FourierSeriesControl::new(0.0, vec![(1.0, 0.0)], 1.0).unwrap();
        assert_relative_eq!(c.eval(0.0), 1.0);

        let c = FourierSeriesControl::new(0.0, vec![(0.0, 1.0)], 2.0).unwrap();
        assert_relative_eq!(c.eval(PI / 4.0), 1.0);

        let c = FourierSeriesControl::new(4.0, vec![(1.0, 0.0), (1.0, 0.0)], 1.0).unwrap();
        assert_relative_eq!(c.eval(0.0), 4.0);
    }

    #[test]
    fn zero_amplitudes_rejected() {
        assert!(matches!(
            FourierSeriesControl::new(2.0, vec![(0.0, 0.0)], 1.0),
            Err(ControlError::ZeroAmplitudes)
        ));
        assert!(FourierSeriesControl::new(2.0, vec![], 1.0).is_err());
    }

    #[test]
    fn negation_flips_every_sample() {
        let c = FourierSeriesControl::new(1.5, vec![(0.3, -2.0), (0.1, 0.7)], 0.8).unwrap();
        let n = c.negated();
        for i in 0..32 {
            let t = i as f64 * 0.37;
            assert_relative_eq!(n.eval(t), -c.eval(t), epsilon = 1e-15);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let spec = ControlSpec::new(
            SphericalDirection::new(vec![0.3, 2.1, 5.5]).unwrap(),
            SpanParams::new(0.8, 0.6).unwrap(),
            2.3,
            ControlBounds::new(-4.0, 4.0).unwrap(),
        )
        .unwrap();
        let a = build_control(&spec).unwrap();
        let b = build_control(&spec).unwrap();
        assert_eq!(a, b);
        for ((a1, b1), (a2, b2)) in a.harmonics().iter().zip(b.harmonics()) {
            assert_eq!(a1.to_bits(), a2.to_bits());
            assert_eq!(b1.to_bits(), b2.to_bits());
        }
    }

    #[test]
    fn coefficients_csv_layout() {
        let c = FourierSeriesControl::new(0.5, vec![(1.0, -2.0)], 3.0).unwrap();
        let mut buf = Vec::new();
        c.write_coefficients_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# a0=5.0000000000000000e-1"));
        assert_eq!(lines.next().unwrap(), "k,a_k,b_k");
        assert!(lines.next().unwrap().starts_with("1,1.0000000000000000e0,"));
    }
}
