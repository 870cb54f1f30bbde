//! Posterior `p(x|y) ∝ exp(-mu f(x) - g_y(x))` with a Gaussian likelihood and
//! an l1 analysis or synthesis prior.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::dictionaries::{CoeffVector, Dictionary};
use crate::error::{Error, Result};
use crate::linops::{ForwardOp, ImageGrid, MeasurementVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorForm {
    /// `f(x) = ||Psi^dagger x||_1` on the image.
    Analysis,
    /// `f(a) = ||a||_1` on coefficients, `x = Psi a`.
    Synthesis,
}

impl fmt::Display for PriorForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorForm::Analysis => "analysis",
            PriorForm::Synthesis => "synthesis",
        })
    }
}

impl FromStr for PriorForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "analysis" => Ok(PriorForm::Analysis),
            "synthesis" => Ok(PriorForm::Synthesis),
            other => Err(Error::InvalidParameter(format!("unknown prior form '{other}'"))),
        }
    }
}

/// A point in the variable space of a model.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Image(ImageGrid),
    Coeffs(CoeffVector),
}

impl Point {
    pub fn values(&self) -> &[f64] {
        match self {
            Point::Image(x) => x.values(),
            Point::Coeffs(a) => &a.values,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PosteriorModel {
    op: ForwardOp,
    dict: Dictionary,
    prior_form: PriorForm,
    mu: f64,
    y: MeasurementVector,
}

impl PosteriorModel {
    /// `mu = 0` is accepted and switches the prior off.
    pub fn new(
        op: ForwardOp,
        dict: Dictionary,
        prior_form: PriorForm,
        mu: f64,
        y: MeasurementVector,
    ) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "regularisation parameter must be finite and non-negative, got {mu}"
            )));
        }
        if op.rows() != dict.rows() || op.cols() != dict.cols() {
            return Err(Error::Dimension(format!(
                "operator grid {}x{} differs from dictionary grid {}x{}",
                op.rows(),
                op.cols(),
                dict.rows(),
                dict.cols()
            )));
        }
        if y.len() != op.n_measurements() {
            return Err(Error::Dimension(format!(
                "operator produces {} measurements, data has {}",
                op.n_measurements(),
                y.len()
            )));
        }
        Ok(Self {
            op,
            dict,
            prior_form,
            mu,
            y,
        })
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(
            self.op.clone(),
            self.dict.clone(),
            self.prior_form,
            mu,
            self.y.clone(),
        )
    }

    pub fn op(&self) -> &ForwardOp {
        &self.op
    }

    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }

    pub fn prior_form(&self) -> PriorForm {
        self.prior_form
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.y.sigma()
    }

    pub fn y(&self) -> &MeasurementVector {
        &self.y
    }

    pub fn rows(&self) -> usize {
        self.op.rows()
    }

    pub fn cols(&self) -> usize {
        self.op.cols()
    }

    /// Dimension of the inferred variable: `N` (analysis) or `L` (synthesis).
    pub fn dim(&self) -> usize {
        match self.prior_form {
            PriorForm::Analysis => self.op.n_pixels(),
            PriorForm::Synthesis => self.dict.coeff_len(),
        }
    }

    pub fn zero_point(&self) -> Point {
        match self.prior_form {
            PriorForm::Analysis => Point::Image(ImageGrid::zeros(self.rows(), self.cols())),
            PriorForm::Synthesis => {
                Point::Coeffs(self.dict.coeffs(vec![0.0; self.dict.coeff_len()]))
            }
        }
    }

    /// Wrap raw variable values as a point of this model.
    pub fn point_from_values(&self, values: Vec<f64>) -> Result<Point> {
        if values.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "model variable has {} entries, got {}",
                self.dim(),
                values.len()
            )));
        }
        Ok(match self.prior_form {
            PriorForm::Analysis => {
                Point::Image(ImageGrid::new(self.rows(), self.cols(), values)?)
            }
            PriorForm::Synthesis => Point::Coeffs(self.dict.coeffs(values)),
        })
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        match (self.prior_form, p) {
            (PriorForm::Analysis, Point::Image(x)) => {
                if x.rows() != self.rows() || x.cols() != self.cols() {
                    return Err(Error::Dimension(format!(
                        "model grid is {}x{}, image is {}x{}",
                        self.rows(),
                        self.cols(),
                        x.rows(),
                        x.cols()
                    )));
                }
                Ok(())
            }
            (PriorForm::Synthesis, Point::Coeffs(a)) => {
                if a.len() != self.dict.coeff_len() {
                    return Err(Error::Dimension(format!(
                        "model has {} coefficients, point has {}",
                        self.dict.coeff_len(),
                        a.len()
                    )));
                }
                Ok(())
            }
            (form, _) => Err(Error::InvalidParameter(format!(
                "point variant does not match the {form} prior"
            ))),
        }
    }

    pub fn point_to_image(&self, p: &Point) -> Result<ImageGrid> {
        self.check_point(p)?;
        Ok(match p {
            Point::Image(x) => x.clone(),
            Point::Coeffs(a) => self.dict.synthesize(a)?,
        })
    }

    /// Canonical point for an image: the image itself, or `a = Psi^dagger x`.
    pub fn image_to_point(&self, x: &ImageGrid) -> Result<Point> {
        match self.prior_form {
            PriorForm::Analysis => {
                let p = Point::Image(x.clone());
                self.check_point(&p)?;
                Ok(p)
            }
            PriorForm::Synthesis => Ok(Point::Coeffs(self.dict.analyze(x)?)),
        }
    }

    pub fn likelihood_g(&self, p: &Point) -> Result<f64> {
        let x = self.point_to_image(p)?;
        Ok(self.likelihood_from_image(x.values()))
    }

    pub fn prior_f(&self, p: &Point) -> Result<f64> {
        self.check_point(p)?;
        Ok(match p {
            Point::Image(x) => l1(&self.dict.analyze_slice(x.values())),
            Point::Coeffs(a) => l1(&a.values),
        })
    }

    pub fn objective(&self, p: &Point) -> Result<f64> {
        Ok(self.mu * self.prior_f(p)? + self.likelihood_g(p)?)
    }

    /// Objective of an image through its canonical point.
    pub fn objective_of_image(&self, x: &ImageGrid) -> Result<f64> {
        self.objective(&self.image_to_point(x)?)
    }

    pub(crate) fn residual(&self, x: &[f64]) -> Vec<Complex64> {
        let mut r = self.op.apply_slice(x);
        for (ri, yi) in r.iter_mut().zip(self.y.values()) {
            *ri -= yi;
        }
        r
    }

    pub(crate) fn likelihood_from_image(&self, x: &[f64]) -> f64 {
        let s2 = self.sigma() * self.sigma();
        self.residual(x).iter().map(|c| c.norm_sqr()).sum::<f64>() / (2.0 * s2)
    }

    /// `f` evaluated on raw variable values.
    pub(crate) fn prior_from_values(&self, v: &[f64]) -> f64 {
        match self.prior_form {
            PriorForm::Analysis => l1(&self.dict.analyze_slice(v)),
            PriorForm::Synthesis => l1(v),
        }
    }

    pub(crate) fn image_from_values(&self, v: &[f64]) -> Vec<f64> {
        match self.prior_form {
            PriorForm::Analysis => v.to_vec(),
            PriorForm::Synthesis => self.dict.synthesize_slice(v),
        }
    }

    /// Smooth part `g` and its gradient with respect to the model variable.
    pub(crate) fn likelihood_and_gradient(&self, v: &[f64]) -> (f64, Vec<f64>) {
        let x = self.image_from_values(v);
        let r = self.residual(&x);
        let s2 = self.sigma() * self.sigma();
        let g = r.iter().map(|c| c.norm_sqr()).sum::<f64>() / (2.0 * s2);
        let mut grad = self.op.adjoint_slice(&r);
        grad.iter_mut().for_each(|v| *v /= s2);
        let grad = match self.prior_form {
            PriorForm::Analysis => grad,
            PriorForm::Synthesis => self.dict.analyze_slice(&grad),
        };
        (g, grad)
    }

    pub(crate) fn objective_from_values(&self, v: &[f64]) -> f64 {
        self.mu * self.prior_from_values(v) + self.likelihood_from_image(&self.image_from_values(v))
    }
}

pub(crate) fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}
