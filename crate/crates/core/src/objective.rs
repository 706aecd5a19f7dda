use crate::data::BoxBounds;
use crate::error::Result;

/// A black-box return to be maximized: each call to [`Objective::evaluate`]
/// yields one noisy observation. Noise comes from the objective's own
/// seeded stream, so a freshly constructed objective replays the same
/// sequence of observations.
pub trait Objective {
    fn dim(&self) -> usize;

    fn bounds(&self) -> &BoxBounds;

    fn evaluate(&mut self, theta: &[f64]) -> Result<f64>;

    /// Known optimal value, if any (needed for regret).
    fn optimum(&self) -> Option<f64> {
        None
    }

    /// Noise-free value, when the objective can provide it.
    fn noiseless(&self, _theta: &[f64]) -> Option<f64> {
        None
    }
}

impl<T: Objective + ?Sized> Objective for &mut T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn bounds(&self) -> &BoxBounds {
        (**self).bounds()
    }

    fn evaluate(&mut self, theta: &[f64]) -> Result<f64> {
        (**self).evaluate(theta)
    }

    fn optimum(&self) -> Option<f64> {
        (**self).optimum()
    }

    fn noiseless(&self, theta: &[f64]) -> Option<f64> {
        (**self).noiseless(theta)
    }
}
