use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by the whole pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative Frobenius tolerance for the continuity test `A1 - A2 = h c^T`.
    pub cont: f64,
    /// Positive-definiteness threshold for `Rw`.
    pub pd: f64,
    /// Hurwitz threshold; a mode is Hurwitz when its max real part is below `-hurwitz`.
    pub hurwitz: f64,
    /// Width of the warning band around the imaginary axis.
    pub hurwitz_band: f64,
    /// Margin in `P_i >= eps_pd I`.
    pub eps_pd: f64,
    /// Accepted solver residual; the certificate audit fails above `10 * solver`.
    pub solver: f64,
    /// Slack for set membership tests.
    pub mem: f64,
    /// Relative slack for the decrease audit along trajectories.
    pub audit: f64,
    /// Copositive split: PSD part eigenvalue slack.
    pub psd: f64,
    /// Copositive split: nonnegative part entry slack.
    pub entry: f64,
    /// Copositive split: `target - S - N` Frobenius slack.
    pub split: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cont: 1e-8,
            pd: 1e-10,
            hurwitz: 0.0,
            hurwitz_band: 1e-9,
            eps_pd: 1e-6,
            solver: 1e-6,
            mem: 1e-9,
            audit: 1e-6,
            psd: 1e-6,
            entry: 1e-6,
            split: 1e-6,
        }
    }
}
