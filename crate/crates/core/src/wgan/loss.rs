use fdd_autodiff::{backward, Bound, Tensor};

use super::{Critic, GanError};

/// Norms below this are floored before the square root so the penalty stays
/// differentiable at a zero gradient.
const NORM_FLOOR: f64 = 1e-24;

/// Row-wise `δ·real + (1 − δ)·fake` with `delta [n]`.
pub fn interpolate(real: &Tensor, fake: &Tensor, delta: &Tensor) -> Result<Tensor, GanError> {
    let (n, l) = match real.shape() {
        [n, l] => (*n, *l),
        s => return Err(GanError::Shape(format!("real batch {s:?}"))),
    };
    if fake.shape() != real.shape() || delta.shape() != [n] {
        return Err(GanError::Shape(format!(
            "real {:?}, fake {:?}, delta {:?}",
            real.shape(),
            fake.shape(),
            delta.shape()
        )));
    }
    let d = delta.broadcast_cols(l);
    Ok(d.mul(real).add(&d.neg().add_scalar(1.0).mul(fake)))
}

/// Gradient penalty at the given points, recorded on the graph so it can be
/// differentiated with respect to the critic parameters.
pub struct PenaltyTerm {
    /// `γ · mean (‖∇D(x̂)‖ − 1)²`, scalar.
    pub penalty: Tensor,
    /// Per-row gradient norms.
    pub norms: Vec<f64>,
}

impl PenaltyTerm {
    pub fn mean_norm(&self) -> f64 {
        self.norms.iter().sum::<f64>() / self.norms.len().max(1) as f64
    }
}

pub fn gradient_penalty(critic: &dyn Critic, p: &Bound, points: &Tensor, gamma: f64) -> Result<PenaltyTerm, GanError> {
    let x = points.detach_requiring_grad();
    let scores = critic.score(p, &x)?;
    let grad = backward(&scores.sum(), &[&x], true)?.remove(0);
    let norms = grad.square().sum_cols().add_scalar(NORM_FLOOR).sqrt();
    let penalty = norms.add_scalar(-1.0).square().mean().scale(gamma);
    Ok(PenaltyTerm { norms: norms.to_vec(), penalty })
}

/// Critic objective and its parts for one batch.
pub struct CriticLossParts {
    /// `mean D(fake) − mean D(real) + penalty`, scalar.
    pub loss: Tensor,
    /// `mean D(real) − mean D(fake)`.
    pub wasserstein: f64,
    pub penalty: f64,
    pub mean_grad_norm: f64,
}

pub fn critic_loss(
    critic: &dyn Critic,
    p: &Bound,
    real: &Tensor,
    fake: &Tensor,
    delta: &Tensor,
    gamma: f64,
) -> Result<CriticLossParts, GanError> {
    let fake = fake.detach();
    let xhat = interpolate(&real.detach(), &fake, delta)?;
    let d_real = critic.score(p, real)?.mean();
    let d_fake = critic.score(p, &fake)?.mean();
    let gp = gradient_penalty(critic, p, &xhat, gamma)?;
    let loss = d_fake.sub(&d_real).add(&gp.penalty);
    Ok(CriticLossParts {
        wasserstein: d_real.item() - d_fake.item(),
        penalty: gp.penalty.item(),
        mean_grad_norm: gp.mean_norm(),
        loss,
    })
}

/// `−mean D(fake)`; bind the critic frozen so only the generator learns.
pub fn generator_loss(critic: &dyn Critic, frozen: &Bound, fake: &Tensor) -> Result<Tensor, GanError> {
    Ok(critic.score(frozen, fake)?.mean().neg())
}
