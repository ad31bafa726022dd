/// Logistic function, evaluated without overflow for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit: returns `(loss, dloss/dlogit)`.
///
/// `loss = max(z, 0) - z·t + ln(1 + e^{-|z|})`, gradient `σ(z) - t`.
pub fn bce_with_logits(logit: f64, target: f64) -> (f64, f64) {
    let loss = logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - target)
}

/// Cross-entropy of a probability score against a 0/1 target. Scores of
/// exactly 0 or 1 are pulled in by 1e-12 so the loss stays finite.
pub fn bce_from_probability(score: f64, target: u8) -> f64 {
    const EDGE: f64 = 1e-12;
    let p = score.clamp(EDGE, 1.0 - EDGE);
    if target == 1 {
        -p.ln()
    } else {
        -(-p).ln_1p()
    }
}
