//! The comparison algorithm's virtual-queue structure: an epsilon-persistent
//! service queue that replaces the delay virtual queue in the drop decision
//! and (by default) in the link weights.

/// One step of the persistent-service queue. The queue drains by realized
/// service and drops, floors at zero, and then receives the persistent
/// increment. With `gated` the increment lands only while the actual data
/// queue is nonempty; ungated it lands every slot.
pub fn update_baseline_queue(
    zp: f64,
    q: f64,
    mu_hat_out: f64,
    d_hat: f64,
    epsilon: f64,
    gated: bool,
) -> f64 {
    let drained = (zp - mu_hat_out - d_hat).max(0.0);
    if !gated || q > 0.0 {
        drained + epsilon
    } else {
        drained
    }
}
