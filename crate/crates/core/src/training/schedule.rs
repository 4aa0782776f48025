/// Linear warmup from 0 to `base_lr`, then cosine decay to 0 at `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, warmup_steps: usize, base_lr: f64) -> f64 {
    let step = step.min(total_steps);
    if step < warmup_steps {
        return base_lr * step as f64 / warmup_steps as f64;
    }
    let span = total_steps.saturating_sub(warmup_steps);
    if span == 0 {
        return base_lr;
    }
    let progress = (step - warmup_steps) as f64 / span as f64;
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::lr_at;

    #[test]
    fn endpoints() {
        assert_eq!(lr_at(0, 100, 10, 0.3), 0.0);
        assert!((lr_at(1, 100, 10, 0.3) - 0.03).abs() < 1e-15);
        assert_eq!(lr_at(10, 100, 10, 0.3), 0.3);
        assert!(lr_at(100, 100, 10, 0.3).abs() < 1e-12);
        assert!((lr_at(55, 100, 10, 0.3) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn no_warmup() {
        assert_eq!(lr_at(0, 10, 0, 1.0), 1.0);
        assert!(lr_at(10, 10, 0, 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_after_warmup() {
        let v: Vec<f64> = (10..=100).map(|s| lr_at(s, 100, 10, 1.0)).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
    }
}
