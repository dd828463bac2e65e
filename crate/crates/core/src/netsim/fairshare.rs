//! Max-min fair rate allocation by progressive filling.

/// One participant in the allocation: the resources it crosses and an
/// optional demand ceiling (used by constant-rate cross traffic).
#[derive(Debug, Clone, PartialEq)]
pub struct Demand {
    pub resources: Vec<usize>,
    pub ceiling: Option<f64>,
}

const EPS: f64 = 1e-9;

/// Water-filling over `capacities`. A participant that crosses no resource
/// and has no ceiling gets `f64::INFINITY`.
pub fn max_min_rates(capacities: &[f64], demands: &[Demand]) -> Vec<f64> {
    let n = demands.len();
    let mut rates = vec![0.0; n];
    let mut frozen = vec![false; n];
    let mut residual = capacities.to_vec();

    for (i, d) in demands.iter().enumerate() {
        if d.resources.is_empty() {
            rates[i] = d.ceiling.map_or(f64::INFINITY, |c| c.max(0.0));
            frozen[i] = true;
        } else if d.ceiling.is_some_and(|c| c <= 0.0) {
            frozen[i] = true;
        }
    }

    loop {
        let mut users = vec![0usize; residual.len()];
        let mut any = false;
        for (i, d) in demands.iter().enumerate() {
            if !frozen[i] {
                any = true;
                for &r in &d.resources {
                    users[r] += 1;
                }
            }
        }
        if !any {
            break;
        }

        let mut step = f64::INFINITY;
        for (r, &k) in users.iter().enumerate() {
            if k > 0 {
                step = step.min(residual[r].max(0.0) / k as f64);
            }
        }
        for (i, d) in demands.iter().enumerate() {
            if let (false, Some(c)) = (frozen[i], d.ceiling) {
                step = step.min(c - rates[i]);
            }
        }
        let step = step.max(0.0);

        for (i, d) in demands.iter().enumerate() {
            if !frozen[i] {
                rates[i] += step;
                for &r in &d.resources {
                    residual[r] -= step;
                }
            }
        }

        let saturated: Vec<bool> = residual
            .iter()
            .zip(capacities)
            .zip(&users)
            .map(|((&left, &cap), &k)| k > 0 && left <= EPS * cap.max(1.0))
            .collect();
        let mut progressed = false;
        for (i, d) in demands.iter().enumerate() {
            if frozen[i] {
                continue;
            }
            let capped = d.ceiling.is_some_and(|c| c - rates[i] <= EPS * c.max(1.0));
            if capped || d.resources.iter().any(|&r| saturated[r]) {
                frozen[i] = true;
                progressed = true;
            }
        }
        if !progressed {
            // Rounding left every candidate a hair above its threshold.
            for f in frozen.iter_mut() {
                *f = true;
            }
        }
    }
    rates
}
