//! One NUTS transition: iterative trajectory doubling with multinomial
//! candidate selection and the generalized no-U-turn criterion.

use rand::Rng;
use rand_distr::StandardNormal;

/// Energy errors beyond this mark a divergent trajectory.
const MAX_ENERGY_ERROR: f64 = 1000.0;

/// Gradient-evaluating target in unconstrained coordinates.
pub(crate) trait Potential {
    /// Log density at `q`, writing its gradient into `grad`.
    fn log_density(&self, q: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone)]
pub(crate) struct State {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl State {
    pub fn new<P: Potential>(target: &P, q: Vec<f64>) -> State {
        let mut grad = vec![0.0; q.len()];
        let logp = target.log_density(&q, &mut grad);
        State {
            p: vec![0.0; q.len()],
            q,
            grad,
            logp,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.logp.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }

    fn kinetic(&self, inv_mass: &[f64]) -> f64 {
        0.5 * self.p.iter().zip(inv_mass).map(|(p, m)| p * p * m).sum::<f64>()
    }

    pub fn energy(&self, inv_mass: &[f64]) -> f64 {
        -self.logp + self.kinetic(inv_mass)
    }

    fn p_sharp(&self, inv_mass: &[f64]) -> Vec<f64> {
        self.p.iter().zip(inv_mass).map(|(p, m)| p * m).collect()
    }

    pub fn resample_momentum<R: Rng + ?Sized>(&mut self, inv_mass: &[f64], rng: &mut R) {
        for (p, m) in self.p.iter_mut().zip(inv_mass) {
            let z: f64 = rng.sample(StandardNormal);
            *p = z / m.sqrt();
        }
    }
}

pub(crate) fn leapfrog<P: Potential>(target: &P, from: &State, eps: f64, inv_mass: &[f64]) -> State {
    let mut next = from.clone();
    for (p, g) in next.p.iter_mut().zip(&from.grad) {
        *p += 0.5 * eps * g;
    }
    for ((q, p), m) in next.q.iter_mut().zip(&next.p).zip(inv_mass) {
        *q += eps * m * p;
    }
    next.logp = target.log_density(&next.q, &mut next.grad);
    if !next.logp.is_finite() || next.logp.is_nan() {
        next.logp = f64::NEG_INFINITY;
    }
    for (p, g) in next.p.iter_mut().zip(&next.grad) {
        *p += 0.5 * eps * g;
    }
    next
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn no_u_turn(p_sharp_a: &[f64], p_sharp_b: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_a, rho) > 0.0 && dot(p_sharp_b, rho) > 0.0
}

/// A subtree in integration order: `begin` is the leaf adjacent to where
/// the subtree was grown from, `end` the farthest leaf.
struct Subtree {
    begin: State,
    end: State,
    proposal: State,
    log_sum_weight: f64,
    rho: Vec<f64>,
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct TransitionInfo {
    pub accept_stat: f64,
    pub n_leapfrog: usize,
    pub depth: usize,
    pub divergent: bool,
}

struct Builder<'a, P> {
    target: &'a P,
    inv_mass: &'a [f64],
    h0: f64,
    n_leapfrog: usize,
    sum_accept: f64,
    divergent: bool,
}

impl<P: Potential> Builder<'_, P> {
    /// Checks the U-turn criterion across the join of `a` then `b`.
    fn merged_ok(&self, a_begin: &State, a_end: &State, a_rho: &[f64], b: &Subtree) -> bool {
        let m = self.inv_mass;
        let rho: Vec<f64> = a_rho.iter().zip(&b.rho).map(|(x, y)| x + y).collect();
        if !no_u_turn(&a_begin.p_sharp(m), &b.end.p_sharp(m), &rho) {
            return false;
        }
        let ext: Vec<f64> = a_rho.iter().zip(&b.begin.p).map(|(x, y)| x + y).collect();
        if !no_u_turn(&a_begin.p_sharp(m), &b.begin.p_sharp(m), &ext) {
            return false;
        }
        let ext: Vec<f64> = b.rho.iter().zip(&a_end.p).map(|(x, y)| x + y).collect();
        no_u_turn(&a_end.p_sharp(m), &b.end.p_sharp(m), &ext)
    }

    fn build<R: Rng + ?Sized>(&mut self, from: &State, depth: usize, eps: f64, rng: &mut R) -> Option<Subtree> {
        if depth == 0 {
            let next = leapfrog(self.target, from, eps, self.inv_mass);
            self.n_leapfrog += 1;
            let h = next.energy(self.inv_mass);
            if !h.is_finite() || h - self.h0 > MAX_ENERGY_ERROR {
                self.divergent = true;
                return None;
            }
            let log_w = self.h0 - h;
            self.sum_accept += log_w.exp().min(1.0);
            return Some(Subtree {
                rho: next.p.clone(),
                begin: next.clone(),
                end: next.clone(),
                proposal: next,
                log_sum_weight: log_w,
            });
        }
        let first = self.build(from, depth - 1, eps, rng)?;
        let second = self.build(&first.end, depth - 1, eps, rng)?;
        if !self.merged_ok(&first.begin, &first.end, &first.rho, &second) {
            return None;
        }
        let log_sum_weight = log_add_exp(first.log_sum_weight, second.log_sum_weight);
        let take_second = rng.random::<f64>() < (second.log_sum_weight - log_sum_weight).exp();
        let rho = first.rho.iter().zip(&second.rho).map(|(x, y)| x + y).collect();
        Some(Subtree {
            begin: first.begin,
            end: second.end,
            proposal: if take_second { second.proposal } else { first.proposal },
            log_sum_weight,
            rho,
        })
    }
}

/// Advances `current` by one NUTS transition. `current.p` is resampled.
pub(crate) fn transition<P: Potential, R: Rng + ?Sized>(
    target: &P,
    current: &mut State,
    step_size: f64,
    inv_mass: &[f64],
    max_depth: usize,
    rng: &mut R,
) -> TransitionInfo {
    current.resample_momentum(inv_mass, rng);
    let h0 = current.energy(inv_mass);
    let mut builder = Builder {
        target,
        inv_mass,
        h0,
        n_leapfrog: 0,
        sum_accept: 0.0,
        divergent: false,
    };
    // physical ends of the trajectory
    let mut minus = current.clone();
    let mut plus = current.clone();
    let mut rho = current.p.clone();
    let mut log_sum_weight = 0.0;
    let mut proposal = current.clone();
    let mut depth = 0;

    while depth < max_depth {
        let forward = rng.random::<bool>();
        let (eps, start) = if forward { (step_size, &plus) } else { (-step_size, &minus) };
        let Some(sub) = builder.build(start, depth, eps, rng) else {
            break;
        };
        depth += 1;
        if sub.log_sum_weight > log_sum_weight
            || rng.random::<f64>() < (sub.log_sum_weight - log_sum_weight).exp()
        {
            proposal = sub.proposal.clone();
        }
        log_sum_weight = log_add_exp(log_sum_weight, sub.log_sum_weight);
        // the old tree in the direction of growth
        let (a_begin, a_end) = if forward { (&minus, &plus) } else { (&plus, &minus) };
        let ok = builder.merged_ok(a_begin, a_end, &rho, &sub);
        for (r, s) in rho.iter_mut().zip(&sub.rho) {
            *r += s;
        }
        if forward {
            plus = sub.end;
        } else {
            minus = sub.end;
        }
        if !ok {
            break;
        }
    }

    let n = builder.n_leapfrog.max(1);
    *current = proposal;
    TransitionInfo {
        accept_stat: builder.sum_accept / n as f64,
        n_leapfrog: builder.n_leapfrog,
        depth,
        divergent: builder.divergent,
    }
}

/// Doubles or halves the step size until a single leapfrog step crosses an
/// acceptance probability of 0.8.
pub(crate) fn find_reasonable_step_size<P: Potential, R: Rng + ?Sized>(
    target: &P,
    start: &State,
    initial: f64,
    inv_mass: &[f64],
    rng: &mut R,
) -> f64 {
    let threshold = 0.8f64.ln();
    let mut eps = initial;
    let energy_change = |eps: f64, rng: &mut R| {
        let mut z = start.clone();
        z.resample_momentum(inv_mass, rng);
        let h0 = z.energy(inv_mass);
        let h = leapfrog(target, &z, eps, inv_mass).energy(inv_mass);
        let h = if h.is_nan() { f64::INFINITY } else { h };
        h0 - h
    };
    let direction_up = energy_change(eps, rng) > threshold;
    for _ in 0..100 {
        let delta = energy_change(eps, rng);
        if direction_up && !(delta > threshold) {
            break;
        }
        if !direction_up && !(delta < threshold) {
            break;
        }
        eps = if direction_up { eps * 2.0 } else { eps * 0.5 };
        if !(eps > 1e-12 && eps < 1e7) {
            break;
        }
    }
    eps.clamp(1e-12, 1e7)
}
