use super::spring::StorySprings;
use super::tridiag::TridiagSolver;
use super::{damping_matrix, IntegratorParams, ResponseHistory};
use crate::ground_motion::GroundMotion;
use crate::structure::{assemble_matrices, match_period, model_periods, LumpedMassModel, SymTridiag};
use crate::{Error, Result};

pub const NEWTON_MAX_ITERS: usize = 50;
const NEWTON_RTOL: f64 = 1e-8;
const NEWTON_ATOL: f64 = 1e-12;

/// Relative displacement, velocity and acceleration of every floor.
#[derive(Debug, Clone, PartialEq)]
pub struct NewmarkState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl NewmarkState {
    pub fn zeros(n: usize) -> Self {
        Self {
            u: vec![0.0; n],
            v: vec![0.0; n],
            a: vec![0.0; n],
        }
    }
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `M + γΔt·C + βΔt²·K` for diagonal `M`.
fn effective_matrix(m: &[f64], c: &SymTridiag, k: &SymTridiag, p: &IntegratorParams) -> SymTridiag {
    let gc = p.gamma * p.dt;
    let bk = p.beta * p.dt * p.dt;
    SymTridiag {
        diag: (0..m.len()).map(|i| m[i] + gc * c.diag[i] + bk * k.diag[i]).collect(),
        off: (0..c.off.len()).map(|i| gc * c.off[i] + bk * k.off[i]).collect(),
    }
}

/// Displacement and velocity predictors, the parts of the step updates that
/// do not depend on the new acceleration.
fn predictors(s: &NewmarkState, p: &IntegratorParams) -> (Vec<f64>, Vec<f64>) {
    let dt = p.dt;
    let cu = dt * dt * (0.5 - p.beta);
    let cv = dt * (1.0 - p.gamma);
    let u = (0..s.u.len()).map(|i| s.u[i] + dt * s.v[i] + cu * s.a[i]).collect();
    let v = (0..s.v.len()).map(|i| s.v[i] + cv * s.a[i]).collect();
    (u, v)
}

fn correct(u_pred: &[f64], v_pred: &[f64], a1: Vec<f64>, p: &IntegratorParams) -> NewmarkState {
    let bu = p.beta * p.dt * p.dt;
    let gv = p.gamma * p.dt;
    NewmarkState {
        u: u_pred.iter().zip(&a1).map(|(u, a)| u + bu * a).collect(),
        v: v_pred.iter().zip(&a1).map(|(v, a)| v + gv * a).collect(),
        a: a1,
    }
}

fn step_linear(
    s: &NewmarkState,
    c: &SymTridiag,
    k: &SymTridiag,
    solver: &TridiagSolver,
    load: &[f64],
    p: &IntegratorParams,
) -> NewmarkState {
    let n = load.len();
    let (u_pred, v_pred) = predictors(s, p);
    let mut cv = vec![0.0; n];
    let mut ku = vec![0.0; n];
    c.mul_vec(&v_pred, &mut cv);
    k.mul_vec(&u_pred, &mut ku);
    let mut a1: Vec<f64> = (0..n).map(|i| load[i] - cv[i] - ku[i]).collect();
    solver.solve(&mut a1);
    correct(&u_pred, &v_pred, a1, p)
}

fn step_newton(
    s: &NewmarkState,
    m: &[f64],
    c: &SymTridiag,
    springs: &mut StorySprings,
    load: &[f64],
    p: &IntegratorParams,
) -> Result<NewmarkState> {
    let n = m.len();
    let (u_pred, v_pred) = predictors(s, p);
    let bu = p.beta * p.dt * p.dt;
    let gv = p.gamma * p.dt;
    let load_norm = inf_norm(load);

    let mut a1 = s.a.clone();
    let mut u1 = vec![0.0; n];
    let mut v1 = vec![0.0; n];
    let mut force = vec![0.0; n];
    let mut kt = vec![0.0; n];
    let mut cv = vec![0.0; n];
    let mut resid = vec![0.0; n];
    for iter in 0..=NEWTON_MAX_ITERS {
        for i in 0..n {
            u1[i] = u_pred[i] + bu * a1[i];
            v1[i] = v_pred[i] + gv * a1[i];
        }
        springs.evaluate(&u1, &mut force, &mut kt);
        c.mul_vec(&v1, &mut cv);
        let mut inertia = 0.0f64;
        for i in 0..n {
            let ma = m[i] * a1[i];
            inertia = inertia.max(ma.abs());
            resid[i] = ma + cv[i] + force[i] - load[i];
        }
        let scale = load_norm.max(inertia).max(inf_norm(&force));
        if inf_norm(&resid) < NEWTON_RTOL * scale + NEWTON_ATOL {
            springs.commit(&u1);
            return Ok(NewmarkState { u: u1, v: v1, a: a1 });
        }
        if iter == NEWTON_MAX_ITERS {
            break;
        }
        let tangent = SymTridiag::shear_building(&kt);
        let jac = effective_matrix(m, c, &tangent, p);
        let solver = TridiagSolver::new(&jac)?;
        for r in resid.iter_mut() {
            *r = -*r;
        }
        solver.solve(&mut resid);
        for i in 0..n {
            a1[i] += resid[i];
        }
    }
    Err(Error::numerical(
        "Newton iteration on the Newmark step did not converge",
        NEWTON_MAX_ITERS,
    ))
}

/// Advances `state` by one step under floor loads `load`. Linear springs
/// are solved directly from the effective-mass system; hysteretic springs
/// by Newton iteration, committing their plastic state on success.
pub fn newmark_step(
    state: &NewmarkState,
    masses: &[f64],
    c: &SymTridiag,
    springs: &mut StorySprings,
    load: &[f64],
    p: &IntegratorParams,
) -> Result<NewmarkState> {
    p.validate()?;
    let n = masses.len();
    if [
        state.u.len(),
        state.v.len(),
        state.a.len(),
        load.len(),
        c.n(),
        springs.laws().len(),
    ]
    .iter()
    .any(|&l| l != n)
    {
        return Err(Error::config("newmark_step: inconsistent vector lengths"));
    }
    let all_linear = springs.laws().iter().all(|l| l.u_yield.is_infinite());
    if all_linear {
        let ks: Vec<f64> = springs.laws().iter().map(|l| l.k).collect();
        let k = SymTridiag::shear_building(&ks);
        let solver = TridiagSolver::new(&effective_matrix(masses, c, &k, p))?;
        Ok(step_linear(state, c, &k, &solver, load, p))
    } else {
        step_newton(state, masses, c, springs, load, p)
    }
}

/// Response of `model` to ground acceleration `gm`, starting at rest.
/// Stored accelerations are absolute (relative plus ground).
pub fn simulate(model: &LumpedMassModel, gm: &GroundMotion, p: &IntegratorParams) -> Result<ResponseHistory> {
    model.validate()?;
    p.validate()?;
    if (gm.dt() - p.dt).abs() > 1e-12 * p.dt {
        return Err(Error::config(format!(
            "motion dt {} differs from integrator dt {}; resample the motion first",
            gm.dt(),
            p.dt
        )));
    }
    let (m, k) = assemble_matrices(model);
    let c = damping_matrix(model, &k)?;
    let n = model.n_stories();
    let ag = gm.samples();
    let steps = ag.len();
    let mut hist = ResponseHistory::zeros(n, steps, p.dt);

    let mut state = NewmarkState::zeros(n);
    // at rest, M·a0 = G0
    for i in 0..n {
        state.a[i] = -ag[0];
    }
    hist.record(0, &state, ag[0]);

    let mut load = vec![0.0; n];
    let fill_load = |t: usize, load: &mut [f64]| {
        for i in 0..n {
            load[i] = -m[i] * ag[t];
        }
    };
    if model.is_linear() {
        let solver = TridiagSolver::new(&effective_matrix(&m, &c, &k, p))?;
        for t in 1..steps {
            fill_load(t, &mut load);
            state = step_linear(&state, &c, &k, &solver, &load, p);
            hist.record(t, &state, ag[t]);
        }
    } else {
        let mut springs = StorySprings::from_model(model)?;
        for t in 1..steps {
            fill_load(t, &mut load);
            state = step_newton(&state, &m, &c, &mut springs, &load, p).map_err(|e| match e {
                Error::Numerical { message, iterations } => {
                    Error::numerical(format!("{message} at step {t}"), iterations)
                }
                other => other,
            })?;
            hist.record(t, &state, ag[t]);
        }
    }
    if !hist.is_finite() {
        return Err(Error::numerical("response became non-finite", steps));
    }
    Ok(hist)
}

/// Simplified response: the linearized model, period-matched to the
/// model's own elastic fundamental period.
pub fn sdr_response(model: &LumpedMassModel, gm: &GroundMotion, p: &IntegratorParams) -> Result<ResponseHistory> {
    let t_ref = model_periods(model)?.t1;
    sdr_response_matched(model, t_ref, gm, p)
}

/// Simplified response of `simplified` after rescaling its stiffness so its
/// fundamental period equals `t_ref`.
pub fn sdr_response_matched(
    simplified: &LumpedMassModel,
    t_ref: f64,
    gm: &GroundMotion,
    p: &IntegratorParams,
) -> Result<ResponseHistory> {
    let matched = match_period(&simplified.linearized(), t_ref)?;
    simulate(&matched, gm, p)
}
