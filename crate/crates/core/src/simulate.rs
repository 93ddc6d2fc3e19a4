//! Full-order time marching with voltage-based termination.

use crate::assembly::Assembler;
use crate::error::{Error, Result};
use crate::mesh::PseudoMesh;
use crate::newton::{newton_solve, LinearLayout, NewtonOptions};
use crate::params::{CellConfig, ParameterPoint};
use crate::state::{Fields, State, Termination, Trajectory};

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Uniform time step.
    pub dtau: f64,
    /// End of the time interval.
    pub t_end: f64,
    /// Termination voltage checked on the cathode solid potential after
    /// every accepted step.
    pub e_min: f64,
    pub newton: NewtonOptions,
    /// Record all Newton iterates of every step (operator snapshots).
    pub record_stages: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dtau: 1e-2,
            t_end: 1.0,
            e_min: -0.2,
            newton: NewtonOptions::default(),
            record_stages: false,
        }
    }
}

/// Newton iterates of one accepted time step, initial guess first.
pub struct StageRecord {
    pub iterates: Vec<Fields>,
}

/// Output of a full-order simulation.
pub struct SimResult {
    pub trajectory: Trajectory,
    /// Per-step Newton iterates when stage recording was on; entry `t`
    /// belongs to the step from state `t` to state `t+1`.
    pub stages: Option<Vec<StageRecord>>,
    pub newton_iterations_total: usize,
}

/// March the full-order model from the equilibrium initial state.
pub fn simulate(
    mu: &ParameterPoint,
    config: &CellConfig,
    mesh: &PseudoMesh,
    opts: &SimOptions,
) -> Result<SimResult> {
    let assembler = Assembler::new(mesh, config)?;
    let layout = LinearLayout::new(&assembler);
    let initial = State::initial(mesh, config)?;

    let mut states = vec![initial];
    let mut stages = opts.record_stages.then(Vec::new);
    let mut iters_total = 0;
    let n_steps = (opts.t_end / opts.dtau).round() as usize;
    let mut reached_e_min = false;

    for step in 1..=n_steps {
        let tau = step as f64 * opts.dtau;
        // linear predictor from the last two states; the quasi-static
        // regimes at small charge rates need it to keep the iteration
        // counts flat
        let predictor = if states.len() >= 2 {
            let prev = &states[states.len() - 1].fields;
            let before = &states[states.len() - 2].fields;
            let mut g = prev.clone();
            g.axpy(1.0, prev);
            g.axpy(-1.0, before);
            Some(g)
        } else {
            None
        };
        let prev = &states.last().expect("nonempty").fields;
        let outcome = match newton_solve(
            &assembler,
            prev,
            predictor.as_ref(),
            mu,
            opts.dtau,
            &opts.newton,
            &layout,
            opts.record_stages,
            tau,
        ) {
            Ok(o) => o,
            Err(e) => {
                let partial = Trajectory {
                    states,
                    termination: Termination {
                        reached_e_min: false,
                        final_time: (step - 1) as f64 * opts.dtau,
                    },
                    parameter: *mu,
                    dtau: opts.dtau,
                };
                return Err(Error::StepFailed {
                    step,
                    tau,
                    source: Box::new(e),
                    partial: Box::new(partial),
                });
            }
        };
        iters_total += outcome.iterations;
        if let (Some(list), Some(iterates)) = (stages.as_mut(), outcome.iterates) {
            list.push(StageRecord { iterates });
        }
        let state = State {
            fields: outcome.fields,
            time: tau,
        };
        let stop = state.min_cathode_phi_s(mesh) <= opts.e_min;
        states.push(state);
        if stop {
            reached_e_min = true;
            break;
        }
    }

    let final_time = states.last().expect("nonempty").time;
    Ok(SimResult {
        trajectory: Trajectory {
            states,
            termination: Termination {
                reached_e_min,
                final_time,
            },
            parameter: *mu,
            dtau: opts.dtau,
        },
        stages,
        newton_iterations_total: iters_total,
    })
}
