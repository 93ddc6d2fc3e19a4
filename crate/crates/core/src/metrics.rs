//! The model-reduction error metric: relative l2-in-space, l2-in-time
//! error of a full-order trajectory against a reconstructed reduced one,
//! normalized by the reduced solution.

use crate::error::{Error, Result};
use crate::state::Trajectory;

/// `||u_h - u_rom||_2 / ||u_rom||_2` over the space-time concatenation of
/// all four components. Trajectories that terminated at different steps
/// are truncated to the common length.
pub fn relative_l2l2_error(fom: &Trajectory, rom: &Trajectory) -> Result<f64> {
    let steps = fom.len().min(rom.len());
    if steps == 0 {
        return Err(Error::Dimension("empty trajectory".into()));
    }
    let mut diff_sq = 0.0;
    let mut ref_sq = 0.0;
    for t in 0..steps {
        let a = &fom.states[t].fields;
        let b = &rom.states[t].fields;
        if a.len() != b.len() {
            return Err(Error::Dimension(format!(
                "state dimensions differ: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        for c in crate::mesh::Component::ALL {
            for (x, y) in a.component(c).iter().zip(b.component(c)) {
                diff_sq += (x - y) * (x - y);
                ref_sq += y * y;
            }
        }
    }
    if ref_sq == 0.0 {
        return Err(Error::Dimension(
            "zero reference trajectory in the error metric".into(),
        ));
    }
    Ok((diff_sq / ref_sq).sqrt())
}

/// The metric averaged over pairs of trajectories (one per test
/// parameter).
pub fn mean_relative_l2l2_error(pairs: &[(&Trajectory, &Trajectory)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Dimension("empty test set".into()));
    }
    let mut acc = 0.0;
    for (fom, rom) in pairs {
        acc += relative_l2l2_error(fom, rom)?;
    }
    Ok(acc / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{CellConfig, ParameterPoint, Region};
    use crate::state::{State, Termination};
    use crate::PseudoMesh;
    use approx::assert_abs_diff_eq;

    fn tiny_trajectory(scale: f64, steps: usize) -> (PseudoMesh, Trajectory) {
        let cfg = CellConfig::default();
        let mesh = PseudoMesh::build(
            3,
            3,
            [
                cfg.width_fraction(Region::Anode),
                cfg.width_fraction(Region::Separator),
                cfg.width_fraction(Region::Cathode),
            ],
        )
        .unwrap();
        let base = State::initial(&mesh, &cfg).unwrap();
        let states = (0..steps)
            .map(|t| {
                let mut s = base.clone();
                s.time = t as f64 * 0.01;
                for c in crate::mesh::Component::ALL {
                    for v in s.fields.component_mut(c) {
                        *v *= scale;
                    }
                }
                s
            })
            .collect();
        (
            mesh,
            Trajectory {
                states,
                termination: Termination {
                    reached_e_min: false,
                    final_time: (steps - 1) as f64 * 0.01,
                },
                parameter: ParameterPoint::default(),
                dtau: 0.01,
            },
        )
    }

    #[test]
    fn identical_trajectories_give_zero() {
        let (_, t) = tiny_trajectory(1.0, 5);
        assert_eq!(relative_l2l2_error(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn doubled_reference_gives_one_half() {
        let (_, fom) = tiny_trajectory(1.0, 5);
        let (_, rom) = tiny_trajectory(2.0, 5);
        assert_abs_diff_eq!(
            relative_l2l2_error(&fom, &rom).unwrap(),
            0.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn scale_invariance_and_truncation() {
        let (_, fom) = tiny_trajectory(1.1, 7);
        let (_, rom) = tiny_trajectory(1.0, 5);
        let e1 = relative_l2l2_error(&fom, &rom).unwrap();
        let (_, fom2) = tiny_trajectory(1.1 * 3.0, 7);
        let (_, rom2) = tiny_trajectory(3.0, 5);
        let e2 = relative_l2l2_error(&fom2, &rom2).unwrap();
        assert_abs_diff_eq!(e1, e2, epsilon = 1e-13);
    }

    #[test]
    fn zero_reference_rejected() {
        let (_, fom) = tiny_trajectory(1.0, 3);
        let (_, zero) = tiny_trajectory(0.0, 3);
        assert!(relative_l2l2_error(&fom, &zero).is_err());
    }
}
