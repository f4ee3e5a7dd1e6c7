//! Property tests over the model and transcription invariants.

use proptest::prelude::*;

use dengue_control::grid::{Grid, Scheme};
use dengue_control::model::{
    cost_integrand, dynamics, ControlVec, ModelParams, StateVec,
};
use dengue_control::simulate::{simulate, ControlSchedule};
use dengue_control::transcription::Layout;

fn state_strategy() -> impl Strategy<Value = StateVec> {
    prop::array::uniform5(-3.0f64..3.0).prop_map(StateVec)
}

fn control_strategy() -> impl Strategy<Value = ControlVec> {
    prop::array::uniform2(0.0f64..2.0).prop_map(ControlVec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// The origin is an equilibrium of the uncontrolled field at any time.
    #[test]
    fn origin_is_equilibrium(t in 0.0f64..104.0) {
        let f = dynamics(t, &StateVec::zeros(), &ControlVec::zeros(), &ModelParams::default());
        prop_assert_eq!(f, StateVec::zeros());
    }

    /// Scaling the cost weights by a power of two scales the integrand
    /// exactly; arbitrary positive factors scale it to rounding.
    #[test]
    fn cost_integrand_homogeneity(
        x in state_strategy(),
        u in control_strategy(),
        k in -3i32..6,
        c in 0.1f64..50.0,
    ) {
        let base = ModelParams::default();
        let pow2 = (2.0f64).powi(k);
        let scaled = ModelParams {
            gamma_d: pow2 * base.gamma_d,
            gamma_f: pow2 * base.gamma_f,
            gamma_e: pow2 * base.gamma_e,
            ..base
        };
        prop_assert_eq!(cost_integrand(&x, &u, &scaled), pow2 * cost_integrand(&x, &u, &base));

        let scaled = ModelParams {
            gamma_d: c * base.gamma_d,
            gamma_f: c * base.gamma_f,
            gamma_e: c * base.gamma_e,
            ..base
        };
        let lhs = cost_integrand(&x, &u, &scaled);
        let rhs = c * cost_integrand(&x, &u, &base);
        prop_assert!((lhs - rhs).abs() <= 1e-14 * rhs.abs().max(1.0));
    }

    /// The cost rate is nonnegative everywhere, so x5 cannot decrease
    /// along exact solutions.
    #[test]
    fn cost_rate_is_nonnegative(x in state_strategy(), u in control_strategy()) {
        prop_assert!(cost_integrand(&x, &u, &ModelParams::default()) >= 0.0);
    }

    /// Packing then unpacking restores states and controls bit for bit.
    #[test]
    fn pack_unpack_round_trip(
        states in prop::collection::vec(state_strategy(), 5),
        controls in prop::collection::vec(control_strategy(), 6),
        euler in any::<bool>(),
    ) {
        let scheme = if euler { Scheme::Euler } else { Scheme::Trapezoidal };
        let layout = Layout::new(scheme, 5);
        let controls = &controls[..scheme.control_nodes(5)];
        let z = layout.pack(&states, controls).unwrap();
        let (s, c) = layout.unpack(&z).unwrap();
        prop_assert_eq!(s, states);
        prop_assert_eq!(c, controls.to_vec());
    }

    /// Simulated accumulated cost is nondecreasing node to node for both
    /// schemes (up to Newton tolerance for the implicit one).
    #[test]
    fn simulated_cost_is_monotone(
        u1 in 0.0f64..0.05,
        u2 in 0.0f64..0.05,
        euler in any::<bool>(),
    ) {
        let scheme = if euler { Scheme::Euler } else { Scheme::Trapezoidal };
        let grid = Grid::new(10.0, 0.5).unwrap();
        let schedule = ControlSchedule::constant(grid, scheme, ControlVec::new(u1, u2));
        let traj = simulate(
            &schedule,
            scheme,
            dengue_control::model::default_initial_state(),
            &ModelParams::default(),
        )
        .unwrap();
        for w in traj.states.windows(2) {
            prop_assert!(w[1][4] >= w[0][4] - 1e-11, "{} -> {}", w[0][4], w[1][4]);
        }
    }

    /// Simulation is bit-for-bit deterministic.
    #[test]
    fn simulation_determinism(u1 in 0.0f64..0.05, euler in any::<bool>()) {
        let scheme = if euler { Scheme::Euler } else { Scheme::Trapezoidal };
        let grid = Grid::new(10.0, 0.25).unwrap();
        let schedule = ControlSchedule::constant(grid, scheme, ControlVec::new(u1, 0.01));
        let x0 = dengue_control::model::default_initial_state();
        let params = ModelParams::default();
        let a = simulate(&schedule, scheme, x0, &params).unwrap();
        let b = simulate(&schedule, scheme, x0, &params).unwrap();
        prop_assert_eq!(a, b);
    }
}
