//! Benchmarks live in `benches/`; this crate exports fixtures they share.

use robinsync::algebra::CouplingSpec;
use robinsync::nalgebra::DMatrix;
use robinsync::sim::{BoxDomain, State, SystemInstance};

/// Symmetric coupling with `n` components, full control.
pub fn coupled_system(n: usize, domain: BoxDomain) -> SystemInstance {
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 1.0 / (1 + i + j) as f64 });
    let b = DMatrix::from_fn(n, n, |i, j| if i == j { 0.5 } else { 0.0 });
    let c = CouplingSpec::new(a, b, DMatrix::identity(n, n)).expect("valid coupling");
    SystemInstance::new(c, domain).expect("valid system")
}

pub fn smooth_state(sys: &SystemInstance) -> State {
    let lengths = sys.domain.lengths().to_vec();
    State::from_fn(
        &sys.domain,
        sys.n(),
        move |k, x| {
            x.iter()
                .zip(&lengths)
                .map(|(xa, l)| (std::f64::consts::PI * xa / l).sin())
                .product::<f64>()
                / (k + 1) as f64
        },
        |_, _| 0.0,
    )
}
