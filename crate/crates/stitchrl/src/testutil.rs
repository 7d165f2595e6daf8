//! Shared scripted policies for tests: crafted linear Gaussian heads with
//! near-deterministic behavior on the hurdle observation layout
//! `(y, vx, vy, d_start, d_end)`.

use crate::nn::{Activation, GaussianPolicy, MlpNet};

/// Sprint right at full throttle. With `jumper`, also jump once the near
/// edge of the next hurdle is within ~0.6.
pub fn scripted_hurdle_policy(jumper: bool) -> GaussianPolicy {
    let mut net = MlpNet::zeros(&[5, 2], Activation::Tanh).unwrap();
    // Row-major (2 x 5) weights then biases.
    let p = net.params_mut();
    p[10] = 2.0; // a_x bias: full throttle (clamped to 1)
    if jumper {
        p[8] = -3.5; // a_y weight on d_start
        p[11] = 2.6; // a_y bias: a_y > 0.5 once d_start < 0.6
    } else {
        p[11] = -2.0; // never jump
    }
    GaussianPolicy::from_parts(net, vec![-3.0, -3.0]).unwrap()
}
