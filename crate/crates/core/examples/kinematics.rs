//! Forward kinematics, the Jacobian and damped least-squares IK on the
//! 7-joint limb.

use motion_stack::kin::{forward_kinematics, inverse_kinematics, jacobian, IkMask, IkOptions, Pose};
use motion_stack::model::presets;
use nalgebra::Vector3;

fn main() -> anyhow::Result<()> {
    let desc = presets::minimal();
    let chain = desc.chain("limb1").expect("limb chain");
    let q = [0.3, 0.6, -0.2, 0.9, 0.1, 0.4, 0.0];
    let tip = forward_kinematics(chain, &q)?;
    println!("tip at {:.4?}, reach {:.2} m", tip.position.as_slice(), chain.reach());

    let jac = jacobian(chain, &q)?;
    println!("jacobian {}x{}, rank {}", jac.nrows(), jac.ncols(), jac.clone().svd(false, false).rank(1e-9));

    let seed = [0.0, 0.3, 0.0, 0.5, 0.0, 0.2, 0.0];
    let sol = inverse_kinematics(chain, &tip, &seed, &IkOptions::default())?;
    println!(
        "full-pose IK: {} iterations, error {:.2e} m / {:.2e} rad",
        sol.iterations, sol.position_error, sol.rotation_error
    );

    let point = IkOptions {
        mask: IkMask::Position,
        ..IkOptions::default()
    };
    let target = Pose::new(Vector3::new(0.6, 0.4, 0.5), Default::default());
    let sol = inverse_kinematics(chain, &target, &seed, &point)?;
    println!("position-only IK to (0.6, 0.4, 0.5): q = {:.3?}", sol.q.0);

    let far = Pose::new(Vector3::new(1.6, 0.0, 0.0), Default::default());
    println!("1.6 m away: {}", inverse_kinematics(chain, &far, &seed, &point).unwrap_err());
    Ok(())
}
