//! The numeric core on its own: an MLP fitted to sin(x) with Adam.
//!
//! `cargo run --example mlp_adam`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crowdnav::numeric::{Activation, AdamState, Matrix, Mlp};

fn main() -> crowdnav::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = Mlp::new(1, &[32, 32, 1], Activation::Identity, &mut rng);
    let mut adam = AdamState::new(&net);

    for step in 0..=2000 {
        let xs: Vec<f64> = (0..64).map(|_| rng.random_range(-3.0..3.0)).collect();
        let input = Matrix::from_vec(xs.len(), 1, xs.clone())?;
        let (out, cache) = net.forward_batch(&input)?;
        let n = xs.len() as f64;
        let residual: Vec<f64> = xs.iter().zip(out.as_slice()).map(|(x, y)| y - x.sin()).collect();
        let grad = Matrix::from_vec(xs.len(), 1, residual.iter().map(|r| 2.0 * r / n).collect())?;
        let mut grads = net.zeros_like();
        net.backward_batch(&cache, &grad, &mut grads)?;
        adam.step(&mut net, &grads, 0.005)?;
        if step % 500 == 0 {
            println!("step {step:4}: mse {:.5}", residual.iter().map(|r| r * r).sum::<f64>() / n);
        }
    }
    for x in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        println!("f({x:+.1}) = {:+.3}   sin = {:+.3}", net.forward(&[x])?.0[0], f64::sin(x));
    }
    Ok(())
}
