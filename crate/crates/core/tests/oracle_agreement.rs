use massact::fronthaul::{qf_output_step, UniformQuantizer};
use massact::inference::bg_denoiser;
use massact::inference::messages::{activity_llr, smooth_chain, ChainMessages};
use massact::oracle::{bg_posterior_numeric, exact_chain_smoother, qf_posterior_numeric};
use massact::special::sigmoid;
use massact::traffic::ChainParams;
use num_complex::Complex64;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn bg_denoiser_matches_quadrature() {
    let mut worst = 0.0f64;
    for &g in &[1e-3f64, 0.1, 1.0, 30.0] {
        for &nu_r in &[1e-4, 0.01, 1.0, 10.0] {
            for &phi in &[0.01, 0.05, 0.5, 0.95] {
                for &mag in &[0.0f64, 0.1, 1.0, 4.0] {
                    let r = Complex64::from_polar(mag * (g + nu_r).sqrt(), 0.7);
                    let d = bg_denoiser(r, nu_r, g, phi);
                    let o = bg_posterior_numeric(r, nu_r, g, phi);
                    let scale = (g + nu_r).sqrt();
                    worst = worst
                        .max((d.active - o.active).abs())
                        .max((d.x_hat - o.x_hat).norm() / scale)
                        .max((d.nu_x - o.nu_x).abs() / (g + nu_r));
                }
            }
        }
    }
    assert!(worst < 1e-6, "worst deviation {worst:e}");
}

#[test]
fn qf_output_step_matches_quadrature() {
    let q = UniformQuantizer::with_range(3, 3.0).unwrap();
    let mut worst = 0.0f64;
    for &nu_p in &[1e-3f64, 0.1, 1.0, 5.0] {
        for &sigma2 in &[1e-3, 0.1, 1.0] {
            for &pr in &[-6.0, -1.3, 0.0, 0.4, 2.9, 8.0] {
                for y in [
                    Complex64::new(-4.0, 0.2),
                    Complex64::new(0.1, 2.5),
                    Complex64::new(3.5, -3.5),
                ] {
                    let bin = q.complex_bin(y);
                    let p = Complex64::new(pr, -0.5 * pr);
                    let (z, v) = qf_output_step(p, nu_p, &bin, sigma2);
                    let (zo, vo) = qf_posterior_numeric(p, nu_p, &bin, sigma2);
                    let scale = nu_p.sqrt();
                    worst = worst
                        .max((z - zo).norm() / scale)
                        .max((v - vo).abs() / nu_p);
                }
            }
        }
    }
    assert!(worst < 1e-6, "worst deviation {worst:e}");
}

#[test]
fn chain_smoother_matches_enumeration() {
    let chain = ChainParams::from_steady_state(0.1, 0.9).unwrap();
    let ratios = [0.3, 5.0, 0.02, 1.0, 40.0, 0.7, 2.0];
    let exact = exact_chain_smoother(&ratios, &chain).unwrap();
    let pi_left: Vec<f64> = ratios.iter().map(|r| r / (1.0 + r)).collect();
    let mut m = ChainMessages::default();
    smooth_chain(&pi_left, &chain, chain.p_a, 0.0, &mut m);
    for t in 0..ratios.len() {
        let post = sigmoid(activity_llr(pi_left[t], m.psi_right[t], m.varphi_right[t]));
        assert!(
            rel(post, exact[t]) < 1e-10,
            "frame {t}: {post} vs {}",
            exact[t]
        );
    }
}
