use plgame_core::problem::DirectionSearch;
use plgame_core::*;

fn main() {
    let eps = 0.1;
    let p = 1.5;
    let dom = DomainSpec::ball(2, &[0.0, 0.0], 1.0, eps).unwrap();
    let params = KernelParams::new(2, p, eps).unwrap();

    for (name, f, g) in [
        ("linear", ScalarField::Zero, ScalarField::Linear([0.7, -0.3, 0.0])),
        (
            "quadratic",
            ScalarField::Constant(-(2.0 + p - 2.0) / (2.0 + p)),
            ScalarField::SquaredNorm,
        ),
    ] {
        let t0 = std::time::Instant::now();
        let problem = DppProblem::new(dom, params, f, g.clone(), eps / 8.0)
            .unwrap()
            .with_tol(5e-10)
            .with_loose_stop()
            .with_search(DirectionSearch { coarse: 64, refine_tol: 1e-8, ring: 4096 });
        let report = solve(&problem).unwrap();
        let mut worst = 0.0f64;
        for &i in &report.interior {
            let x = report.solution.node_position(i);
            let exact = g.eval(&x[..2]);
            worst = worst.max((report.solution.value(i) - exact).abs());
        }
        println!(
            "{name}: {} nodes, {} iters, res {:.2e}, sup err {:.3e}, monotone {}, bound {}, dip {:.2e}, {:.1}s",
            report.interior.len(),
            report.iterations,
            report.final_residual,
            worst,
            report.monotone_ok,
            report.apriori_bound_ok,
            report.worst_signed_residual,
            t0.elapsed().as_secs_f64()
        );
    }
}
