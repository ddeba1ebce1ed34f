use plgame_core::problem::DirectionSearch;
use plgame_core::*;

fn main() {
    let p = 1.5;
    // radial solution |x|^beta with beta = (p-N)/(p-1) = -1 at N=2, p=1.5
    let g = ScalarField::RadialPower(-1.0);
    for eps in [0.2, 0.1, 0.05] {
        let t0 = std::time::Instant::now();
        let dom = DomainSpec::annulus(2, &[0.0, 0.0], 0.5, 1.0, eps).unwrap();
        let params = KernelParams::new(2, p, eps).unwrap();
        let problem = DppProblem::new(dom, params, ScalarField::Zero, g.clone(), eps / 8.0)
            .unwrap()
            .with_tol(1e-9)
            .with_loose_stop()
            .with_search(DirectionSearch { coarse: 64, refine_tol: 1e-8, ring: 4096 });
        let report = solve(&problem).unwrap();
        let mut worst = 0.0f64;
        let mut worst_all = 0.0f64;
        for &i in &report.interior {
            let x = report.solution.node_position(i);
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let err = (report.solution.value(i) - 1.0 / r).abs();
            worst_all = worst_all.max(err);
            if r >= 0.5 + 0.125 && r <= 1.0 - 0.125 {
                worst = worst.max(err);
            }
        }
        println!(
            "eps {eps}: {} nodes, {} iters, half-annulus sup err {:.4e} (full {:.3e}), monotone {}, {:.0}s",
            report.interior.len(),
            report.iterations,
            worst,
            worst_all,
            report.monotone_ok,
            t0.elapsed().as_secs_f64()
        );
    }
}
