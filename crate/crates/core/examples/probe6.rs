use ndarray::Array1;
use sopspline_core::sim;
use sopspline_core::*;

fn main() {
    let data = sim::surface2d(2000, 0.1, 7);
    let x1 = Array1::from(data.x1.clone());
    let x2 = Array1::from(data.x2.clone());
    let y = Array1::from(data.y.clone());
    let model = SurfaceModel::build(
        x1.view(), x2.view(),
        BasisSpec::new(0.0, 1.0, 15, 3, 2),
        BasisSpec::new(0.0, 1.0, 15, 3, 2),
        AdaptiveSmoothSpec2d::new(8, 8, 8, 8),
    ).unwrap();
    let fit = model.fit(y.view(), None, &FitConfig { max_iter: 400, ..Default::default() }).unwrap();
    println!("iterations {} converged {}", fit.iterations, fit.converged);
    // at several checkpoints show ALL components with rel > 1e-6
    for t in [150usize, 250, 350, 399] {
        if t >= fit.trace.len() { continue; }
        let r = &fit.trace[t];
        let p = &fit.trace[t - 1];
        let mut movers = vec![];
        for l in 0..r.tau2.len() {
            let rel = (r.tau2[l] - p.tau2[l]).abs() / (p.tau2[l] + 1e-10);
            if rel > 1e-6 { movers.push((l, rel, r.tau2[l], r.ed[l])); }
        }
        movers.sort_by(|a, b| b.1.total_cmp(&a.1));
        println!("it {t}: {} movers, top:", movers.len());
        for (l, rel, tau, ed) in movers.iter().take(4) {
            println!("   comp {l:3} rel {rel:9.2e} tau {tau:10.3e} ed {ed:9.2e}");
        }
    }
}
