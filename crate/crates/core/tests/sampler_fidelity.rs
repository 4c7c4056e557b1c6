use spdt_core::analysis::{self, Histogram};
use spdt_core::distributions::{
    bounded_mixture_degree_pmf, ActivationDegree, BoundedPowerLaw, Geometric, TruncatedGeometric,
};
use spdt_core::generator::{activation_potential, generate_timeline, synthesize_graph, BadnModel};
use spdt_core::{RandomSource, SpdtParams, StepParams};

const DRAWS: usize = 1_000_000;

fn sp() -> StepParams {
    SpdtParams::paper_fitted().per_step().unwrap()
}

fn hist_rse(xs: &[u64], lo: u64, pmf: impl Fn(u64) -> f64) -> f64 {
    let obs = Histogram::auto(xs, lo);
    let reference = Histogram::from_pmf(pmf, lo, obs.cap);
    analysis::rse(&obs.proportions, &reference.proportions).unwrap()
}

fn draws(seed: u64, mut f: impl FnMut(&mut RandomSource) -> u64) -> Vec<u64> {
    let mut rng = RandomSource::new(seed, 0);
    (0..DRAWS).map(|_| f(&mut rng)).collect()
}

#[test]
fn geometric_laws_match_pmf() {
    let sp = sp();
    for (seed, p) in [(1, sp.rho), (2, sp.q), (3, sp.p_b)] {
        let law = Geometric::new(p).unwrap();
        let xs = draws(seed, |r| law.sample(r));
        let e = hist_rse(&xs, 1, |t| law.pmf(t));
        assert!(e <= 0.01, "p={p}: rse {e}");
        let mean = xs.iter().sum::<u64>() as f64 / xs.len() as f64;
        assert!((mean * p - 1.0).abs() < 0.01, "p={p}: mean {mean}");
    }
}

#[test]
fn degree_mixture_matches_pmf() {
    let sp = sp();
    let lambda = BoundedPowerLaw::new(sp.alpha, sp.xi, sp.psi).unwrap();
    let xs = draws(4, |r| {
        let l = lambda.sample(r);
        ActivationDegree::new(l).unwrap().sample(r)
    });
    let e = hist_rse(&xs, 1, |d| bounded_mixture_degree_pmf(d, sp.alpha, sp.xi, sp.psi).unwrap());
    assert!(e <= 0.01, "rse {e}");
}

#[test]
fn creation_delay_matches_pmf() {
    let sp = sp();
    let delta = u64::from(sp.delta_steps);
    for ta in [1u64, 12, 40] {
        let law = TruncatedGeometric::new(sp.p_c, ta + delta).unwrap();
        let xs = draws(5 + ta, |r| law.sample(r));
        assert!(xs.iter().all(|&x| x <= ta + delta));
        let e = hist_rse(&xs, 0, |t| law.pmf(t));
        assert!(e <= 0.01, "ta={ta}: rse {e}");
    }
}

#[test]
fn lambda_mean_matches_law() {
    let sp = sp();
    let law = BoundedPowerLaw::new(sp.alpha, sp.xi, sp.psi).unwrap();
    let mut rng = RandomSource::new(6, 0);
    let mean = (0..DRAWS).map(|_| law.sample(&mut rng)).sum::<f64>() / DRAWS as f64;
    assert!((mean / law.mean() - 1.0).abs() < 0.005, "{mean} vs {}", law.mean());
}

#[test]
fn single_node_occupancy() {
    let sp = sp();
    let mut rng = RandomSource::new(7, 0);
    let tl = generate_timeline(0, &sp, 1_000_000, &mut rng).unwrap();
    let frac = tl.active_steps() as f64 / 1e6;
    assert!((sp.active_fraction() - 0.0730).abs() < 5e-4);
    assert!((frac - sp.active_fraction()).abs() < 0.005, "occupancy {frac}");
}

#[test]
fn activation_frequency_per_day() {
    let sp = sp();
    let mut rng = RandomSource::new(8, 0);
    let days = 70;
    let n = 20_000;
    let total: usize = (0..n)
        .map(|node| {
            generate_timeline(node, &sp, days * 288, &mut rng)
                .unwrap()
                .active_intervals()
                .len()
        })
        .sum();
    let per_day = total as f64 / f64::from(n) / f64::from(days);
    let derived = 288.0 * sp.q * sp.rho / (sp.q + sp.rho);
    assert!((derived - 1.79).abs() < 0.01);
    assert!((per_day / derived - 1.0).abs() < 0.01, "{per_day} vs {derived}");
}

#[test]
fn badn_activation_density() {
    let p = activation_potential(3.0, 50.0);
    let model = BadnModel::new(5_000, p, 2, 288 * 2, 300, 9).unwrap();
    let g = model.materialize();
    g.validate().unwrap();
    let rate = g.copies.len() as f64 / (5_000.0 * 576.0);
    assert!((rate / p - 1.0).abs() < 0.01, "{rate} vs {p}");
    assert_eq!(g.links.len(), 2 * g.copies.len());
    for pair in g.links.chunks(2) {
        assert_ne!(pair[0].neighbor, pair[1].neighbor);
        assert_ne!(pair[0].neighbor, g.copy_of(&pair[0]).host);
    }
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

#[test]
fn synthetic_graph_shape() {
    let params = SpdtParams::paper_fitted();
    let sp = params.per_step().unwrap();
    let g = synthesize_graph(&params, 20_000, 7 * 288, 10).unwrap();
    let lambdas = g.lambdas.clone().unwrap();
    let mut out = vec![0.0; g.n_nodes as usize];
    for l in &g.links {
        out[g.copy_of(l).host as usize] += 1.0;
    }
    let rho_s = analysis::pearson(&ranks(&out), &ranks(&lambdas)).unwrap();
    assert!(rho_s > 0.0, "spearman {rho_s}");

    // p_b = rho: links last as long as active periods on average.
    let mean_link = g.links.iter().map(|l| f64::from(l.duration())).sum::<f64>() / g.links.len() as f64;
    assert!((mean_link * sp.p_b - 1.0).abs() < 0.01, "mean link duration {mean_link}");
    let interior: Vec<f64> = g
        .copies
        .iter()
        .filter(|c| c.t_s > 0 && c.t_l < g.horizon)
        .map(|c| f64::from(c.duration()))
        .collect();
    let mean_active = interior.iter().sum::<f64>() / interior.len() as f64;
    assert!((mean_link / mean_active - 1.0).abs() < 0.02, "{mean_link} vs {mean_active}");
}

#[test]
fn synthetic_cip_marginals_follow_model_laws() {
    let params = SpdtParams::paper_fitted();
    let g = synthesize_graph(&params, 126_000, 7 * 288, 11).unwrap();
    let fits = analysis::cip_marginal_rse(&g, &params.per_step().unwrap()).unwrap();
    assert_eq!(fits.len(), 5);
    for f in fits {
        assert!(f.rse <= 0.05, "{}: {}", f.name, f.rse);
    }
}
