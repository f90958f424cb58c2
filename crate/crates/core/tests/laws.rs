use strainwars_core::contact_process::{init_pair, init_single, init_split, run, Configuration, SimParams, Strain};
use strainwars_core::estimators::{
    coexistence_probability, empirical_distribution, exact_small_graph_distribution, survival_probability,
    total_variation, Experiment, Initial,
};
use strainwars_core::meanfield::{integrate, predict_winner, MeanFieldState, StrainParams, Verdict};
use strainwars_core::replicate::with_parallelism;
use strainwars_core::topology::{SiteId, Topology};

#[test]
fn two_strain_engine_matches_the_exact_law_on_a_path() {
    let path = Topology::path(3).unwrap();
    let init = init_pair(&path, SiteId(0), SiteId(2)).unwrap();
    let params = SimParams::new(1.5, 2.0, 1.0).with_deltas(1.0, 1.3);
    let exact = exact_small_graph_distribution(&path, &init, &params, 1.0).unwrap();
    let fixed = Initial::from(init);
    let exp = Experiment {
        topology: &path,
        init: &fixed,
        params: &params,
    };
    let finals: Vec<Configuration> = exp.replicates(3, 0, 40_000, |r| r.final_config.clone()).unwrap();
    let empirical = empirical_distribution(&exact.sites, &finals);
    let tv = total_variation(&exact.probabilities, &empirical);
    assert!(tv < 0.015, "tv = {tv}");
}

#[test]
fn isolated_infection_dies_at_rate_delta() {
    let ring = Topology::torus(1, 5).unwrap();
    let init = Initial::from(init_single(&ring, Strain::Two, ring.origin()).unwrap());
    let params = SimParams::new(0.0, 0.0, 0.7).with_deltas(1.0, 2.0);
    let est = survival_probability(&ring, &init, &params, 50_000, 11).unwrap();
    let exact = (-1.4_f64).exp();
    assert!(est.lower < exact && exact < est.upper, "{est:?} vs {exact}");
}

#[test]
fn ensembles_are_identical_at_every_pool_size() {
    let ring = Topology::torus(1, 100).unwrap();
    let init = Initial::Product { p1: 0.2, p2: 0.2 };
    let params = SimParams::new(2.0, 2.5, 5.0).with_samples(vec![1.0, 5.0]);
    let exp = Experiment {
        topology: &ring,
        init: &init,
        params: &params,
    };
    let a = with_parallelism(1, || exp.replicates(9, 0, 64, |r| r.clone()).unwrap());
    let b = with_parallelism(4, || exp.replicates(9, 0, 64, |r| r.clone()).unwrap());
    assert_eq!(a, b);
}

#[test]
fn relabeling_strains_swaps_the_law() {
    let ring = Topology::torus(1, 30).unwrap();
    let init = init_pair(&ring, SiteId(0), SiteId(15)).unwrap();
    let params = SimParams::new(1.8, 2.6, 4.0);
    let n = 4000;
    let count = |init: &Configuration, params: &SimParams, seed: u64| {
        let fixed = Initial::from(init.clone());
        let exp = Experiment {
            topology: &ring,
            init: &fixed,
            params,
        };
        let finals = exp.replicates(seed, 0, n, |r| (r.final_config.count(Strain::One), r.final_config.count(Strain::Two))).unwrap();
        let m1 = finals.iter().map(|f| f.0 as f64).sum::<f64>() / n as f64;
        let m2 = finals.iter().map(|f| f.1 as f64).sum::<f64>() / n as f64;
        (m1, m2)
    };
    let (a1, a2) = count(&init, &params, 1);
    let (b1, b2) = count(&init.relabeled(), &params.swapped(), 2);
    assert!((a1 - b2).abs() < 0.1 * a1.max(1.0), "{a1} vs {b2}");
    assert!((a2 - b1).abs() < 0.1 * a2.max(1.0), "{a2} vs {b1}");
}

#[test]
fn survival_grows_with_lambda_on_the_ring() {
    let ring = Topology::torus(1, 200).unwrap();
    let init = Initial::from(init_single(&ring, Strain::One, ring.origin()).unwrap());
    let low = survival_probability(&ring, &init, &SimParams::new(1.2, 0.0, 50.0), 400, 5).unwrap();
    let high = survival_probability(&ring, &init, &SimParams::new(3.0, 0.0, 50.0), 400, 5).unwrap();
    assert!(high.lower > low.upper, "{low:?} {high:?}");
}

#[test]
fn ring_does_not_sustain_two_strains_from_split_neighbours() {
    let ring = Topology::torus(1, 100).unwrap();
    let init = Initial::from(init_pair(&ring, SiteId(99), SiteId(1)).unwrap());
    let params = SimParams::new(2.0, 3.0, 300.0);
    let est = coexistence_probability(&ring, &init, &params, 300.0, 400, 4).unwrap();
    assert!(est.upper < 0.05, "{est:?}");
}

#[test]
fn split_start_seeds_two_children_of_the_root() {
    let tree = Topology::tree(3, 5).unwrap();
    let c = init_split(&tree).unwrap();
    assert_eq!((c.count(Strain::One), c.count(Strain::Two)), (1, 1));
    for (site, _) in c.iter() {
        assert_eq!(tree.depth(site), Some(1));
    }
}

#[test]
fn a_run_is_a_function_of_its_seed() {
    let tree = Topology::tree(4, 10).unwrap();
    let init = init_split(&tree).unwrap();
    let params = SimParams::new(0.4, 0.5, 20.0);
    assert_eq!(run(&tree, &init, &params, 77).unwrap(), run(&tree, &init, &params, 77).unwrap());
}

#[test]
fn mean_field_winner_matches_the_long_run() {
    let cases = [((2.0, 1.0), (3.0, 1.0)), ((3.0, 1.5), (1.5, 1.0)), ((0.8, 1.0), (0.9, 1.0)), ((4.0, 1.0), (1.2, 1.0))];
    for ((l1, d1), (l2, d2)) in cases {
        let s1 = StrainParams::new(l1, d1).unwrap();
        let s2 = StrainParams::new(l2, d2).unwrap();
        let tr = integrate(&s1, &s2, &MeanFieldState::new(0.1, 0.1).unwrap(), 400.0, 0.01).unwrap();
        let end = tr.last();
        match predict_winner(&s1, &s2) {
            Verdict::Strain1 => assert!(end.u2 < 1e-4 && end.u1 > 0.1, "{end:?}"),
            Verdict::Strain2 => assert!(end.u1 < 1e-4 && end.u2 > 0.1, "{end:?}"),
            Verdict::BothDieOut => assert!(end.u1 < 1e-4 && end.u2 < 1e-4, "{end:?}"),
            Verdict::DegenerateTie => unreachable!(),
        }
    }
}
