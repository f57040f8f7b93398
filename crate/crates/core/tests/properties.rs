mod common;

use proptest::prelude::*;

use dynroute::benchmark::enumerate_assignments;
use dynroute::channel::{mean_rate_opportunistic, mean_rate_single, win_probability};
use dynroute::control::Hyper;
use dynroute::network::{evaluate, propagate_flows, Network, Shares};
use dynroute::ocdr::{mu_hat_all, source_probabilities, OcdrState};
use dynroute::qos::{apportion_limits, delay_violation_prob, max_admissible_rate, QosSpec};
use dynroute::sweep::gain;
use dynroute::tcdr::pair_probabilities;
use dynroute::topology::{ChannelParams, Positions, Topology};

fn contest() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=5).prop_flat_map(|n| (prop::collection::vec(0.05f64..1.0, n), prop::collection::vec(0.1f64..200.0, n)))
}

fn network(k: usize, l: usize, m: usize, relays: Vec<f64>) -> Network {
    let mut sorted = relays;
    sorted.sort_by(f64::total_cmp);
    let pos = Positions {
        sources: vec![0.0; k],
        relays: sorted.chunks(m).map(|c| c.to_vec()).collect(),
        destinations: vec![1.0; k],
    };
    let topo = Topology::build_linear(k, l, m, &pos).unwrap();
    let ch = ChannelParams { bandwidth: 1e6, snr_scale: 1.0, path_loss_exponent: 3.0, slot: 1e-4 };
    let qos = QosSpec::uniform(&topo, 1e-4, 1e-6).unwrap();
    Network::new(topo, ch, qos, vec![1.0; k]).unwrap()
}

fn layered() -> impl Strategy<Value = Network> {
    (1usize..=2, 1usize..=2, 1usize..=3).prop_flat_map(|(k, l, m)| {
        // strictly separated hops keep every link length positive
        prop::collection::vec(0.05f64..0.95, l * m).prop_filter_map("distinct hops", move |mut r| {
            r.sort_by(f64::total_cmp);
            let ok = r.chunks(m).collect::<Vec<_>>().windows(2).all(|w| w[0].last() < w[1].first());
            ok.then(|| network(k, l, m, r))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn win_probabilities_form_a_distribution((betas, gbars) in contest()) {
        let total: f64 = (0..betas.len()).map(|j| win_probability(j, &betas, &gbars).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn opportunistic_rate_monotone_in_priorities((betas, gbars) in contest(), bump in 1.01f64..3.0) {
        let r = mean_rate_opportunistic(0, &betas, &gbars, 1.0).unwrap();
        let mut up = betas.clone();
        up[0] *= bump;
        prop_assert!(mean_rate_opportunistic(0, &up, &gbars, 1.0).unwrap() >= r * (1.0 - 1e-12));
        let mut rival = betas.clone();
        rival[1] *= bump;
        prop_assert!(mean_rate_opportunistic(0, &rival, &gbars, 1.0).unwrap() <= r * (1.0 + 1e-12));
        prop_assert!(r <= mean_rate_single(gbars[0], 1.0).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn diversity_beats_any_single_link(n in 2usize..=5, g in 0.1f64..100.0) {
        let betas = vec![1.0; n];
        let gbars = vec![g; n];
        let total: f64 = (0..n).map(|j| mean_rate_opportunistic(j, &betas, &gbars, 1.0).unwrap()).sum();
        prop_assert!(total > mean_rate_single(g, 1.0).unwrap());
    }

    #[test]
    fn probabilities_normalize(alpha in prop::collection::vec(0.0f64..5.0, 1..5), rows in prop::collection::vec(prop::collection::vec(0.0f64..5.0, 2), 1..4)) {
        let pi = source_probabilities(&alpha);
        let s: f64 = pi.iter().sum();
        prop_assert!(pi.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-12);
        let joint: f64 = pair_probabilities(&rows).iter().flatten().sum();
        prop_assert!(joint == 0.0 || (joint - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apportionment_hands_out_rho_star(rho in 0.0f64..1e6, arrivals in prop::collection::vec(0.0f64..10.0, 1..4)) {
        let is_source = vec![false; arrivals.len()];
        let limits = apportion_limits(rho, &arrivals, &is_source, arrivals.len());
        prop_assert!((limits.iter().sum::<f64>() - rho).abs() <= 1e-9 * rho.max(1.0));
    }

    #[test]
    fn admitted_rate_meets_the_deadline(mu in 1.0f64..1e3, eps in 1e-6f64..0.5, d in 0.1f64..100.0) {
        let rho = max_admissible_rate(mu, eps, d);
        prop_assert!(rho >= 0.0 && rho < mu);
        if rho > 0.0 {
            // exact tail is within a factor μ/ρ of ε*, hence below ε* itself
            prop_assert!(delay_violation_prob(rho, mu, d).unwrap() <= eps * (1.0 + 1e-9));
        }
    }

    #[test]
    fn layered_topology_duality(net in layered()) {
        let t = &net.topo;
        let (k, l, m) = (t.num_sources(), t.num_hops(), t.relays_per_hop());
        prop_assert_eq!(t.num_nodes(), 2 * k + l * m);
        prop_assert_eq!(t.num_edges(), k * m + (l - 1) * m * m + m * k);
        for i in 0..t.num_nodes() {
            for &j in t.next_hops(i) {
                prop_assert!(t.prev_hops(j).contains(&i));
            }
            for &y in t.prev_hops(i) {
                prop_assert!(t.next_hops(y).contains(&i));
            }
        }
    }

    #[test]
    fn evaluation_respects_limits_and_conserves_flow(net in layered(), seed in 0u64..1000) {
        let mut st = OcdrState::cold(&net);
        let mut x = seed;
        st.beta.iter_mut().flatten().for_each(|b| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *b = 0.1 + (x >> 40) as f64 / (1u64 << 24) as f64;
        });
        let mu = mu_hat_all(&net, &st).unwrap();
        let mut eval = evaluate(&net, mu, &Shares::cold(&net));
        prop_assert!(eval.objective >= 0.0);
        propagate_flows(&net, &mut eval).unwrap();
        let t = &eval.table;
        for kk in 0..net.num_sources() {
            let s = net.topo.source_index(kk);
            prop_assert!(t.source_rate[kk] <= t.rho_star[s][kk] + 1e-9);
            for i in net.topo.transmitters() {
                let out: f64 = t.rho_link[i].iter().map(|r| r[kk]).sum();
                prop_assert!((out - t.rho[i][kk]).abs() <= 1e-6 * t.rho[i][kk].max(1.0));
                for l in 0..net.links(i).len() {
                    prop_assert!(t.mu[i][l][kk] <= t.mu_hat[i][l][kk] + 1e-9);
                    prop_assert!(t.mu[i][l][kk] <= t.rho_hat[i][l][kk] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn enumeration_is_exhaustive(k in 1usize..=3, l in 1usize..=3, m in 1usize..=3) {
        let all = enumerate_assignments(k, l, m, 1 << 20).unwrap();
        prop_assert_eq!(all.len(), m.pow((k * l) as u32));
        let mut seen: Vec<_> = all.iter().map(|a| a.relay_of.clone()).collect();
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), all.len());
    }

    #[test]
    fn gains_follow_definition(a in 0.0f64..1e7, b in 1.0f64..1e7) {
        let g = gain(a, b).unwrap();
        prop_assert!((g - 100.0 * (a - b) / b).abs() <= 1e-9 * g.abs().max(1.0));
    }
}

#[test]
fn default_hyper_validates() {
    Hyper::default().validate().unwrap();
}
