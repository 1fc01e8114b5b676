use qfe::periodfind::suppression_experiment;

fn main() {
    let instances: &[(u64, u64)] = &[
        (341, 2), (377, 5), (391, 3), (403, 2), (437, 2), (451, 2),
        (493, 5), (527, 3), (551, 2), (533, 2), (589, 2), (629, 2),
        (667, 2), (713, 3), (731, 2), (781, 3),
    ];
    for &(n, g) in instances {
        let a = suppression_experiment(n, g, 0.1, 10_000, 7).unwrap();
        let b = suppression_experiment(n, g, 0.01, 40_000, 7).unwrap();
        println!(
            "N={n:4} g={g} P={:4} | S=0.1: mc={:.4} exact={:.4} | S=0.01: mc={:.4} exact={:.4} | unmasked={:.3}",
            a.period, a.suppression, a.exact_suppression, b.suppression, b.exact_suppression, a.exact_unmasked
        );
    }
}
