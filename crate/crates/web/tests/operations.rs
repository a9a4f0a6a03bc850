use ctsearch_web::{candidate_json, noise_study_json, series_json, MAX_SERIES};

#[test]
fn candidate_has_square_dual_graph() {
    for seed in 0..50 {
        for m in [0, 1, 5] {
            let v = candidate_json(seed, m).unwrap();
            assert_eq!(v["valid"], true);
            let nodes = v["dual"]["nodes"].as_array().unwrap();
            let adj = v["dual"]["adjacency"].as_array().unwrap();
            assert_eq!(adj.len(), nodes.len());
            let hyper = nodes.len() - 1;
            assert_eq!(nodes[hyper]["op"], "Hyper");
            for (i, row) in adj.iter().enumerate() {
                let row = row.as_array().unwrap();
                assert_eq!(row.len(), nodes.len());
                assert_eq!(row[i], 1);
                assert_eq!(row[hyper], 1);
            }
        }
    }
}

#[test]
fn candidate_is_deterministic_and_mutation_changes_it() {
    assert_eq!(candidate_json(3, 2).unwrap(), candidate_json(3, 2).unwrap());
    assert_ne!(candidate_json(3, 0).unwrap()["candidate"], candidate_json(3, 1).unwrap()["candidate"]);
}

#[test]
fn series_shapes_and_limits() {
    let v = series_json(4, 300, 0.5, 1).unwrap();
    let s = v["series"].as_array().unwrap();
    assert_eq!(s.len(), 4);
    assert!(s.iter().all(|x| x.as_array().unwrap().len() == 300));
    assert!(series_json(MAX_SERIES + 1, 100, 0.5, 1).is_err());
    assert!(series_json(4, 1, 0.5, 1).is_err());
    assert!(series_json(4, 100, 2.0, 1).is_err());
}

#[test]
fn noise_study_degrades_with_noise() {
    let clean = noise_study_json(0.0, 60, 4).unwrap();
    assert_eq!(clean["pra"], 1.0);
    assert!((clean["spearman"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let noisy = noise_study_json(2.0, 60, 4).unwrap();
    assert!(noisy["pra"].as_f64().unwrap() < 0.9);
    assert_eq!(noisy["points"].as_array().unwrap().len(), 60);
    assert!(noise_study_json(-1.0, 60, 4).is_err());
    assert!(noise_study_json(0.5, 1, 4).is_err());
}
