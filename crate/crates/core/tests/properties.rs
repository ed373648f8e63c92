use ndarray::{Array1, Array2};
use proptest::prelude::*;

use caster::eval::{pr_auc, roc_auc};
use caster::model::ridge_coefficients;
use caster::smiles::{atom_tokenize, SmilesString};
use caster::spm::{mine_vocabulary, Vocabulary};

const TOKENS: &[&str] = &[
    "C", "c", "N", "n", "O", "o", "S", "F", "Cl", "Br", "[N+]", "[O-]", "[C@@H]", "[nH]", "=", "#", "1", "2", "%10",
    "/", "\\", ".",
];

/// Token strings, optionally wrapped in balanced branches.
fn smiles() -> impl Strategy<Value = String> {
    let atom = proptest::sample::select(TOKENS).prop_map(str::to_string);
    let chain = prop::collection::vec(atom, 1..12).prop_map(|t| t.concat());
    (chain.clone(), prop::option::of(chain)).prop_map(|(head, branch)| match branch {
        Some(b) => format!("{head}({b})C"),
        None => head,
    })
}

proptest! {
    #[test]
    fn tokens_concatenate_to_the_input(s in smiles()) {
        let t = atom_tokenize(&s).unwrap();
        prop_assert_eq!(t.concat(), s);
    }

    #[test]
    fn segmentation_covers_the_tokens(corpus in prop::collection::vec(smiles(), 1..20), probe in smiles()) {
        let seqs: Vec<_> = corpus.iter().map(|s| atom_tokenize(s).unwrap()).collect();
        if let Ok(v) = mine_vocabulary(&seqs, 2, 50) {
            let t = SmilesString::parse(&probe).unwrap().tokenize();
            prop_assert_eq!(v.segment(&t).concat(), probe);
            let again = Vocabulary::from_text(&v.to_text()).unwrap();
            prop_assert_eq!(again.segment(&t), v.segment(&t));
        }
    }

    #[test]
    fn ranking_metrics_ignore_monotone_rescaling(
        rows in prop::collection::vec((0u8..20, any::<bool>()), 2..80),
    ) {
        let mut y: Vec<bool> = rows.iter().map(|r| r.1).collect();
        y[0] = true;
        y[1] = false;
        let s: Vec<f64> = rows.iter().map(|r| f64::from(r.0) / 20.0).collect();
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
        prop_assert_eq!(roc_auc(&s, &y).unwrap(), roc_auc(&t, &y).unwrap());
        prop_assert_eq!(pr_auc(&s, &y).unwrap(), pr_auc(&t, &y).unwrap());
        let flipped: Vec<bool> = y.iter().map(|v| !v).collect();
        let sum = roc_auc(&s, &y).unwrap() + roc_auc(&s, &flipped).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_solution_is_stationary(
        (d, k, entries, z, lambda1) in (2usize..5, 5usize..10).prop_flat_map(|(d, k)| (
            Just(d),
            Just(k),
            prop::collection::vec(-1.0f64..1.0, d * k),
            prop::collection::vec(-2.0f64..2.0, d),
            1e-6f64..2.0,
        ))
    ) {
        let b = Array2::from_shape_vec((d, k), entries).unwrap();
        let z = Array1::from(z);
        let r = ridge_coefficients(z.view(), b.view(), lambda1).unwrap().r;
        let lhs = b.t().dot(&b.dot(&r)) + &r * lambda1;
        let rhs = b.t().dot(&z);
        let residual = (&lhs - &rhs).iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        prop_assert!(residual / scale < 1e-8, "relative residual {}", residual / scale);
    }
}
