use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decoding::Hypothesis;
use crate::error::{Error, Result};

use super::bleu::sentence_bleu;

/// Replaces each character, with probability `p`, by a uniform draw from
/// the distinct characters of `sentence`. Every position consumes the same
/// random numbers whatever `p` is, so for one seed the changed positions at
/// a lower `p` are a subset of those at a higher one.
pub fn char_noise(sentence: &str, p: f64, seed: u64) -> Result<String> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "noise probability {p} outside [0, 1]"
        )));
    }
    let chars: Vec<char> = sentence.chars().collect();
    let mut charset: Vec<char> = Vec::new();
    for &c in &chars {
        if !charset.contains(&c) {
            charset.push(c);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(chars
        .iter()
        .map(|&c| {
            let u: f64 = rng.gen();
            let r = charset[rng.gen_range(0..charset.len())];
            if u < p {
                r
            } else {
                c
            }
        })
        .collect())
}

/// [`char_noise`] over lines; line `i` uses its own seed derived from
/// `seed` and `i`.
pub fn noise_lines<S: AsRef<str>>(lines: &[S], p: f64, seed: u64) -> Result<Vec<String>> {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            char_noise(
                l.as_ref(),
                p,
                seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
            )
        })
        .collect()
}

/// The hypothesis with the highest sentence BLEU against `reference`;
/// ties go to the earlier one. `render` turns ids into text.
pub fn oracle_select<'h>(
    nbest: &'h [Hypothesis],
    reference: &str,
    render: &dyn Fn(&[usize]) -> String,
) -> Result<&'h Hypothesis> {
    let mut best: Option<(&Hypothesis, f64)> = None;
    for h in nbest {
        let s = sentence_bleu(&render(&h.tokens), reference);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((h, s));
        }
    }
    best.map(|(h, _)| h)
        .ok_or_else(|| Error::InvalidArgument("oracle selection over an empty n-best list".into()))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn hyp(tokens: Vec<usize>, score: f64) -> Hypothesis {
        Hypothesis {
            tokens,
            score,
            norm_score: score,
            cutoff: false,
        }
    }

    fn render(ids: &[usize]) -> String {
        ids.iter()
            .map(|i| format!("t{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn noise_extremes() {
        let s = "abc cab";
        assert_eq!(char_noise(s, 0.0, 3).unwrap(), s);
        let n = char_noise(s, 1.0, 3).unwrap();
        assert_eq!(n.chars().count(), s.chars().count());
        assert!(n.chars().all(|c| s.contains(c)));
        assert_ne!(n, s);
        assert!(char_noise(s, 1.5, 0).is_err());
        assert_eq!(char_noise("", 0.5, 1).unwrap(), "");
    }

    #[test]
    fn changed_fraction_matches_binomial() {
        let s: String = "abcdefgh".repeat(12_500);
        let p = 0.2;
        let n = char_noise(&s, p, 11).unwrap();
        let changed = s.chars().zip(n.chars()).filter(|(a, b)| a != b).count() as f64;
        let total = s.len() as f64;
        let q = p * (1.0 - 1.0 / 8.0);
        let sigma = (total * q * (1.0 - q)).sqrt();
        assert!(
            (changed - total * q).abs() < 3.0 * sigma,
            "{changed} vs {}",
            total * q
        );
    }

    #[test]
    fn oracle_picks_the_reference() {
        let list = vec![
            hyp(vec![1, 2], -1.0),
            hyp(vec![3, 4, 5], -2.0),
            hyp(vec![3, 4], -3.0),
        ];
        assert_eq!(
            oracle_select(&list, "t3 t4 t5", &render).unwrap().tokens,
            vec![3, 4, 5]
        );
        assert_eq!(
            oracle_select(&list[..1], "t9", &render).unwrap().tokens,
            vec![1, 2]
        );
        // all zero: the first wins
        assert_eq!(
            oracle_select(&list, "t8 t9", &render).unwrap().tokens,
            vec![1, 2]
        );
        assert!(oracle_select(&[], "t1", &render).is_err());
    }

    proptest! {
        #[test]
        fn noise_is_deterministic_and_length_preserving(s in "[a-e ]{0,40}", p in 0.0f64..=1.0, seed in any::<u64>()) {
            let a = char_noise(&s, p, seed).unwrap();
            prop_assert_eq!(&a, &char_noise(&s, p, seed).unwrap());
            prop_assert_eq!(a.chars().count(), s.chars().count());
            prop_assert!(a.chars().all(|c| s.contains(c)));
        }

        #[test]
        fn noise_positions_nest(s in "[a-e]{1,40}", p in 0.0f64..=1.0, q in 0.0f64..=1.0, seed in any::<u64>()) {
            let (lo, hi) = if p < q { (p, q) } else { (q, p) };
            let a = char_noise(&s, lo, seed).unwrap();
            let b = char_noise(&s, hi, seed).unwrap();
            for ((o, x), y) in s.chars().zip(a.chars()).zip(b.chars()) {
                if x != o {
                    prop_assert_eq!(x, y);
                }
            }
        }

        #[test]
        fn oracle_dominates_rank_one(
            lists in prop::collection::vec(prop::collection::vec(prop::collection::vec(0usize..6, 0..6), 1..6), 1..8),
            refs in prop::collection::vec(prop::collection::vec(0usize..6, 1..6), 8),
        ) {
            for (l, r) in lists.iter().zip(&refs) {
                let hyps: Vec<Hypothesis> = l.iter().map(|t| hyp(t.clone(), 0.0)).collect();
                let r = render(r);
                let o = oracle_select(&hyps, &r, &render).unwrap();
                prop_assert!(sentence_bleu(&render(&o.tokens), &r) >= sentence_bleu(&render(&hyps[0].tokens), &r));
            }
        }
    }
}
