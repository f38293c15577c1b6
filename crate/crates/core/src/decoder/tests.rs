use std::sync::Arc;

use super::*;
use crate::chain::validate_chain;
use crate::trie::log_softmax;
use crate::vocab::{serialize_triplet, Tokenizer, VocabularyBuilder, WhitespaceTokenizer};

struct Toy {
    graph: Arc<KnowledgeGraph>,
    tok: WhitespaceTokenizer,
}

impl Toy {
    fn new(tsv: &str, extra: &str) -> Self {
        let graph = Arc::new(KnowledgeGraph::from_tsv_str(tsv).unwrap());
        let mut b = VocabularyBuilder::new();
        for t in graph.triplets() {
            b.add_triplet(t);
        }
        b.add_text(extra);
        Self { graph, tok: WhitespaceTokenizer::new(b.build()) }
    }

    fn basic() -> Self {
        Self::new("A\tr1\tB\nB\tr2\tC\nA\tr3\tD\n", "question ? so answer")
    }

    fn id(&self, s: &str) -> TokenId {
        self.tok.vocab().id(s).unwrap()
    }

    fn ids(&self, text: &str) -> TokenSeq {
        self.tok.encode(text).unwrap()
    }

    fn q(&self, names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }
}

fn t(h: &str, r: &str, tl: &str) -> Triplet {
    Triplet::new(h, r, tl).unwrap()
}

/// Brute-force Eq.-3 score: at each position the valid set is every next
/// token of a subgraph serialization sharing the prefix.
fn oracle_triplet_score(
    scorer: &dyn LmScorer,
    context: &[TokenId],
    seqs: &[TokenSeq],
    target: &[TokenId],
) -> f64 {
    let mut total = 0.0;
    for j in 1..target.len() {
        let mut valid: Vec<TokenId> = seqs
            .iter()
            .filter(|s| s.len() > j && s[..j] == target[..j])
            .map(|s| s[j])
            .collect();
        valid.sort_unstable();
        valid.dedup();
        let mut ctx = context.to_vec();
        ctx.extend_from_slice(&target[1..j]);
        let logits = scorer.next_logits(&ctx).unwrap();
        let masked: Vec<f64> = (0..logits.len())
            .map(|i| if valid.contains(&(i as TokenId)) { logits[i] } else { f64::NEG_INFINITY })
            .collect();
        total += log_softmax(&masked)[target[j] as usize];
    }
    total
}

fn setup_step(toy: &Toy, entities: &[&str]) -> (QuerySubgraph, StepConstraint) {
    let sg = QuerySubgraph::init(toy.graph.clone(), &toy.q(entities)).unwrap();
    let ser = SerializedGraph::new(&toy.graph, &toy.tok).unwrap();
    let c = StepConstraint::new(&sg, &ser).unwrap();
    (sg, c)
}

#[test]
fn singleton_subgraph_scores_zero() {
    let toy = Toy::new("A\tr1\tB\nB\tr2\tC\n", "question");
    let (sg, c) = setup_step(&toy, &["C"]);
    let scorer = RandomScorer::new(toy.tok.vocab_size(), 3);
    let ctx = toy.ids("question <");
    let out = generate_triplet(
        &scorer, &ctx, &sg, &c, toy.tok.specials(), 3, TokenSearch::Beam, false, &mut NoopObserver,
    )
    .unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].triplet, t("B", "r2", "C"));
    assert_eq!(out[0].score, 0.0);
    assert_eq!(out[0].tokens, serialize_triplet(&toy.tok, &t("B", "r2", "C")).unwrap());
}

#[test]
fn top_two_match_exhaustive_scoring() {
    let toy = Toy::basic();
    let (sg, c) = setup_step(&toy, &["A", "C"]);
    let n = toy.tok.vocab_size();
    let scorer = TableScorer::uniform(n)
        .rule(vec![0], vec![(toy.id("A"), 1.5), (toy.id("B"), 0.2)])
        .unwrap()
        .rule(toy.ids("< A ->"), vec![(toy.id("r1"), -0.5), (toy.id("r3"), 0.7)])
        .unwrap();
    let ctx = toy.ids("question <");
    for mode in [TokenSearch::Beam, TokenSearch::Exact] {
        let out = generate_triplet(
            &scorer, &ctx, &sg, &c, toy.tok.specials(), 2, mode, false, &mut NoopObserver,
        )
        .unwrap();

        let seqs: Vec<TokenSeq> =
            sg.triplets().iter().map(|t| serialize_triplet(&toy.tok, t).unwrap()).collect();
        let mut expected: Vec<(Triplet, f64)> = sg
            .triplets()
            .into_iter()
            .zip(&seqs)
            .map(|(t, s)| (t, oracle_triplet_score(&scorer, &ctx, &seqs, s)))
            .collect();
        expected.sort_by(|a, b| b.1.total_cmp(&a.1));
        expected.truncate(2);

        assert_eq!(out.len(), 2);
        for (got, (want, score)) in out.iter().zip(&expected) {
            assert_eq!(&got.triplet, want);
            assert!((got.score - score).abs() < 1e-12, "{mode:?}: {} vs {score}", got.score);
        }
    }
}

#[test]
fn generate_requires_open_marker_and_nonempty_subgraph() {
    let toy = Toy::basic();
    let (sg, c) = setup_step(&toy, &["A"]);
    let scorer = TableScorer::uniform(toy.tok.vocab_size());
    let sp = toy.tok.specials();
    let bad_ctx = toy.ids("question");
    assert!(matches!(
        generate_triplet(&scorer, &bad_ctx, &sg, &c, sp, 1, TokenSearch::Beam, false, &mut NoopObserver),
        Err(Error::Contract(_))
    ));
    let (sg, c) = setup_step(&toy, &["Z"]);
    let ctx = toy.ids("question <");
    assert!(matches!(
        generate_triplet(&scorer, &ctx, &sg, &c, sp, 1, TokenSearch::Beam, false, &mut NoopObserver),
        Err(Error::DeadEnd)
    ));
}

#[test]
fn length_normalization_divides_by_token_count() {
    let toy = Toy::basic();
    let (sg, c) = setup_step(&toy, &["A"]);
    let scorer = RandomScorer::new(toy.tok.vocab_size(), 11);
    let ctx = toy.ids("question <");
    let sp = toy.tok.specials();
    let raw =
        generate_triplet(&scorer, &ctx, &sg, &c, sp, 2, TokenSearch::Exact, false, &mut NoopObserver)
            .unwrap();
    let norm =
        generate_triplet(&scorer, &ctx, &sg, &c, sp, 2, TokenSearch::Exact, true, &mut NoopObserver)
            .unwrap();
    for n in &norm {
        let r = raw.iter().find(|r| r.triplet == n.triplet).unwrap();
        assert!((n.score - r.score / (r.tokens.len() - 1) as f64).abs() < 1e-12);
    }
}

#[test]
fn unconstrained_stops_on_eos() {
    let toy = Toy::basic();
    let sp = toy.tok.specials();
    let scorer = TableScorer::uniform(toy.tok.vocab_size()).rule(vec![], vec![(sp.eos, 5.0)]).unwrap();
    let span = run_unconstrained(&scorer, &toy.ids("question"), sp, 10).unwrap();
    assert_eq!(span.tokens, vec![sp.eos]);
    assert_eq!(span.terminator, Terminator::Eos);
}

#[test]
fn unconstrained_scripted_until_open_marker() {
    let toy = Toy::basic();
    let sp = toy.tok.specials();
    let prompt = toy.ids("question ?");
    let script = toy.ids("so answer <");
    let scorer = ScriptedScorer::new(toy.tok.vocab_size(), script.clone(), prompt.len(), sp.eos).unwrap();
    let span = run_unconstrained(&scorer, &prompt, sp, 10).unwrap();
    assert_eq!(span.tokens, script);
    assert_eq!(span.terminator, Terminator::TBos);
}

#[test]
fn unconstrained_budget() {
    let toy = Toy::basic();
    let sp = toy.tok.specials();
    let scorer = TableScorer::uniform(toy.tok.vocab_size())
        .rule(vec![], vec![(toy.id("so"), 5.0)])
        .unwrap();
    let span = run_unconstrained(&scorer, &toy.ids("question"), sp, 1).unwrap();
    assert_eq!(span.tokens, vec![toy.id("so")]);
    assert_eq!(span.terminator, Terminator::Budget);
}

#[test]
fn closing_span_never_opens_a_triplet() {
    let toy = Toy::basic();
    let sp = toy.tok.specials();
    let scorer = TableScorer::uniform(toy.tok.vocab_size())
        .rule(vec![], vec![(sp.t_bos, 9.0), (toy.id("so"), 5.0)])
        .unwrap();
    let span = run_closing(&scorer, &toy.ids("question"), sp, 3).unwrap();
    assert_eq!(span.tokens, vec![toy.id("so"); 3]);
}

/// Opens a triplet after the prompt and after every completed triplet.
fn always_open(toy: &Toy, prompt_tail: &str) -> TableScorer {
    let sp = toy.tok.specials();
    TableScorer::uniform(toy.tok.vocab_size())
        .rule(toy.ids(prompt_tail), vec![(sp.t_bos, 10.0)])
        .unwrap()
        .rule(vec![sp.t_eos], vec![(sp.t_bos, 10.0)])
        .unwrap()
}

#[test]
fn decode_respects_step_budget_and_pool_bound() {
    let toy = Toy::basic();
    let scorer = always_open(&toy, "?");
    let prompt = toy.ids("question ?");
    for steps in 1..=3 {
        for beam in 1..=3 {
            let config = DecodeConfig::new(beam, steps).unwrap();
            let out =
                dog_decode(&scorer, &toy.tok, &prompt, toy.graph.clone(), &toy.q(&["A"]), &config)
                    .unwrap();
            assert!(out.len() <= beam);
            for c in &out {
                assert!(c.chain.len() <= steps);
                assert!(c.finished);
                assert!(validate_chain(&c.chain, &toy.graph, &toy.q(&["A"])).well_formed);
                let sum: f64 = c.triplet_scores.iter().sum();
                assert!((sum - c.chain_score).abs() < 1e-9);
            }
            assert!(out.windows(2).all(|w| w[0].chain_score >= w[1].chain_score));
        }
    }
}

#[test]
fn config_rejects_zero() {
    assert!(DecodeConfig::new(1, 0).is_err());
    assert!(DecodeConfig::new(0, 1).is_err());
}

#[test]
fn decode_follows_biased_path() {
    let toy = Toy::basic();
    let sp = toy.tok.specials();
    let scorer = always_open(&toy, "?")
        .rule(toy.ids("< A ->"), vec![(toy.id("r1"), 4.0)])
        .unwrap()
        .rule(vec![sp.t_bos], vec![(toy.id("B"), 4.0)])
        .unwrap()
        .rule(toy.ids("B -> r2 -> C >"), vec![(sp.eos, 10.0)])
        .unwrap();
    let prompt = toy.ids("question ?");
    let config = DecodeConfig::new(1, 3).unwrap();
    let out =
        dog_decode(&scorer, &toy.tok, &prompt, toy.graph.clone(), &toy.q(&["A"]), &config).unwrap();
    assert_eq!(out[0].chain.steps, vec![t("A", "r1", "B"), t("B", "r2", "C")]);
    assert_eq!(
        toy.tok.decode(out[0].generated()).unwrap(),
        "< A -> r1 -> B > < B -> r2 -> C > <eos>"
    );
}

#[test]
fn immediate_eos_gives_empty_chain() {
    let toy = Toy::basic();
    let sp = toy.tok.specials();
    let scorer = TableScorer::uniform(toy.tok.vocab_size()).rule(vec![], vec![(sp.eos, 1.0)]).unwrap();
    let out = dog_decode(
        &scorer,
        &toy.tok,
        &toy.ids("question"),
        toy.graph.clone(),
        &toy.q(&["A"]),
        &DecodeConfig::default(),
    )
    .unwrap();
    assert_eq!(out.len(), 1);
    assert!(out[0].chain.is_empty());
    assert_eq!(out[0].generated(), &[sp.eos]);
}

#[test]
fn dead_end_at_first_step_is_no_chain() {
    let toy = Toy::basic();
    let scorer = always_open(&toy, "question");
    let err = dog_decode(
        &scorer,
        &toy.tok,
        &toy.ids("question"),
        toy.graph.clone(),
        &toy.q(&["Nowhere"]),
        &DecodeConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::NoChain));
}

#[test]
fn decode_rejects_vocab_mismatch_and_empty_prompt() {
    let toy = Toy::basic();
    let scorer = TableScorer::uniform(toy.tok.vocab_size() + 1);
    let cfg = DecodeConfig::default();
    assert!(dog_decode(&scorer, &toy.tok, &[3], toy.graph.clone(), &toy.q(&["A"]), &cfg).is_err());
    let scorer = TableScorer::uniform(toy.tok.vocab_size());
    assert!(dog_decode(&scorer, &toy.tok, &[], toy.graph.clone(), &toy.q(&["A"]), &cfg).is_err());
}

#[derive(Default)]
struct Recorder {
    valid_sets: Vec<(TokenSeq, Vec<TokenId>)>,
}

impl DecodeObserver for Recorder {
    fn on_valid_set(&mut self, prefix: &[TokenId], valid: &ValidSet) {
        self.valid_sets.push((prefix.to_vec(), valid.to_vec()));
    }
}

#[test]
fn stream_matches_decoder_masks() {
    let toy = Toy::basic();
    let scorer = always_open(&toy, "?")
        .rule(toy.ids("< A ->"), vec![(toy.id("r1"), 4.0)])
        .unwrap();
    let prompt = toy.ids("question ?");
    let config = DecodeConfig::new(1, 3).unwrap();
    let mut rec = Recorder::default();
    let out = dog_decode_observed(
        &scorer, &toy.tok, &prompt, toy.graph.clone(), &toy.q(&["A"]), &config, &mut rec,
    )
    .unwrap();

    let mut stream = ConstrainedStream::new(toy.graph.clone(), &toy.q(&["A"]), &toy.tok).unwrap();
    let mut allowed = Vec::new();
    let mut completed = Vec::new();
    for &tok in out[0].generated() {
        let prefix = stream.step_prefix().to_vec();
        if let Some(valid) = stream.allowed() {
            allowed.push((prefix, valid.to_vec()));
        }
        let report = stream.feed(tok).unwrap();
        completed.extend(report.triplet_completed);
    }
    assert_eq!(allowed, rec.valid_sets);
    assert_eq!(completed, out[0].chain.steps);
    assert_eq!(stream.subgraph(), &out[0].subgraph);
}

#[test]
fn stream_phase_rules() {
    let toy = Toy::basic();
    let sp = toy.tok.specials();
    let mut s = ConstrainedStream::new(toy.graph.clone(), &toy.q(&["A"]), &toy.tok).unwrap();
    let r = s.feed(toy.id("so")).unwrap();
    assert_eq!(r.phase, Phase::Unconstrained);
    assert!(r.allowed.is_none());

    let r = s.feed(sp.t_bos).unwrap();
    assert_eq!(r.phase, Phase::Constrained);
    assert_eq!(r.allowed.unwrap().to_vec(), vec![toy.id("A")]);

    assert!(matches!(s.feed(toy.id("B")), Err(Error::Contract(_))));
    assert_eq!(s.phase(), Phase::Constrained);

    let mut last = None;
    for tok in toy.ids("A -> r1 -> B >") {
        last = Some(s.feed(tok).unwrap());
    }
    let last = last.unwrap();
    assert_eq!(last.triplet_completed, Some(t("A", "r1", "B")));
    assert_eq!(last.phase, Phase::Unconstrained);
    assert!(s.subgraph().contains(&t("B", "r2", "C")));

    s.feed(sp.eos).unwrap();
    assert_eq!(s.phase(), Phase::Closed);
    assert!(s.feed(toy.id("so")).is_err());
}
