//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion ids (`A1 A5`) to run a subset.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bownmt::app::{grad_check, train, translate_sentences, GradCheckOptions, RunConfig, TrainOutcome};
use bownmt::autodiff::{Graph, Tensor};
use bownmt::data::toy::write_toy_corpus;
use bownmt::data::{read_sentences, Batch, ExamplePair, Sentence, ToyTask, ToyTaskSpec, Vocab, BOS, EOS, NUM_SPECIALS, PAD};
use bownmt::inference::{decode, greedy_decode, sequence_log_likelihood, BeamConfig, Hypothesis};
use bownmt::metrics::{bag_overlap, corpus_bleu};
use bownmt::model::{bow_probabilities, load_checkpoint, Mode, ModelConfig, Seq2Seq};
use bownmt::objectives::{
    adam_step, bag_loss, clip_gradients, schedule, word_loss, AdamConfig, BagLoss, OptimizerState, ScheduleParams,
    PROB_FLOOR,
};

type Check = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- A1

fn a1_gradients() -> Check {
    let started = Instant::now();
    let opts = GradCheckOptions::default();
    ensure(
        (opts.model.src_vocab, opts.model.tgt_vocab, opts.model.emb_size, opts.model.hidden_size) == (20, 20, 8, 8)
            && (opts.model.enc_layers, opts.model.dec_layers) == (1, 1)
            && (opts.batch_size, opts.source_len, opts.target_len) == (2, 3, 4)
            && opts.lambda == 1.0
            && opts.step == 1e-4,
        || "grad-check defaults drifted from the A1 setup".into(),
    )?;
    let report = grad_check(&opts).map_err(err)?;
    let secs = started.elapsed().as_secs_f64();
    for name in ["attn.w", "gen.w", "gen.bias", "tgt_embed", "src_embed"] {
        ensure(report.params.iter().any(|p| p.name == name), || format!("{name} not checked"))?;
    }
    let worst = report.worst().ok_or("no parameters checked")?;
    ensure(report.passed(), || format!("{} max rel error {:.3e}", worst.name, worst.max_rel_error))?;
    ensure(worst.max_rel_error < 1e-4, || format!("worst {:.3e}", worst.max_rel_error))?;
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{} parameters, worst {} rel {:.2e}, {:.2}s",
        report.params.len(),
        worst.name,
        worst.max_rel_error,
        secs
    ))
}

// ---------------------------------------------------------------- A2

fn a2_schedule() -> Check {
    let p = ScheduleParams::default();
    ensure((p.lambda, p.k, p.alpha) == (1.0, 0.1, 0.1), || format!("defaults {p:?}"))?;
    ensure(schedule(0, &p) == 0.1, || format!("lambda_0 = {:?}", schedule(0, &p)))?;
    ensure(schedule(9, &p) == 1.0, || format!("lambda_9 = {:?}", schedule(9, &p)))?;
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=1000 {
        let l = schedule(i, &p);
        ensure(l >= prev && l <= 1.0, || format!("lambda_{i} = {l:?} after {prev:?}"))?;
        prev = l;
    }
    Ok("lambda_0 = 0.1, lambda_9 = 1.0, monotone and capped over 0..=1000".into())
}

// ---------------------------------------------------------------- A3

fn random_distribution(rng: &mut ChaCha8Rng, v: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..v).map(|_| rng.gen_range(-3.0..3.0f64).exp()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

/// `-(1/B) sum_b sum_{t < len_b} ln max(p[t][b][gold], floor)`
fn scalar_word_loss(probs: &[Vec<Vec<f64>>], targets: &[Vec<usize>], lens: &[usize]) -> f64 {
    let mut total = 0.0;
    for (b, row) in targets.iter().enumerate() {
        for t in 0..lens[b] {
            total += probs[t][b][row[t]].max(PROB_FLOOR).ln();
        }
    }
    -total / targets.len() as f64
}

fn scalar_bag_loss(p: &[Vec<f64>], bags: &[Vec<usize>], full: bool) -> f64 {
    let mut total = 0.0;
    for (row, bag) in p.iter().zip(bags) {
        for (w, &pw) in row.iter().enumerate() {
            if bag.contains(&w) {
                total -= pw.max(PROB_FLOOR).ln();
            } else if full && w >= NUM_SPECIALS {
                total -= (1.0 - pw).max(PROB_FLOOR).ln();
            }
        }
    }
    total / p.len() as f64
}

fn rows_leaf(g: &mut Graph, rows: &[Vec<f64>]) -> Result<bownmt::autodiff::Var, String> {
    Ok(g.leaf(Tensor::from_rows(rows).map_err(err)?))
}

fn a3_loss_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_l1, mut worst_l2) = (0.0f64, 0.0f64);
    for case in 0..100 {
        let b = rng.gen_range(1..4);
        let steps = rng.gen_range(1..6);
        let v = rng.gen_range(NUM_SPECIALS + 2..NUM_SPECIALS + 9);
        let lens: Vec<usize> = (0..b).map(|_| rng.gen_range(1..=steps)).collect();
        let probs: Vec<Vec<Vec<f64>>> =
            (0..steps).map(|_| (0..b).map(|_| random_distribution(&mut rng, v)).collect()).collect();
        let targets: Vec<Vec<usize>> = (0..b).map(|_| (0..steps).map(|_| rng.gen_range(0..v)).collect()).collect();
        let mask: Vec<bool> = (0..b).flat_map(|r| (0..steps).map(|t| t < lens[r]).collect::<Vec<_>>()).collect();

        let mut g = Graph::new();
        let vars = probs.iter().map(|p| rows_leaf(&mut g, p)).collect::<Result<Vec<_>, _>>()?;
        let l1 = word_loss(&mut g, &vars, &targets, &mask).map_err(err)?;
        let d1 = (g.value(l1).item() - scalar_word_loss(&probs, &targets, &lens)).abs();
        worst_l1 = worst_l1.max(d1);
        ensure(d1 < 1e-10, || format!("case {case}: l1 off by {d1:e}"))?;

        let bag_p: Vec<Vec<f64>> = (0..b).map(|_| (0..v).map(|_| rng.gen_range(0.01..0.99)).collect()).collect();
        let bags: Vec<Vec<usize>> = (0..b)
            .map(|_| {
                let mut bag: Vec<usize> = (NUM_SPECIALS..v).filter(|_| rng.gen_bool(0.4)).collect();
                bag.sort_unstable();
                bag
            })
            .collect();
        for (variant, full) in [(BagLoss::InBag, false), (BagLoss::FullBce, true)] {
            let mut g = Graph::new();
            let p = rows_leaf(&mut g, &bag_p)?;
            let l2 = bag_loss(&mut g, p, &bags, variant).map_err(err)?;
            let d2 = (g.value(l2).item() - scalar_bag_loss(&bag_p, &bags, full)).abs();
            worst_l2 = worst_l2.max(d2);
            ensure(d2 < 1e-10, || format!("case {case} {variant}: l2 off by {d2:e}"))?;
        }
    }

    let (m, v) = (7, 13);
    let uniform = vec![vec![1.0 / v as f64; v]];
    let mut g = Graph::new();
    let vars = (0..m).map(|_| rows_leaf(&mut g, &uniform)).collect::<Result<Vec<_>, _>>()?;
    let targets = vec![(0..m).map(|t| (t * 5) % v).collect::<Vec<_>>()];
    let l1 = word_loss(&mut g, &vars, &targets, &vec![true; m]).map_err(err)?;
    let du = (g.value(l1).item() - m as f64 * (v as f64).ln()).abs();
    ensure(du < 1e-9, || format!("uniform case off by {du:e}"))?;

    let mut scores: Vec<Vec<f64>> = (0..8).map(|_| (0..20).map(|_| rng.gen_range(-4.0..4.0)).collect()).collect();
    let reference: Vec<u64> = bow_probabilities(&scores).map_err(err)?.iter().map(|x| x.to_bits()).collect();
    for _ in 0..50 {
        scores.shuffle(&mut rng);
        let again: Vec<u64> = bow_probabilities(&scores).map_err(err)?.iter().map(|x| x.to_bits()).collect();
        ensure(again == reference, || "bag probabilities changed under step permutation".into())?;
    }
    Ok(format!(
        "100 cases, worst l1 {worst_l1:.1e}, worst l2 {worst_l2:.1e}; uniform off by {du:.1e}; permutation bit-exact"
    ))
}

// ---------------------------------------------------------------- A4

const A4_CONFIG: &str = include_str!("../configs/toy-reverse.conf");

fn words(vocab: &Vocab, h: Option<&Hypothesis>) -> Sentence {
    h.map(|h| vocab.decode(&h.tokens).into_iter().map(str::to_string).collect())
        .unwrap_or_default()
}

fn beam_outputs(model: &Seq2Seq, out: &TrainOutcome, sources: &[Sentence], beam: &BeamConfig) -> Result<Vec<Sentence>, String> {
    let nbest = translate_sentences(model, &out.src_vocab, sources, beam, None).map_err(err)?;
    Ok(nbest.iter().map(|h| words(&out.tgt_vocab, h.first())).collect())
}

fn a4_toy_convergence() -> Check {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(err)?;
    let spec = ToyTaskSpec {
        task: ToyTask::ReverseWithLexicon,
        alphabet: 20,
        min_len: 5,
        max_len: 10,
        pairs: 2000,
        seed: 1,
    };
    let files = write_toy_corpus(dir.path(), "rev", &spec, 200).map_err(err)?;
    let test_src = read_sentences(&files.test_src).map_err(err)?;
    let test_tgt = read_sentences(&files.test_tgt).map_err(err)?;

    let mut config = RunConfig::default();
    config.apply_config_text(A4_CONFIG).map_err(err)?;
    config.train_src = Some(files.train_src.clone());
    config.train_tgt = Some(files.train_tgt.clone());
    config.valid_src = Some(files.test_src.clone());
    config.valid_tgt = Some(files.test_tgt.clone());
    ensure(
        (config.emb_size, config.hidden_size, config.enc_layers, config.dec_layers, config.batch_size, config.epochs)
            == (64, 64, 1, 1, 32, 30)
            && config.beam.width == 10,
        || "toy config drifted from the A4 setup".into(),
    )?;

    let run = |baseline: bool, name: &str| -> Result<(TrainOutcome, f64), String> {
        let c = RunConfig {
            baseline,
            checkpoint_dir: dir.path().join(name),
            ..config.clone()
        };
        let out = train(&c).map_err(err)?;
        let hyps = beam_outputs(&out.model, &out, &test_src, &c.beam)?;
        let bleu = corpus_bleu(&hyps, &test_tgt).map_err(err)?.bleu;
        Ok((out, bleu))
    };
    let (bow, bow_bleu) = run(false, "bow")?;
    let (_, base_bleu) = run(true, "baseline")?;

    let first = load_checkpoint(&dir.path().join("bow").join("epoch-000.ckpt")).map_err(err)?;
    let f1_first = bag_overlap(&beam_outputs(&first, &bow, &test_src, &config.beam)?, &test_tgt)
        .map_err(err)?
        .f1;
    let f1_final = bag_overlap(&beam_outputs(&bow.model, &bow, &test_src, &config.beam)?, &test_tgt)
        .map_err(err)?
        .f1;
    let probe: Sentence = ["3", "1", "4"].map(String::from).to_vec();
    let probe_out = beam_outputs(&bow.model, &bow, &[probe], &config.beam)?[0].join(" ");
    let elapsed = started.elapsed();

    let detail = format!(
        "BoW {bow_bleu:.2} vs baseline {base_bleu:.2} (delta {:+.2}); BoW bag F1 {f1_first:.4} -> {f1_final:.4}; \
         \"3 1 4\" -> \"{probe_out}\"; {:.0}s",
        bow_bleu - base_bleu,
        elapsed.as_secs_f64()
    );
    ensure(bow_bleu >= 95.0 && base_bleu >= 95.0, || format!("BLEU below 95: {detail}"))?;
    ensure(bow_bleu >= base_bleu - 1.0, || format!("non-inferiority failed: {detail}"))?;
    ensure(f1_final > f1_first, || format!("bag F1 did not improve: {detail}"))?;
    ensure(elapsed < Duration::from_secs(15 * 60), || format!("too slow: {detail}"))?;
    Ok(detail)
}

// ---------------------------------------------------------------- A5

fn tiny_model(rng: &mut ChaCha8Rng, words: usize) -> Result<Seq2Seq, String> {
    let config = ModelConfig {
        emb_size: 4,
        hidden_size: 4,
        ..ModelConfig::toy(NUM_SPECIALS + words, NUM_SPECIALS + words)
    };
    let mut m = Seq2Seq::new(config, rng).map_err(err)?;
    m.randomize(rng, 2.0);
    Ok(m)
}

/// Every EOS-terminated output of at most `max_len` tokens counting the EOS.
fn all_outputs(vocab: usize, max_len: usize) -> Vec<Vec<usize>> {
    let emit: Vec<usize> = (0..vocab).filter(|&w| w != PAD && w != BOS && w != EOS).collect();
    let mut all = vec![vec![]];
    let mut frontier: Vec<Vec<usize>> = vec![vec![]];
    for _ in 1..max_len {
        frontier = frontier
            .iter()
            .flat_map(|p| {
                emit.iter().map(move |&w| {
                    let mut q = p.clone();
                    q.push(w);
                    q
                })
            })
            .collect();
        all.extend(frontier.iter().cloned());
    }
    all
}

fn a5_beam_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = BeamConfig {
        width: 5usize.pow(4),
        max_len: Some(4),
        ..BeamConfig::default()
    };
    for trial in 0..20 {
        let model = tiny_model(&mut rng, 5)?;
        let src: Vec<usize> = (0..rng.gen_range(1..5)).map(|_| rng.gen_range(NUM_SPECIALS..NUM_SPECIALS + 5)).collect();
        let mut best: Option<(f64, Vec<usize>, f64)> = None;
        for tokens in all_outputs(model.config().tgt_vocab, 4) {
            let ll = sequence_log_likelihood(&model, &src, &tokens).map_err(err)?;
            let h = Hypothesis {
                tokens,
                log_likelihood: ll,
                finished: true,
            };
            let s = config.score(&h).map_err(err)?;
            if best.as_ref().is_none_or(|(bs, bt, _)| s > *bs || (s == *bs && h.tokens < *bt)) {
                best = Some((s, h.tokens, ll));
            }
        }
        let (_, want, want_ll) = best.ok_or("nothing enumerated")?;
        let got = decode(&model, &src, &config).map_err(err)?;
        ensure(got.tokens == want, || format!("model {trial}: beam {:?} vs exhaustive {want:?}", got.tokens))?;
        ensure((got.log_likelihood - want_ll).abs() < 1e-9, || format!("model {trial}: likelihood mismatch"))?;
    }

    let spec = ToyTaskSpec {
        task: ToyTask::ReverseWithLexicon,
        alphabet: 20,
        min_len: 3,
        max_len: 8,
        pairs: 100,
        seed: 55,
    };
    let (sources, targets) = spec.generate().map_err(err)?;
    let src_vocab = Vocab::build(&sources, 100).map_err(err)?;
    let tgt_vocab = Vocab::build(&targets, 100).map_err(err)?;
    let mut model = Seq2Seq::new(ModelConfig::toy(src_vocab.len(), tgt_vocab.len()), &mut rng).map_err(err)?;
    model.randomize(&mut rng, 1.0);
    for (i, s) in sources.iter().enumerate() {
        let src = src_vocab.encode(s);
        let greedy = greedy_decode(&model, &src, None).map_err(err)?;
        let beam = decode(&model, &src, &BeamConfig::greedy()).map_err(err)?;
        ensure(beam.tokens == greedy.tokens, || format!("sentence {i}: width 1 differs from greedy"))?;
    }
    Ok("20 tiny models match exhaustive search at width 625; width 1 equals greedy on 100 sentences".into())
}

// ---------------------------------------------------------------- A6

fn toks(lines: &[&str]) -> Vec<Vec<String>> {
    lines.iter().map(|l| l.split_whitespace().map(String::from).collect()).collect()
}

fn a6_bleu_oracle() -> Check {
    let same = toks(&["the cat sat on the mat", "a quick brown fox jumps"]);
    let identity = corpus_bleu(&same, &same).map_err(err)?;
    ensure(format!("{:.2}", identity.bleu) == "100.00", || format!("identity {}", identity.bleu))?;
    let disjoint = corpus_bleu(&toks(&["a b c d"]), &toks(&["w x y z"])).map_err(err)?;
    ensure(format!("{:.2}", disjoint.bleu) == "0.00", || format!("disjoint {}", disjoint.bleu))?;
    let clipped = corpus_bleu(&toks(&["the the the the the the the"]), &toks(&["the cat is on the mat"])).map_err(err)?;
    let dp = (clipped.precisions[0] - 2.0 / 7.0).abs();
    ensure(dp < 1e-9, || format!("p1 off by {dp:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let vocab = ["a", "b", "c", "d", "e", "f"];
    let mut pairs: Vec<(Vec<String>, Vec<String>)> = (0..40)
        .map(|_| {
            let mut line = |lo: usize| {
                let n = rng.gen_range(lo..9);
                (0..n).map(|_| vocab.choose(&mut rng).unwrap().to_string()).collect()
            };
            let h = line(3);
            let r = line(4);
            (h, r)
        })
        .collect();
    let score = |p: &[(Vec<String>, Vec<String>)]| {
        let (h, r): (Vec<_>, Vec<_>) = p.iter().cloned().unzip();
        corpus_bleu(&h, &r)
    };
    let base = score(&pairs).map_err(err)?;
    for _ in 0..20 {
        pairs.shuffle(&mut rng);
        ensure(score(&pairs).map_err(err)? == base, || "BLEU changed under pair shuffling".into())?;
    }
    Ok(format!("identity 100.00, disjoint 0.00, p1 = 2/7 within {dp:.0e}, shuffle-invariant"))
}

// ---------------------------------------------------------------- A7

fn without_wall_clock(log: &str) -> Vec<String> {
    log.lines()
        .map(|l| l.rsplit_once('\t').map_or(l, |(head, _)| head).to_string())
        .collect()
}

fn a7_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let spec = ToyTaskSpec {
        task: ToyTask::ReverseWithLexicon,
        alphabet: 8,
        min_len: 2,
        max_len: 6,
        pairs: 96,
        seed: 7,
    };
    let files = write_toy_corpus(dir.path(), "toy", &spec, 16).map_err(err)?;
    let config = |name: &str| RunConfig {
        train_src: Some(files.train_src.clone()),
        train_tgt: Some(files.train_tgt.clone()),
        valid_src: Some(files.test_src.clone()),
        valid_tgt: Some(files.test_tgt.clone()),
        checkpoint_dir: dir.path().join(name),
        emb_size: 16,
        hidden_size: 16,
        enc_layers: 2,
        dec_layers: 2,
        dropout: 0.2,
        batch_size: 16,
        epochs: 3,
        seed: 77,
        ..RunConfig::default()
    };
    let a = train(&config("a")).map_err(err)?;
    train(&config("b")).map_err(err)?;
    let read = |p: &Path| fs::read(p).map_err(err);
    for name in ["epoch-000.ckpt", "epoch-001.ckpt", "epoch-002.ckpt", "model.ckpt", "src.vocab", "tgt.vocab"] {
        let (x, y) = (read(&dir.path().join("a").join(name))?, read(&dir.path().join("b").join(name))?);
        ensure(x == y, || format!("{name} differs between identical runs"))?;
    }
    let log = |n: &str| fs::read_to_string(dir.path().join(n).join("train.log")).map_err(err);
    let (la, lb) = (log("a")?, log("b")?);
    ensure(without_wall_clock(&la) == without_wall_clock(&lb), || "training logs differ".into())?;
    ensure(la.lines().count() == 4, || format!("expected 3 epoch lines, log:\n{la}"))?;

    let loaded = load_checkpoint(&a.final_checkpoint).map_err(err)?;
    let examples: Vec<ExamplePair> = read_sentences(&files.test_src)
        .map_err(err)?
        .iter()
        .zip(read_sentences(&files.test_tgt).map_err(err)?.iter())
        .take(5)
        .map(|(s, t)| ExamplePair::encode(&a.src_vocab, &a.tgt_vocab, s, t, false))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let batch = Batch::from_examples(&examples).map_err(err)?;
    let forward = |m: &Seq2Seq, mode: Mode| -> Result<Vec<u64>, String> {
        let mut g = Graph::new();
        let out = m.session(&mut g, mode).forward_teacher_forced(&batch).map_err(err)?;
        let mut bits: Vec<u64> = Vec::new();
        for v in out.probs.iter().chain([&out.bag_probs]) {
            bits.extend(g.value(*v).data().iter().map(|x| x.to_bits()));
        }
        Ok(bits)
    };
    for mode in [Mode::Eval, Mode::Train { dropout_seed: 9 }] {
        ensure(forward(&a.model, mode)? == forward(&loaded, mode)?, || format!("{mode:?} forward differs after reload"))?;
    }
    Ok("two identical runs: 6 artifacts and logs identical; reload forward bit-identical".into())
}

// ---------------------------------------------------------------- A8

fn a8_optimizer() -> Check {
    use bownmt::autodiff::ParameterStore;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let shapes: [&[usize]; 3] = [&[5, 7], &[7], &[3, 3]];
    let mut store = ParameterStore::new();
    for (i, shape) in shapes.iter().enumerate() {
        store.add(format!("p{i}"), Tensor::zeros(shape)).map_err(err)?;
    }
    let ids: Vec<_> = store.ids().collect();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let scale = 10f64.powf(rng.gen_range(-3.0..4.0));
        for &id in &ids {
            for x in store.grad_mut(id).data_mut() {
                *x = scale * rng.gen_range(-1.0..1.0);
            }
        }
        clip_gradients(&mut store, 10.0);
        let norm = store.global_grad_norm();
        worst = worst.max(norm);
        ensure(norm <= 10.0 + 1e-9, || format!("post-clip norm {norm}"))?;
    }

    let mut opt = OptimizerState::new(&store, AdamConfig::default());
    ensure(opt.config.lr == 3e-4, || format!("default lr {}", opt.config.lr))?;
    for &id in &ids {
        store.value_mut(id).fill(0.0);
        for x in store.grad_mut(id).data_mut() {
            *x = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        }
    }
    adam_step(&mut store, &mut opt).map_err(err)?;
    let mut step_err = 0.0f64;
    for &id in &ids {
        for &w in store.value(id).data() {
            step_err = step_err.max((w.abs() - 3e-4).abs());
        }
    }
    ensure(step_err < 1e-6, || format!("first step magnitude off by {step_err:e}"))?;

    let mut bowl = ParameterStore::new();
    let w = bowl.add("w", Tensor::scalar(1.0)).map_err(err)?;
    let mut opt = OptimizerState::new(&bowl, AdamConfig::default());
    let mut f = 1.0;
    for step in 0..10 {
        let x = bowl.value(w).item();
        bowl.grad_mut(w).data_mut()[0] = 2.0 * x;
        adam_step(&mut bowl, &mut opt).map_err(err)?;
        let next = bowl.value(w).item().powi(2);
        ensure(next < f, || format!("step {step}: f went from {f} to {next}"))?;
        f = next;
    }
    Ok(format!(
        "max post-clip norm {worst:.12}; first step off by {step_err:.1e}; f(w) = w^2 fell to {f:.6}"
    ))
}

// ---------------------------------------------------------------- main

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 8] = [
        ("A1", "gradient correctness", a1_gradients),
        ("A2", "schedule exactness", a2_schedule),
        ("A3", "loss oracles", a3_loss_oracles),
        ("A4", "toy convergence A/B", a4_toy_convergence),
        ("A5", "beam-search oracle", a5_beam_oracle),
        ("A6", "BLEU oracle", a6_bleu_oracle),
        ("A7", "determinism and persistence", a7_determinism),
        ("A8", "clipping and optimizer", a8_optimizer),
    ];
    let mut failed = 0;
    for (id, title, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| f == id) {
            continue;
        }
        let started = Instant::now();
        let outcome = check();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{id} PASS {title} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL {title} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
