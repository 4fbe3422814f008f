//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero when any criterion fails.

use std::collections::VecDeque;
use std::f64::consts::LN_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bpt::metrics::parse_metrics;
use bpt_core::attention::{gsa_backward, gsa_forward, AttentionParams};
use bpt_core::graph::{build_graph, count_edges_oracle, enumerate_edges_oracle, span_range, Mode, RelationId};
use bpt_core::model::{
    dense_reference_forward, forward, gradcheck_config, gradient_check, lm_logits, ModelParams, RunConfig, Task,
};
use bpt_core::numeric::{
    cross_entropy, ffn, ffn_backward, layer_norm, layer_norm_backward, matmul, matmul_grad, relative_error,
    segment_softmax, segment_softmax_backward, FfnParams, Matrix, SegmentVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

type Criterion<'a> = (u32, &'static str, Duration, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

const GRID_LENGTHS: [usize; 8] = [2, 4, 8, 16, 32, 64, 128, 256];
const GRID_K: [usize; 4] = [1, 2, 4, 8];

fn partition() -> Outcome {
    let mut checked = 0;
    for n in GRID_LENGTHS {
        for k in GRID_K {
            let g = build_graph(n, k, Mode::Bidirectional).map_err(|e| e.to_string())?;
            let shape = g.shape();
            for t in 0..n {
                let mut spans: Vec<_> = g
                    .predecessors(t)
                    .filter(|(_, r)| !matches!(r, RelationId::Anc { .. }))
                    .map(|(s, _)| span_range(shape.node_at(s).unwrap(), shape).unwrap())
                    .collect();
                spans.sort_by_key(|r| r.start);
                let mut next = 0;
                for r in spans {
                    ensure(r.start == next, || format!("n={n} k={k} token {t}: gap or overlap at {next}"))?;
                    next = r.end;
                }
                ensure(next == n, || format!("n={n} k={k} token {t}: coverage ends at {next}"))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} token contexts partition the sequence"))
}

fn construction() -> Outcome {
    let mut edges = 0;
    for mode in [Mode::Bidirectional, Mode::Causal] {
        for n in GRID_LENGTHS {
            for k in GRID_K {
                let g = build_graph(n, k, mode).map_err(|e| e.to_string())?;
                let mut built: Vec<_> = g.edges().collect();
                let mut oracle: Vec<_> = enumerate_edges_oracle(n, k, mode)
                    .map_err(|e| e.to_string())?
                    .into_iter()
                    .map(|e| (e.src, e.dst, e.relation))
                    .collect();
                built.sort();
                oracle.sort();
                ensure(built == oracle, || format!("{mode} n={n} k={k}: edge sets differ"))?;
                let counts = count_edges_oracle(n, k, mode).map_err(|e| e.to_string())?;
                ensure(counts.total() == g.edge_count(), || format!("{mode} n={n} k={k}: count differs"))?;
                edges += built.len();
            }
        }
    }
    Ok(format!("{edges} edges identical to the oracle"))
}

fn distance() -> Outcome {
    let mut pairs = 0usize;
    for n in [2, 4, 8, 16, 32, 64, 128] {
        for k in [1, 4] {
            let g = build_graph(n, k, Mode::Bidirectional).map_err(|e| e.to_string())?;
            let mut succ = vec![Vec::new(); g.node_count()];
            for (s, d, _) in g.edges() {
                succ[s].push(d);
            }
            for src in 0..n {
                let mut dist = vec![usize::MAX; g.node_count()];
                dist[src] = 0;
                let mut queue = VecDeque::from([src]);
                while let Some(u) = queue.pop_front() {
                    if dist[u] == 2 {
                        continue;
                    }
                    for &v in &succ[u] {
                        if dist[v] == usize::MAX {
                            dist[v] = dist[u] + 1;
                            queue.push_back(v);
                        }
                    }
                }
                for (dst, &d) in dist[..n].iter().enumerate() {
                    ensure(d <= 2, || format!("n={n} k={k}: {src} -> {dst} needs more than 2 hops"))?;
                }
                pairs += n;
            }
        }
    }
    Ok(format!("{pairs} ordered token pairs within 2 hops"))
}

fn complexity() -> Outcome {
    let mut worst_ratio: f64 = 0.0;
    let mut worst_growth: f64 = 0.0;
    let mut ctx_growth = Vec::new();
    for k in GRID_K {
        for n in GRID_LENGTHS {
            let small = count_edges_oracle(n, k, Mode::Bidirectional).map_err(|e| e.to_string())?;
            let large = count_edges_oracle(2 * n, k, Mode::Bidirectional).map_err(|e| e.to_string())?;
            let growth = large.total() as f64 / small.total() as f64;
            ensure(growth < 4.0, || format!("k={k} n={n}: total edges grew {growth:.3}x"))?;
            worst_growth = worst_growth.max(growth);
            if n > k {
                let ratio = small.ctx() as f64 / (k as f64 * n as f64 * (n as f64 / k as f64).log2());
                ensure(ratio <= 4.0, || format!("k={k} n={n}: ctx/(k n log2(n/k)) = {ratio:.3}"))?;
                worst_ratio = worst_ratio.max(ratio);
                ctx_growth.push(large.ctx() as f64 / small.ctx() as f64);
            }
        }
    }
    let max_ctx_growth = ctx_growth.iter().copied().fold(0.0, f64::max);
    Ok(format!(
        "max ctx/(k n log2(n/k)) = {worst_ratio:.3}, max total growth per doubling = {worst_growth:.3}, \
         max ctx growth per doubling (n > k) = {max_ctx_growth:.3}"
    ))
}

fn degeneration() -> Outcome {
    let mut worst: f64 = 0.0;
    for mode in [Mode::Causal, Mode::Bidirectional] {
        for layers in [1, 2] {
            let base = if mode == Mode::Causal { RunConfig::default() } else { RunConfig::classification() };
            let cfg = RunConfig {
                n_max: 16,
                k: 16,
                layers,
                d_model: 32,
                heads: 4,
                d_ff: 64,
                vocab_size: 20,
                num_classes: 3,
                ..base
            };
            let mut params = ModelParams::<f64>::init(&cfg, 100 + layers as u64).map_err(|e| e.to_string())?;
            for l in &mut params.layers {
                l.attention.relations.fill(0.0);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(layers as u64);
            let tokens: Vec<u32> = (0..16).map(|_| rng.gen_range(1..20)).collect();
            let graph = build_graph(16, 16, mode).map_err(|e| e.to_string())?;
            let sparse = forward(&tokens, &params, &graph).map_err(|e| e.to_string())?;
            let dense = dense_reference_forward(&tokens, &params, mode == Mode::Causal).map_err(|e| e.to_string())?;
            for t in 0..16 {
                for (a, b) in sparse.row(t).iter().zip(dense.row(t)) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    ensure(worst < 1e-8, || format!("max abs difference {worst:e}"))?;
    Ok(format!("max abs difference {worst:e} over N in {{1,2}}, both modes"))
}

const KERNEL_H: f64 = 1e-6;

/// Largest relative error between `analytic[i]` and central differences of
/// `f` with respect to `inputs[i]`.
fn fd_check(inputs: &[Matrix<f64>], analytic: &[Matrix<f64>], f: impl Fn(&[Matrix<f64>]) -> f64) -> f64 {
    let mut probe = inputs.to_vec();
    let mut worst: f64 = 0.0;
    for (t, a) in analytic.iter().enumerate() {
        let mut numeric = Vec::with_capacity(a.len());
        for i in 0..probe[t].len() {
            let orig = probe[t].data()[i];
            probe[t].data_mut()[i] = orig + KERNEL_H;
            let plus = f(&probe);
            probe[t].data_mut()[i] = orig - KERNEL_H;
            let minus = f(&probe);
            probe[t].data_mut()[i] = orig;
            numeric.push((plus - minus) / (2.0 * KERNEL_H));
        }
        worst = worst.max(relative_error(a.data(), &numeric));
    }
    worst
}

fn weighted_sum(m: &Matrix<f64>, w: &Matrix<f64>) -> f64 {
    m.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn kernel_errors() -> Result<Vec<(&'static str, f64)>, bpt_core::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::new();

    let (a, b) = (random_matrix(5, 7, &mut rng), random_matrix(7, 4, &mut rng));
    let w = random_matrix(5, 4, &mut rng);
    let (da, db) = matmul_grad(&a, &b, &w)?;
    out.push(("matmul", fd_check(&[a, b], &[da, db], |x| weighted_sum(&matmul(&x[0], &x[1]).unwrap(), &w))));

    let offsets = vec![0, 3, 4, 9, 15];
    let logits = random_matrix(1, 15, &mut rng);
    let r: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let seg =
        |x: &Matrix<f64>| segment_softmax(&SegmentVector::new(x.data().to_vec(), offsets.clone()).unwrap()).unwrap();
    let dlogits = segment_softmax_backward(&seg(&logits), &r)?;
    let dl = Matrix::from_vec(1, 15, dlogits.values)?;
    out.push((
        "segment softmax",
        fd_check(&[logits], &[dl], |x| seg(&x[0]).values.iter().zip(&r).map(|(p, q)| p * q).sum()),
    ));

    let (x, g, bias) = (random_matrix(4, 6, &mut rng), random_matrix(1, 6, &mut rng), random_matrix(1, 6, &mut rng));
    let w = random_matrix(4, 6, &mut rng);
    let (_, cache) = layer_norm(&x, &g, &bias)?;
    let (dx, dg, dbias) = layer_norm_backward(&cache, &g, &w)?;
    out.push((
        "layer norm",
        fd_check(&[x, g, bias], &[dx, dg, dbias], |v| weighted_sum(&layer_norm(&v[0], &v[1], &v[2]).unwrap().0, &w)),
    ));

    let p = FfnParams {
        w1: random_matrix(6, 9, &mut rng),
        b1: random_matrix(1, 9, &mut rng),
        w2: random_matrix(9, 6, &mut rng),
        b2: random_matrix(1, 6, &mut rng),
    };
    let x = random_matrix(4, 6, &mut rng);
    let w = random_matrix(4, 6, &mut rng);
    let (_, cache) = ffn(&x, &p)?;
    let (dx, dp) = ffn_backward(&cache, &p, &w)?;
    out.push((
        "feed-forward",
        fd_check(
            &[x, p.w1.clone(), p.b1.clone(), p.w2.clone(), p.b2.clone()],
            &[dx, dp.w1, dp.b1, dp.w2, dp.b2],
            |v| {
                let q = FfnParams { w1: v[1].clone(), b1: v[2].clone(), w2: v[3].clone(), b2: v[4].clone() };
                weighted_sum(&ffn(&v[0], &q).unwrap().0, &w)
            },
        ),
    ));

    let logits = random_matrix(5, 7, &mut rng);
    let targets = [0, 3, 6, 2, 2];
    let mask = [true, true, false, true, true];
    let (_, dlogits) = cross_entropy(&logits, &targets, &mask)?;
    out.push(("cross entropy", fd_check(&[logits], &[dlogits], |v| cross_entropy(&v[0], &targets, &mask).unwrap().0)));

    for (mode, name) in [(Mode::Bidirectional, "graph attention (bi)"), (Mode::Causal, "graph attention (causal)")] {
        let graph = build_graph(11, 2, mode)?;
        let cfg = RunConfig {
            n_max: 16,
            k: 2,
            d_model: 8,
            heads: 2,
            vocab_size: 5,
            num_classes: 2,
            mode,
            ..RunConfig::default()
        };
        let layout = cfg.relation_layout()?;
        let mut params = AttentionParams::<f64>::zeros(8, 2, layout)?;
        params.wq = random_matrix(8, 8, &mut rng);
        params.wk = random_matrix(8, 8, &mut rng);
        params.wv = random_matrix(8, 8, &mut rng);
        params.wo = random_matrix(8, 8, &mut rng);
        params.relations = random_matrix(layout.len(), 4, &mut rng);
        let h = random_matrix(graph.node_count(), 8, &mut rng);
        let w = random_matrix(graph.node_count(), 8, &mut rng);
        let (_, cache) = gsa_forward(&graph, &h, &params, None)?;
        let (dh, dp) = gsa_backward(&graph, &h, &params, &cache, &w)?;
        let inputs =
            [h, params.wq.clone(), params.wk.clone(), params.wv.clone(), params.wo.clone(), params.relations.clone()];
        let analytic = [dh, dp.wq, dp.wk, dp.wv, dp.wo, dp.relations];
        let err = fd_check(&inputs, &analytic, |v| {
            let mut q = params.clone();
            q.wq = v[1].clone();
            q.wk = v[2].clone();
            q.wv = v[3].clone();
            q.wo = v[4].clone();
            q.relations = v[5].clone();
            weighted_sum(&gsa_forward(&graph, &v[0], &q, None).unwrap().0, &w)
        });
        out.push((name, err));
    }
    Ok(out)
}

fn gradients() -> Outcome {
    let mut lines = Vec::new();
    for task in [Task::LanguageModel, Task::Classification] {
        let report = gradient_check(&gradcheck_config(task), 8, 1, 1e-5).map_err(|e| e.to_string())?;
        for g in &report.groups {
            ensure(g.rel_error < 1e-4, || format!("{task:?} {}: relative error {:e}", g.name, g.rel_error))?;
        }
        lines.push(format!("{task:?} model max {:e} over {} tensors", report.max_error(), report.groups.len()));
    }
    let kernels = kernel_errors().map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (name, err) in &kernels {
        ensure(*err < 1e-6, || format!("kernel {name}: relative error {err:e}"))?;
        worst = worst.max(*err);
    }
    lines.push(format!("kernels max {worst:e}"));
    Ok(lines.join("; "))
}

fn causality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut compared = 0usize;
    for trial in 0..100u64 {
        let n = rng.gen_range(2..=64);
        let k = rng.gen_range(1..=4);
        let cfg = RunConfig { n_max: 64, k, d_model: 16, heads: 2, d_ff: 32, vocab_size: 20, ..RunConfig::default() };
        let mut params = ModelParams::<f64>::init(&cfg, trial).map_err(|e| e.to_string())?;
        for l in &mut params.layers {
            for x in l.attention.relations.data_mut() {
                *x = rng.gen_range(-0.5..0.5);
            }
        }
        let graph = build_graph(n, k, Mode::Causal).map_err(|e| e.to_string())?;
        let tokens: Vec<u32> = (0..n).map(|_| rng.gen_range(1..20)).collect();
        let j = rng.gen_range(1..n);
        let mut changed = tokens.clone();
        changed[j] = 1 + (changed[j] + rng.gen_range(0..18)) % 19;
        if changed[j] == tokens[j] {
            changed[j] = 1 + changed[j] % 19;
        }
        let a = lm_logits(&forward(&tokens, &params, &graph).map_err(|e| e.to_string())?, &params)
            .map_err(|e| e.to_string())?;
        let b = lm_logits(&forward(&changed, &params, &graph).map_err(|e| e.to_string())?, &params)
            .map_err(|e| e.to_string())?;
        for t in 0..j {
            let same = a.row(t).iter().zip(b.row(t)).all(|(x, y)| x.to_bits() == y.to_bits());
            ensure(same, || format!("trial {trial}: position {t} changed when token {j} was perturbed"))?;
            compared += 1;
        }
    }
    Ok(format!("100 trials, {compared} earlier positions bit-identical"))
}

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut segments = 0usize;
    for _ in 0..50 {
        let n = rng.gen_range(1..=128);
        let k = rng.gen_range(1..=8);
        let mode = if rng.gen() { Mode::Causal } else { Mode::Bidirectional };
        let heads = [1, 2, 4][rng.gen_range(0..3)];
        let cfg = RunConfig {
            n_max: 128,
            k,
            d_model: 16,
            heads,
            vocab_size: 5,
            num_classes: 2,
            mode,
            ..RunConfig::default()
        };
        let layout = cfg.relation_layout().map_err(|e| e.to_string())?;
        let mut params = AttentionParams::<f64>::zeros(16, heads, layout).map_err(|e| e.to_string())?;
        params.wq = Matrix::from_fn(16, 16, |_, _| rng.gen_range(-3.0..3.0));
        params.wk = Matrix::from_fn(16, 16, |_, _| rng.gen_range(-3.0..3.0));
        params.relations = Matrix::from_fn(layout.len(), 16 / heads, |_, _| rng.gen_range(-3.0..3.0));
        let graph = build_graph(n, k, mode).map_err(|e| e.to_string())?;
        let h = Matrix::from_fn(graph.node_count(), 16, |_, _| rng.gen_range(-2.0..2.0));
        let (_, cache) = gsa_forward(&graph, &h, &params, None).map_err(|e| e.to_string())?;
        for head in 0..heads {
            let w = cache.trace.head_weights(head);
            for u in 0..graph.node_count() {
                let s: f64 = w[graph.segment(u)].iter().sum();
                worst = worst.max((s - 1.0).abs());
                segments += 1;
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("{segments} destination/head segments, max |sum - 1| = {worst:e}"))
}

fn bpt_binary() -> &'static str {
    env!("CARGO_BIN_EXE_bpt")
}

fn run_bpt(args: &[&str]) -> Result<String, String> {
    let out = Command::new(bpt_binary()).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("bpt {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("temporary paths are UTF-8")
}

const PATTERN: &str =
    "the quick brown fox jumps over the lazy dog while five wizards box jackdaws quietly at dawn, ok then";

fn repetitive_corpus() -> String {
    assert_eq!(PATTERN.len(), 100);
    PATTERN.repeat(102)
}

fn marker_corpus(samples: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for i in 0..samples {
        let len = rng.gen_range(5..=20);
        let mut words: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..40))).collect();
        let label = if i % 2 == 0 { "pos" } else { "neg" };
        if label == "pos" {
            let at = rng.gen_range(0..len);
            words[at] = "marker".to_owned();
        }
        text.push_str(&format!("{label}\t{}\n", words.join(" ")));
    }
    text
}

fn lm_sanity(dir: &Path) -> Outcome {
    let data = dir.join("repetitive.txt");
    std::fs::write(&data, repetitive_corpus()).map_err(|e| e.to_string())?;
    let config = dir.join("lm.cfg");
    std::fs::write(&config, "n_max = 128\nk = 4\nlayers = 2\nd_model = 64\nheads = 4\nd_ff = 256\nsteps = 2000\n")
        .map_err(|e| e.to_string())?;
    let stream = run_bpt(&["train-lm", "--data", path_str(&data), "--config", path_str(&config), "--seed", "1"])?;
    let (header, rows) = parse_metrics(&stream).map_err(|e| e.to_string())?;
    ensure(header[2] == "train_bpc" && header[4] == "valid_bpc", || format!("unexpected header {header:?}"))?;
    for r in &rows {
        for (nats, bpc) in [(r[1], r[2]), (r[3], r[4])] {
            ensure((nats / LN_2 - bpc).abs() <= 1e-12 * bpc.abs().max(1.0), || {
                format!("step {}: bpc {bpc} != {nats} / ln 2", r[0])
            })?;
        }
    }
    let hit = rows.iter().find(|r| r[1] < 0.1 && r[0] <= 2000.0);
    let last = rows.last().ok_or("no metrics rows")?;
    match hit {
        Some(r) => Ok(format!(
            "train loss {:.4} nats at step {}, {:.4} at step {}; bpc = nats/ln 2 on all rows",
            r[1], r[0], last[1], last[0]
        )),
        None => Err(format!("train loss still {:.4} at step {}", last[1], last[0])),
    }
}

fn cls_sanity(dir: &Path) -> Outcome {
    let data = dir.join("marker.tsv");
    std::fs::write(&data, marker_corpus(500, 7)).map_err(|e| e.to_string())?;
    let ckpt = dir.join("marker.ckpt");
    let stream = run_bpt(&["train-cls", "--data", path_str(&data), "--seed", "1", "--out", path_str(&ckpt)])?;
    let (header, rows) = parse_metrics(&stream).map_err(|e| e.to_string())?;
    ensure(header[2] == "train_acc", || format!("unexpected header {header:?}"))?;
    let last = rows.last().ok_or("no metrics rows")?;
    ensure(last[0] <= 1000.0, || format!("ran {} steps", last[0]))?;
    match rows.iter().find(|r| r[2] == 1.0) {
        Some(r) => Ok(format!("100% train accuracy at step {}; final valid accuracy {}", r[0], last[4])),
        None => Err(format!("best train accuracy {}", rows.iter().map(|r| r[2]).fold(0.0, f64::max))),
    }
}

fn determinism(dir: &Path) -> Outcome {
    let lm = dir.join("det-lm.txt");
    std::fs::write(&lm, PATTERN.repeat(12)).map_err(|e| e.to_string())?;
    let cls = dir.join("det-cls.tsv");
    std::fs::write(&cls, marker_corpus(60, 3)).map_err(|e| e.to_string())?;
    let small = "n_max = 32\nd_model = 16\nheads = 2\nd_ff = 32\nsteps = 12\nbatch_size = 4\nlog_every = 4\n";
    let lm_cfg = dir.join("det-lm.cfg");
    std::fs::write(&lm_cfg, format!("{small}k = 4\n")).map_err(|e| e.to_string())?;
    let cls_cfg = dir.join("det-cls.cfg");
    std::fs::write(&cls_cfg, small).map_err(|e| e.to_string())?;

    let mut checked = Vec::new();
    let twice = |args: &[String], files: &[&str], run: usize| -> Result<(String, Vec<Vec<u8>>), String> {
        let args: Vec<String> = args.iter().map(|a| a.replace("{run}", &run.to_string())).collect();
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let stdout = run_bpt(&refs)?;
        let blobs = files
            .iter()
            .map(|f| std::fs::read(dir.join(f.replace("{run}", &run.to_string()))).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((stdout, blobs))
    };
    let d = |p: &str| path_str(&dir.join(p)).to_owned();
    let s = |x: &str| x.to_owned();
    let cases: Vec<(&str, Vec<String>, Vec<&str>)> = vec![
        (
            "graph json",
            vec![s("graph"), s("--n"), s("13"), s("--k"), s("2"), s("--mode"), s("bi"), s("--format"), s("json")],
            vec![],
        ),
        (
            "graph dot",
            vec![s("graph"), s("--n"), s("13"), s("--k"), s("2"), s("--mode"), s("causal"), s("--format"), s("dot")],
            vec![],
        ),
        (
            "train-lm",
            vec![
                s("train-lm"),
                s("--data"),
                d("det-lm.txt"),
                s("--config"),
                d("det-lm.cfg"),
                s("--seed"),
                s("9"),
                s("--precision"),
                s("verify"),
                s("--out"),
                d("lm-{run}.ckpt"),
            ],
            vec!["lm-{run}.ckpt", "lm-{run}.ckpt.last"],
        ),
        (
            "train-cls",
            vec![
                s("train-cls"),
                s("--data"),
                d("det-cls.tsv"),
                s("--config"),
                d("det-cls.cfg"),
                s("--seed"),
                s("9"),
                s("--precision"),
                s("verify"),
                s("--out"),
                d("cls-{run}.ckpt"),
            ],
            vec!["cls-{run}.ckpt", "cls-{run}.ckpt.last"],
        ),
        (
            "eval",
            vec![
                s("eval"),
                s("--checkpoint"),
                d("lm-0.ckpt"),
                s("--data"),
                d("det-lm.txt"),
                s("--trace"),
                d("trace-{run}.json"),
            ],
            vec!["trace-{run}.json"],
        ),
        (
            "shift-eval",
            vec![
                s("shift-eval"),
                s("--checkpoint"),
                d("cls-0.ckpt"),
                s("--data"),
                d("det-cls.tsv"),
                s("--shift"),
                s("3"),
            ],
            vec![],
        ),
        ("grad-check", vec![s("grad-check"), s("--seed"), s("4")], vec![]),
        (
            "bench",
            vec![
                s("bench"),
                s("--lengths"),
                s("16,32"),
                s("--k"),
                s("2"),
                s("--precision"),
                s("verify"),
                s("--seed"),
                s("3"),
                s("--budget"),
                s("64"),
            ],
            vec![],
        ),
    ];
    for (name, args, files) in cases {
        let (out0, blobs0) = twice(&args, &files, 0)?;
        let (out1, blobs1) = twice(&args, &files, 1)?;
        if name == "bench" {
            // Throughput columns are wall-clock measurements; the counts must agree.
            let cols = |t: &str| -> Vec<String> {
                t.lines().map(|l| l.split('\t').take(3).collect::<Vec<_>>().join("\t")).collect()
            };
            ensure(cols(&out0) == cols(&out1), || "bench count columns differ".to_owned())?;
        } else {
            ensure(out0 == out1, || format!("{name}: standard output differs between runs"))?;
        }
        ensure(blobs0 == blobs1, || format!("{name}: written files differ between runs"))?;
        if name.starts_with("train") {
            let (_, rows) = parse_metrics(&out0).map_err(|e| e.to_string())?;
            ensure(rows.iter().all(|r| r[9] == 0.0), || format!("{name}: wall_secs not zeroed in verify mode"))?;
        }
        checked.push(name);
    }
    Ok(format!("bit-identical reruns: {}", checked.join(", ")))
}

fn shift_table(dir: &Path) -> Outcome {
    let ckpt = dir.join("marker.ckpt");
    let data = dir.join("marker.tsv");
    ensure(ckpt.exists(), || "classification checkpoint from criterion 10 is missing".to_owned())?;
    let text = run_bpt(&["shift-eval", "--checkpoint", path_str(&ckpt), "--data", path_str(&data), "--shift", "7"])?;
    let (header, rows) = parse_metrics(&text).map_err(|e| e.to_string())?;
    ensure(header == ["shift", "accuracy", "delta"], || format!("unexpected header {header:?}"))?;
    ensure(rows.len() == 8, || format!("{} rows instead of 8", rows.len()))?;
    for (z, r) in rows.iter().enumerate() {
        ensure(r[0] == z as f64 && (0.0..=1.0).contains(&r[1]), || format!("bad row {r:?}"))?;
        ensure((r[2] - (r[1] - rows[0][1])).abs() < 1e-12, || format!("bad delta in row {r:?}"))?;
    }
    let deltas: Vec<String> = rows.iter().map(|r| format!("{:+.3}", r[2])).collect();
    Ok(format!("accuracy at shift 0 = {:.3}; deltas for shifts 0-7: {}", rows[0][1], deltas.join(" ")))
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let d = dir.path();
    let criteria: Vec<Criterion> = vec![
        (1, "partition invariant", Duration::from_secs(10), Box::new(partition)),
        (2, "construction matches oracle", Duration::from_secs(30), Box::new(construction)),
        (3, "token distance at most 2", Duration::from_secs(30), Box::new(distance)),
        (4, "subquadratic edge growth", Duration::from_secs(5), Box::new(complexity)),
        (5, "degeneration to dense attention", Duration::from_secs(5), Box::new(degeneration)),
        (6, "gradient correctness", Duration::from_secs(120), Box::new(gradients)),
        (7, "exact causality", Duration::from_secs(10), Box::new(causality)),
        (8, "softmax normalization", Duration::from_secs(5), Box::new(normalization)),
        (9, "desk-scale language model", Duration::from_secs(600), Box::new(move || lm_sanity(d))),
        (10, "desk-scale classifier", Duration::from_secs(300), Box::new(move || cls_sanity(d))),
        (11, "determinism", Duration::from_secs(300), Box::new(move || determinism(d))),
        (12, "shift evaluation table", Duration::from_secs(60), Box::new(move || shift_table(d))),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(format!(
                "panicked: {:?}",
                p.downcast_ref::<String>().map(String::as_str).or(p.downcast_ref::<&str>().copied())
            ))
        });
        let secs = start.elapsed().as_secs_f64();
        let outcome = match outcome {
            Ok(detail) if start.elapsed() > limit => {
                Err(format!("{detail}; took {secs:.1}s, limit {}s", limit.as_secs()))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("[PASS] criterion {id}: {name} ({detail}; {secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] criterion {id}: {name} ({why}; {secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
