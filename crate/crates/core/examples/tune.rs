// Scratch harness for sizing the acceptance suite. Not part of the build.
use std::time::Instant;

use bmc_core::denoiser::{fit_tabular, generate_corpus, CorpusParams, Denoiser};
use bmc_core::diffusion::apply_mask;
use bmc_core::estimator::BmcConfig;
use bmc_core::evaluation::{ablation_suite, auroc, diagnose, AblationAxis};
use bmc_core::inference::{mgrs, GenerationConfig, MgrsConfig};
use bmc_core::metrics::AnswerExtractor;

fn main() {
    let phase = std::env::args().nth(1).unwrap_or_else(|| "A".to_string());
    let params = CorpusParams::default();
    let (corpus, lexicon) = generate_corpus(&params).unwrap();
    let n_true = corpus.iter().filter(|r| r.label).count();
    eprintln!("corpus n={} true={} false={}", corpus.len(), n_true, corpus.len() - n_true);

    match phase.as_str() {
        "A" => {
            for smoothing in [0.01, 0.05, 0.2] {
                let t0 = Instant::now();
                let den = fit_tabular(&corpus, &lexicon, smoothing).unwrap();
                let fit_ms = t0.elapsed().as_millis();
                let (state, _) =
                    apply_mask(&corpus[0].candidate, 0.9, lexicon.vocabulary().unwrap().mask_id(), 7)
                        .unwrap();
                let full = corpus[0].problem.query.concat(&state);
                let t1 = Instant::now();
                let reps = 20_000u32;
                let mut sink = 0.0;
                for _ in 0..reps {
                    let out = den.predict(&full).unwrap();
                    sink += out.rows().first().map(|(_, r)| r[0]).unwrap_or(0.0);
                }
                let ns = t1.elapsed().as_nanos() as f64 / f64::from(reps);
                eprintln!("smoothing={smoothing}: fit {fit_ms}ms, predict {ns:.0}ns ({sink:.3})");
            }
        }
        "B" => {
            for smoothing in [0.05, 0.1, 0.2] {
                let den = fit_tabular(&corpus, &lexicon, smoothing).unwrap();
                let t0 = Instant::now();
                let cfg = BmcConfig { keep_transcripts: true, ..BmcConfig::default() };
                let recs = diagnose(&corpus, &den, &lexicon, &cfg).unwrap();
                let secs = t0.elapsed().as_secs_f64();
                let names: Vec<_> = recs[0].scores.keys().cloned().collect();
                let mut line = format!("smoothing={smoothing} ({secs:.1}s):");
                for name in &names {
                    line.push_str(&format!(" {name}={:.4}", auroc(&recs, name).unwrap()));
                }
                eprintln!("{line}");
            }
        }
        "C" => {
            let smoothing: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(0.05);
            let den = fit_tabular(&corpus, &lexicon, smoothing).unwrap();
            let seeds = [0u64, 1, 2, 3, 4];
            let base = BmcConfig::default();
            for (name, axis) in [
                ("gamma", AblationAxis::Gamma(vec![0.0, 0.5, 0.9, 1.0])),
                ("steps_k", AblationAxis::StepsK(vec![4, 16])),
                ("n_ensemble", AblationAxis::Ensemble(vec![1, 4])),
            ] {
                let t0 = Instant::now();
                let rows = ablation_suite(&corpus, &den, &lexicon, &axis, &base, &seeds).unwrap();
                eprintln!("axis {name} ({:.1}s):", t0.elapsed().as_secs_f64());
                for row in rows {
                    eprintln!(
                        "  {}={} seed={} auroc={:.4} aupr={:.4} cost={:.1}",
                        row.axis, row.setting, row.seed, row.auroc, row.aupr, row.step_cost
                    );
                }
            }
        }
        "D" => {
            let smoothing: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(0.05);
            let den = fit_tabular(&corpus, &lexicon, smoothing).unwrap();
            let extractor = AnswerExtractor::numeric();
            let problems: Vec<_> = corpus.iter().take(150).map(|r| &r.problem).collect();
            for tau in [0.5, 0.6, 0.7, 0.75, 0.8, 0.85] {
                for n_max in [1usize, 4] {
                    if n_max == 1 && tau != 0.5 {
                        continue;
                    }
                    let config = MgrsConfig {
                        tau,
                        n_max,
                        bmc: BmcConfig::default(),
                        generation: GenerationConfig::new(18),
                    };
                    let t0 = Instant::now();
                    let mut correct = 0usize;
                    let mut samples = 0usize;
                    let mut exits = 0usize;
                    for (i, p) in problems.iter().enumerate() {
                        let out = mgrs(&p.query, &den, &lexicon, &config, 1000 + i as u64).unwrap();
                        let text = lexicon.render(&out.chosen);
                        let gold = extractor.canonicalize_gold(&p.answer.to_string());
                        if extractor.extract(&text).is_some_and(|e| e.answer == gold) {
                            correct += 1;
                        }
                        samples += out.samples_used;
                        exits += usize::from(out.early_exit);
                    }
                    eprintln!(
                        "tau={tau} n_max={n_max}: acc={:.3} mean_samples={:.2} exits={} ({:.1}s)",
                        correct as f64 / problems.len() as f64,
                        samples as f64 / problems.len() as f64,
                        exits,
                        t0.elapsed().as_secs_f64()
                    );
                }
            }
        }
        "E" => {
            let smoothing: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(0.1);
            let den = fit_tabular(&corpus, &lexicon, smoothing).unwrap();
            let cfg = BmcConfig::default();
            let recs = diagnose(&corpus, &den, &lexicon, &cfg).unwrap();
            for name in ["bmc", "confidence", "s_tok", "s_ans"] {
                let mut line = format!("{name}: all={:.4}", auroc(&recs, name).unwrap());
                let mean = |pred: &dyn Fn(usize) -> bool| {
                    let vals: Vec<f64> = recs
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| pred(*i))
                        .map(|(_, r)| r.scores[name])
                        .collect();
                    vals.iter().sum::<f64>() / vals.len() as f64
                };
                line.push_str(&format!(" true_mean={:.3}", mean(&|i| corpus[i].label)));
                for kind in bmc_core::denoiser::FaultKind::ALL {
                    let sub: Vec<_> = recs
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| corpus[*i].label || corpus[*i].fault == Some(kind))
                        .map(|(_, r)| r.clone())
                        .collect();
                    line.push_str(&format!(
                        " {kind:?}={:.3}/{:.3}",
                        auroc(&sub, name).unwrap(),
                        mean(&|i| corpus[i].fault == Some(kind))
                    ));
                }
                eprintln!("{line}");
            }
        }
        "F" => {
            use bmc_core::diffusion::reconstruct;
            use bmc_core::schedule::NoiseSchedule;
            let smoothing: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(0.1);
            let den = fit_tabular(&corpus, &lexicon, smoothing).unwrap();
            let schedule = NoiseSchedule::linear(1000).unwrap();
            let mask = lexicon.vocabulary().unwrap().mask_id();
            // chain offsets of n1, n2, diff, answer within the candidate
            let slots = [2usize, 6, 14, 17];
            let mut hit = [0usize; 4];
            let mut seen = [0usize; 4];
            let mut ans_given_prior = [0usize; 2];
            let mut ans_prior_n = [0usize; 2];
            let mut shown = 0;
            for (i, r) in corpus.iter().enumerate().filter(|(_, r)| r.label).take(150) {
                for rep in 0..4u64 {
                    let seed = 7_000 + 31 * i as u64 + rep;
                    let (x_tilde, pattern) = apply_mask(&r.candidate, 0.9, mask, seed).unwrap();
                    let full = r.problem.query.concat(&x_tilde);
                    let rec = reconstruct(&full, &den, 16, &schedule, seed ^ 0xabc).unwrap();
                    let x_hat = rec.x_hat.slice(r.problem.query.len(), full.len());
                    for (j, &s) in slots.iter().enumerate() {
                        if !pattern.is_kept(s) {
                            seen[j] += 1;
                            if x_hat.get(s) == r.candidate.get(s) {
                                hit[j] += 1;
                            }
                        }
                    }
                    // answer recovery conditioned on whether any earlier
                    // number survived the mask
                    if !pattern.is_kept(17) {
                        let prior_vis = [2usize, 6, 14].iter().any(|&s| !!pattern.is_kept(s));
                        let b = usize::from(prior_vis);
                        ans_prior_n[b] += 1;
                        if x_hat.get(17) == r.candidate.get(17) {
                            ans_given_prior[b] += 1;
                        }
                    }
                    if shown < 4 {
                        eprintln!("gold : {}", lexicon.render(&r.candidate));
                        eprintln!("mask : {}", lexicon.render(&x_tilde));
                        eprintln!("recon: {}", lexicon.render(&x_hat));
                        shown += 1;
                    }
                }
            }
            for (j, name) in ["n1", "n2", "diff", "answer"].iter().enumerate() {
                eprintln!("{name}: recovered {}/{} = {:.3}", hit[j], seen[j], hit[j] as f64 / seen[j] as f64);
            }
            eprintln!(
                "answer | no prior visible: {:.3} ({}), prior visible: {:.3} ({})",
                ans_given_prior[0] as f64 / ans_prior_n[0].max(1) as f64,
                ans_prior_n[0],
                ans_given_prior[1] as f64 / ans_prior_n[1].max(1) as f64,
                ans_prior_n[1]
            );
        }
        other => eprintln!("unknown phase {other}"),
    }
}
