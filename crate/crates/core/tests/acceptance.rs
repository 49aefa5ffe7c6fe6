//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use softhorn::corpus;
use softhorn::datagen::{
    audit, default_pools, gen_chain, gen_facts, gen_overlap, gen_single_rule, overlap_count, split,
    DatasetSplit, ExampleRecord, GenConfig, Group,
};
use softhorn::lpmln::{brute_force_query, brute_force_query_in, ground, query, OracleScope};
use softhorn::metrics::{ca_at_k, wbce_grad, wbce_loss, PredictionRecord, ToyConfig, ToyModel};
use softhorn::rules::{fact, parse_rule, Rule, RuleSet};
use softhorn::verbalize::{assemble_prompt, TemplateRegistry};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn household() -> Outcome {
    let start = Instant::now();
    let (rules, facts) = corpus::household().map_err(|e| e.to_string())?;
    let prog = ground(&rules.rules, &rules.registry, &facts).map_err(|e| e.to_string())?;
    let p = |pred: &str, s: &str, o: &str| query(&prog, &fact(pred, s, o)).unwrap().probability;
    let t1 = p("spouse", "Laure", "Mike");
    let t2 = p("spouse", "Anne", "Mark");
    let t3 = p("negspouse", "Anne", "Mike");
    let elapsed = start.elapsed();
    check(
        (t1 - 0.7).abs() <= 1e-3
            && (t2 - 0.1).abs() <= 1e-3
            && t3 >= 0.885
            && within(elapsed, Duration::from_secs(1)),
        format!("test1 {t1:.4}, test2 {t2:.4}, test3 not married {t3:.4}, {elapsed:.2?}"),
    )
}

fn conflicting_conclusions() -> Outcome {
    let start = Instant::now();
    let mut reg = corpus::registry();
    let rules = [
        "0.64 :: child(A,B) -> negspouse(A,B)",
        "0.3 :: relative(A,B) -> spouse(A,B)",
    ]
    .iter()
    .map(|r| parse_rule(r, &mut reg))
    .collect::<Result<Vec<Rule>, _>>()
    .map_err(|e| e.to_string())?;
    let facts = [
        fact("negparent", "Eve", "Carl"),
        fact("child", "Eve", "David"),
        fact("relative", "Eve", "David"),
    ];
    let prog = ground(&rules, &reg, &facts).map_err(|e| e.to_string())?;
    let neg = query(&prog, &fact("negspouse", "Eve", "David"))
        .unwrap()
        .probability;
    let pos = query(&prog, &fact("spouse", "Eve", "David"))
        .unwrap()
        .probability;
    let elapsed = start.elapsed();
    check(
        (neg - 0.55).abs() <= 5e-3
            && (pos - 0.134).abs() <= 5e-3
            && within(elapsed, Duration::from_secs(1)),
        format!("negspouse {neg:.4}, spouse {pos:.4}, {elapsed:.2?}"),
    )
}

fn single_rule_identity() -> Outcome {
    let rules = corpus::single_rules();
    let pools = default_pools();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut draws = 0;
    while checked < 50 {
        draws += 1;
        if draws > 10_000 {
            return Err(format!("only {checked} eligible contexts in {draws} draws"));
        }
        let rule = rules.rules.choose(&mut rng).unwrap();
        let facts =
            gen_facts(rule, 5, &rules.registry, &pools, &mut rng).map_err(|e| e.to_string())?;
        let prog = ground(std::slice::from_ref(rule), &rules.registry, &facts)
            .map_err(|e| e.to_string())?;
        if prog.triggered_count() != 1 {
            continue;
        }
        let inst = prog
            .rule_instances(0)
            .find(|i| i.body.iter().all(|b| prog.is_fact(*b)))
            .unwrap();
        let head = prog.atom(inst.head.unwrap()).clone();
        let neg = rules.registry.negate(&head).unwrap();
        let clash = [&head, &neg, &head.swapped(), &neg.swapped()];
        if facts.iter().any(|f| clash.contains(&f)) {
            continue;
        }
        let p = query(&prog, &head).unwrap().probability;
        worst = worst.max((p - rule.confidence).abs());
        checked += 1;
    }
    check(
        worst < 1e-9,
        format!("{checked} contexts, max |P - c| = {worst:.1e}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let shape = common::Shape {
        hard: true,
        conflicts: true,
        max_base: 12,
    };
    let mut worst: f64 = 0.0;
    let mut atoms = 0;
    for _ in 0..500 {
        let rp = common::random_program(&mut rng, shape);
        for atom in rp.program.herbrand_base() {
            let fast = query(&rp.program, atom)
                .map_err(|e| e.to_string())?
                .probability;
            let slow = brute_force_query_in(&rp.program, atom, OracleScope::FullBase)
                .map_err(|e| e.to_string())?
                .probability;
            worst = worst.max((fast - slow).abs());
            atoms += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-12 && within(elapsed, Duration::from_secs(120)),
        format!("500 programs, {atoms} atoms, max diff {worst:.1e}, {elapsed:.2?}"),
    )
}

fn overlap_counts() -> Outcome {
    let rules = corpus::overlap_rules();
    let mut seen = Vec::new();
    for r in 2..=5 {
        let subset = &rules.rules[..r];
        let cfg = GenConfig {
            n: 2 * overlap_count(r),
            seed: r as u64,
            ..GenConfig::default()
        };
        let groups = gen_overlap(subset, &rules.registry, &cfg).map_err(|e| e.to_string())?;
        let sizes: Vec<usize> = groups.iter().map(|g| g.examples.len()).collect();
        if sizes.iter().any(|&s| s != sizes[0]) {
            return Err(format!("|R| = {r}: uneven batches {sizes:?}"));
        }
        seen.push(sizes[0]);
    }
    check(
        seen == [18, 32, 54, 92],
        format!("per-context counts {seen:?}"),
    )
}

struct Slice {
    single: DatasetSplit,
    overlap: DatasetSplit,
    chain: DatasetSplit,
    records: Vec<ExampleRecord>,
    registry: softhorn::rules::Registry,
}

fn records(
    data: &DatasetSplit,
    templates: &TemplateRegistry,
    rules: &RuleSet,
) -> Vec<ExampleRecord> {
    data.parts()
        .iter()
        .flat_map(|(_, g)| g.iter().flat_map(|g| &g.examples))
        .map(|e| e.to_record(templates, &rules.registry).unwrap())
        .collect()
}

fn build_slice() -> Result<Slice, String> {
    let templates = TemplateRegistry::parse(corpus::TEMPLATES).map_err(|e| e.to_string())?;
    let single_rules = corpus::single_rules();
    let mut single = Vec::new();
    for rule in &single_rules.rules {
        let cfg = GenConfig {
            n: 216,
            seed: 1,
            ..GenConfig::default()
        };
        single.extend(
            gen_single_rule(rule, &single_rules.registry, &cfg).map_err(|e| e.to_string())?,
        );
    }
    let single = split(single, [0.8, 0.1, 0.1], 1).map_err(|e| e.to_string())?;

    let overlap_rules = corpus::overlap_rules();
    let cfg = GenConfig {
        n: 92 * 33,
        seed: 2,
        split_ratios: [0.7, 0.1, 0.2],
        ..GenConfig::default()
    };
    let overlap = gen_overlap(&overlap_rules.rules, &overlap_rules.registry, &cfg)
        .map_err(|e| e.to_string())?;
    let overlap = split(overlap, cfg.split_ratios, 2).map_err(|e| e.to_string())?;

    let chain_rules = corpus::chain_rules();
    let cfg = GenConfig {
        n: 3600,
        seed: 3,
        split_ratios: [0.7, 0.1, 0.2],
        ..GenConfig::default()
    };
    let chain =
        gen_chain(&chain_rules.rules, &chain_rules.registry, 3, &cfg).map_err(|e| e.to_string())?;
    let chain = split(chain, cfg.split_ratios, 3).map_err(|e| e.to_string())?;

    let mut all = records(&single, &templates, &single_rules);
    all.extend(records(&overlap, &templates, &overlap_rules));
    all.extend(records(&chain, &templates, &chain_rules));
    // Round trip through JSONL so the audit sees exactly what would be stored.
    let stored: Vec<ExampleRecord> = all
        .iter()
        .map(|r| serde_json::from_str(&serde_json::to_string(r).unwrap()).unwrap())
        .collect();
    Ok(Slice {
        single,
        overlap,
        chain,
        records: stored,
        registry: corpus::registry(),
    })
}

fn audit_slice(slice: &Slice, build_time: Duration) -> Outcome {
    let start = Instant::now();
    let report = audit(&slice.records, &slice.registry, 24).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed() + build_time;
    check(
        slice.records.len() >= 10_000
            && report.checked == slice.records.len()
            && report.passed()
            && report.law_checked > 0
            && within(elapsed, Duration::from_secs(300)),
        format!(
            "{} examples, {} mismatches, {} law checks, {} violations, {elapsed:.2?}",
            report.checked,
            report.mismatches.len(),
            report.law_checked,
            report.law_violations.len()
        ),
    )
}

fn ratio_ok(data: &DatasetSplit, ratios: [f64; 3]) -> (bool, String) {
    let sizes = [data.train.len(), data.dev.len(), data.test.len()];
    let total: usize = sizes.iter().sum();
    let ok = sizes
        .iter()
        .zip(ratios)
        .all(|(&s, r)| (s as f64 - r * total as f64).abs() <= 1.0);
    (ok, format!("{}/{}/{}", sizes[0], sizes[1], sizes[2]))
}

fn disjoint(data: &DatasetSplit) -> bool {
    let keys = |g: &[Group]| -> std::collections::HashSet<String> {
        g.iter()
            .flat_map(|g| g.examples.iter())
            .map(|e| {
                format!(
                    "{:?}{:?}",
                    e.rules.iter().map(|r| &r.id).collect::<Vec<_>>(),
                    e.facts
                )
            })
            .collect()
    };
    let (a, b, c) = (keys(&data.train), keys(&data.dev), keys(&data.test));
    a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c)
}

fn split_ratios(slice: &Slice) -> Outcome {
    let (s_ok, s) = ratio_ok(&slice.single, [0.8, 0.1, 0.1]);
    let (o_ok, o) = ratio_ok(&slice.overlap, [0.7, 0.1, 0.2]);
    let (c_ok, c) = ratio_ok(&slice.chain, [0.7, 0.1, 0.2]);
    let sep = disjoint(&slice.single) && disjoint(&slice.overlap) && disjoint(&slice.chain);
    check(
        s_ok && o_ok && c_ok && sep,
        format!("contexts single {s}, overlap {o}, chain {c}; splits disjoint: {sep}"),
    )
}

fn verbalizer_golden() -> Outcome {
    let templates = TemplateRegistry::parse(corpus::TEMPLATES).map_err(|e| e.to_string())?;
    let mut reg = corpus::registry();
    let rule = parse_rule("1.0 :: child(A,C) & parent(C,B) -> spouse(A,B)", &mut reg)
        .map_err(|e| e.to_string())?;
    let facts = [
        fact("negparent", "Eve", "Carl"),
        fact("child", "Eve", "David"),
        fact("parent", "Carl", "Bob"),
        fact("child", "Alice", "Carl"),
    ];
    let context = templates
        .context(&reg, &[rule], &facts, None)
        .map_err(|e| e.to_string())?;
    let hypothesis = templates
        .fact(&reg, &fact("spouse", "Alice", "Bob"))
        .map_err(|e| e.to_string())?;
    let prompt = assemble_prompt(&context, &hypothesis).map_err(|e| e.to_string())?;
    let expected = "<s>The parent of Eve is not Carl. The child of Eve is David. If the child of the \
first person is the third person, and the parent of the third person is the second person, then the \
first person is the spouse of the second person. The parent of Carl is Bob. The child of Alice is \
Carl.</s></s>The spouse of Alice is Bob.</s>";
    check(
        prompt.encoded == expected,
        format!(
            "{} bytes{}",
            prompt.encoded.len(),
            if prompt.encoded == expected {
                ", identical".to_string()
            } else {
                format!(": got {:?}", prompt.encoded)
            }
        ),
    )
}

fn loss_contract() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 1..=9 {
        for j in 1..=9 {
            let (f, w) = (i as f64 / 10.0, j as f64 / 10.0);
            let h = 1e-5;
            let fd = (wbce_loss(f + h, w) - wbce_loss(f - h, w)) / (2.0 * h);
            let g = wbce_grad(f, w);
            worst = worst.max((fd - g).abs() / g.abs().max(1.0));
        }
    }
    let rules = corpus::single_rules();
    let rule = rules.get("s05").ok_or("missing s05")?;
    let templates = TemplateRegistry::parse(corpus::TEMPLATES).map_err(|e| e.to_string())?;
    let cfg = GenConfig {
        n: 800,
        seed: 9,
        ..GenConfig::default()
    };
    let groups = gen_single_rule(rule, &rules.registry, &cfg).map_err(|e| e.to_string())?;
    let data: Vec<ExampleRecord> = groups
        .iter()
        .flat_map(|g| &g.examples)
        .map(|e| e.to_record(&templates, &rules.registry).unwrap())
        .collect();
    let outcome = ToyModel::train(&data, &ToyConfig::default()).map_err(|e| e.to_string())?;
    let h3: Vec<f64> = data
        .iter()
        .filter(|r| r.meta.hyp_class == "h3")
        .map(|r| outcome.model.predict(r))
        .collect();
    let mean = h3.iter().sum::<f64>() / h3.len() as f64;
    let oracle: Vec<PredictionRecord> = data
        .iter()
        .map(|r| PredictionRecord {
            example_id: r.id.clone(),
            predicted_prob: r.weight,
            target_weight: r.weight,
            target_label: r.label,
        })
        .collect();
    let ca = ca_at_k(&oracle, 0.01).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        worst < 1e-6 && (mean - 0.825).abs() <= 0.05 && ca == 1.0 && within(elapsed, Duration::from_secs(60)),
        format!(
            "grad rel err {worst:.1e}, h3 mean prediction {mean:.4} over {} examples, oracle ca@0.01 {ca}, {elapsed:.2?}",
            h3.len()
        ),
    )
}

fn soft_chain() -> Outcome {
    let mut reg = common::registry();
    let rules = vec![
        parse_rule("0.7 :: p(A,B) -> q(A,B)", &mut reg).unwrap(),
        parse_rule("0.7 :: q(A,B) -> r(A,B)", &mut reg).unwrap(),
    ];
    let facts = [fact("p", "a", "b")];
    let prog = ground(&rules, &reg, &facts).map_err(|e| e.to_string())?;
    let c = fact("r", "a", "b");
    let p = query(&prog, &c).unwrap().probability;
    let o = brute_force_query(&prog, &c)
        .map_err(|e| e.to_string())?
        .probability;
    let w = (0.7f64 / 0.3).ln();
    let closed = (2.0 * w).exp() / (w.exp() + w.exp() + (2.0 * w).exp());
    check(
        (p - 0.5385).abs() <= 1e-3 && (p - o).abs() <= 1e-12 && (p - closed).abs() <= 1e-12,
        format!("P = {p:.6}, oracle {o:.6}, closed form {closed:.6}"),
    )
}

fn main() -> ExitCode {
    let build_start = Instant::now();
    let slice = build_slice();
    let build_time = build_start.elapsed();
    let criteria: Vec<Criterion> = vec![
        ("household context", Box::new(household)),
        ("conflicting conclusions", Box::new(conflicting_conclusions)),
        ("single-rule identity", Box::new(single_rule_identity)),
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("overlap count formula", Box::new(overlap_counts)),
        (
            "dataset self-consistency audit",
            Box::new(|| audit_slice(slice.as_ref().map_err(Clone::clone)?, build_time)),
        ),
        (
            "split ratios",
            Box::new(|| split_ratios(slice.as_ref().map_err(Clone::clone)?)),
        ),
        ("verbalizer golden prompt", Box::new(verbalizer_golden)),
        ("loss contract", Box::new(loss_contract)),
        ("soft chain anchor", Box::new(soft_chain)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
